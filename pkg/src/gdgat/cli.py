"""Command-line entry point.

Subcommands: train, eval, ablate, synth, gradcheck, validate.  A run is
described by a JSON config file (nested key/value); any flag given on the
command line overrides the file.  Every artifact written embeds the exact
resolved configuration and seed that produced it.

Exit codes: 0 success, 2 usage, 3 missing file, 4 format violation,
5 dimension mismatch, 6 numeric failure.  Failures print a single JSON
line to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import kernels
from .certify import certify_gradients
from .data import BUILTIN_LABEL_SETS, LabelSet, parse_corpus
from .errors import FormatError, NumericError, ShapeError
from .evaluate import (VARIANTS, comparison_table, evaluate_predictions,
                       predict_dataset, run_ablation)
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .probs import load_prob_table, merge_tables
from .synth import PROFILES, synth_bundle
from .train import TrainConfig, save_history, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_FORMAT = 4
EXIT_DIMENSION = 5
EXIT_NUMERIC = 6

GRADCHECK_THRESHOLD = 1e-4


def _fail(code: int, kind: str, detail: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit": code, "detail": detail}) + "\n")
    return code


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"config is not valid JSON: {exc.msg}", path, exc.lineno)
    if not isinstance(cfg, dict):
        raise FormatError("config must be a JSON object", path)
    return cfg


def _resolve_labels(spec) -> LabelSet:
    if spec is None:
        return BUILTIN_LABEL_SETS["matres"]
    if isinstance(spec, str):
        if spec not in BUILTIN_LABEL_SETS:
            raise FormatError(
                f"unknown label set {spec!r}; builtins: {sorted(BUILTIN_LABEL_SETS)}"
            )
        return BUILTIN_LABEL_SETS[spec]
    return LabelSet.from_dict(spec)


def _merge_cli(cfg: dict, args) -> dict:
    """Command line wins over the config file."""
    over = {
        "train": args.train, "dev": args.dev, "test": getattr(args, "test", None),
        "out": args.out, "seed": args.seed, "labels": args.labels,
        "variant": getattr(args, "variant", None),
        "max_distance": getattr(args, "max_distance", None),
    }
    for key, val in over.items():
        if val is not None:
            cfg[key] = val
    if args.probs:
        cfg["probs"] = args.probs
    trainer = dict(cfg.get("trainer", {}))
    for key, flag in (("epochs", "epochs"), ("learning_rate", "lr"), ("threads", "threads")):
        val = getattr(args, flag, None)
        if val is not None:
            trainer[key] = val
    cfg["trainer"] = trainer
    cfg.setdefault("model", {})
    cfg.setdefault("seed", 0)
    return cfg


def _require(cfg: dict, keys) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise FormatError(f"run config is missing required keys: {missing}")


def _prob_paths(cfg) -> list[str]:
    probs = cfg.get("probs")
    if isinstance(probs, str):
        return [probs]
    return list(probs or [])


def _load_tables(cfg: dict, label_set: LabelSet):
    paths = _prob_paths(cfg)
    if not paths:
        raise FormatError("no probability table given (key 'probs' or --probs)")
    return merge_tables([load_prob_table(p, label_set) for p in paths])


def _configs(cfg: dict):
    model_cfg = ModelConfig(**cfg.get("model", {}))
    trainer = dict(cfg.get("trainer", {}))
    trainer.setdefault("seed", cfg.get("seed", 0))
    train_cfg = TrainConfig(**trainer)
    return model_cfg, train_cfg


def _config_echo(cfg: dict, model_cfg, train_cfg) -> dict:
    echo = dict(cfg)
    echo["model"] = asdict(model_cfg)
    echo["trainer"] = asdict(train_cfg)
    return echo


def _sha(echo: dict) -> str:
    return hashlib.sha256(json.dumps(echo, sort_keys=True).encode()).hexdigest()


def _cmd_train(args) -> int:
    cfg = _merge_cli(_load_config(args.config), args)
    _require(cfg, ("train", "dev", "out"))
    label_set = _resolve_labels(cfg.get("labels"))
    model_cfg, train_cfg = _configs(cfg)
    echo = _config_echo(cfg, model_cfg, train_cfg)

    train_ds = parse_corpus(cfg["train"], label_set, split="train")
    dev_ds = parse_corpus(cfg["dev"], label_set, split="dev")
    table = _load_tables(cfg, label_set)
    params, history = train(train_ds, dev_ds, table, model_cfg, train_cfg)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "checkpoint.json", run_config=echo, seed=train_cfg.seed)
    save_history(history, out / "history.jsonl", seed=train_cfg.seed, config_sha256=_sha(echo))
    (out / "run_config.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    best = max(h.dev_micro_f1 for h in history)
    print(f"trained {len(history)} epoch(s); best dev micro-F1 {best:.4f}; "
          f"checkpoint written to {out / 'checkpoint.json'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _merge_cli(_load_config(args.config), args)
    _require(cfg, ("test",))
    if not args.checkpoint:
        raise FormatError("eval needs --checkpoint")
    params = load_checkpoint(args.checkpoint)
    label_set = params.label_set
    test_ds = parse_corpus(cfg["test"], label_set, split="test")
    table = _load_tables(cfg, label_set)
    preds = predict_dataset(params, test_ds, table,
                            threads=cfg.get("trainer", {}).get("threads", 1))
    report = evaluate_predictions(
        test_ds, preds, variant=cfg.get("variant", "full"),
        max_distance=int(cfg.get("max_distance", 4)),
        config_echo={"checkpoint": str(args.checkpoint), "seed": cfg.get("seed")},
        exclude_for_macro=bool(cfg.get("macro_excludes_label", True)),
    )
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        report.save(out / "report.json")
    print(report.render_text())
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = _merge_cli(_load_config(args.config), args)
    _require(cfg, ("train", "dev", "test", "out"))
    label_set = _resolve_labels(cfg.get("labels"))
    model_cfg, train_cfg = _configs(cfg)
    echo = _config_echo(cfg, model_cfg, train_cfg)

    train_ds = parse_corpus(cfg["train"], label_set, split="train")
    dev_ds = parse_corpus(cfg["dev"], label_set, split="dev")
    test_ds = parse_corpus(cfg["test"], label_set, split="test")
    table = _load_tables(cfg, label_set)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for variant in VARIANTS:
        report = run_ablation(train_ds, dev_ds, test_ds, table, model_cfg, train_cfg,
                              variant, max_distance=int(cfg.get("max_distance", 4)))
        report.config_echo["run_config"] = echo
        report.save(out / f"report_{variant}.json")
        reports[variant] = report
    table_text = comparison_table(reports)
    (out / "comparison.txt").write_text(table_text, encoding="utf-8")
    print(table_text)
    return EXIT_OK


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = synth_bundle(
        args.profile, args.seed,
        basic_sharpness=args.sharpness, basic_flip_rate=args.flip_rate,
    )
    manifest = {
        "profile": args.profile, "seed": args.seed,
        "sharpness": args.sharpness, "flip_rate": args.flip_rate,
        "files": {},
    }
    for split, (ds, table) in bundle.items():
        corpus_path = out / f"corpus_{split}.jsonl"
        probs_path = out / f"probs_{split}.jsonl"
        ds.save(corpus_path)
        table.save(probs_path)
        manifest["files"][split] = {
            "corpus": corpus_path.name, "probs": probs_path.name,
            "pairs": len(ds.pairs), "documents": len(ds.documents),
        }
    (out / "synth_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {args.profile} corpus bundle to {out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    err = certify_gradients(seed=args.seed, eps=args.eps)
    ok = err < GRADCHECK_THRESHOLD
    print(f"max_rel_err={err:.3e} threshold={GRADCHECK_THRESHOLD:.0e} "
          f"backend={kernels.active_backend()} status={'ok' if ok else 'FAIL'}")
    if not ok:
        return _fail(EXIT_NUMERIC, "numeric",
                     f"gradient check failed: {err:.3e} >= {GRADCHECK_THRESHOLD:.0e}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    label_set = _resolve_labels(args.labels)
    checked = []
    if args.corpus:
        ds = parse_corpus(args.corpus, label_set)
        checked.append(f"corpus {args.corpus}: {len(ds.documents)} document(s), "
                       f"{len(ds.pairs)} pair(s)")
    for p in args.probs or []:
        table = load_prob_table(p, label_set)
        checked.append(f"probs {p}: {len(table)} entr(ies)")
    if not checked:
        raise FormatError("validate needs --corpus and/or --probs")
    print("\n".join(checked))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gdgat", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, test=False):
        p.add_argument("--config", help="JSON run config; flags override it")
        p.add_argument("--train", help="training corpus (JSONL)")
        p.add_argument("--dev", help="dev corpus (JSONL)")
        if test:
            p.add_argument("--test", help="test corpus (JSONL)")
        p.add_argument("--probs", action="append", help="probability table (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--labels", help="builtin label set name (matres | tb_dense)")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float, dest="lr")
        p.add_argument("--threads", type=int)
        p.add_argument("--max-distance", type=int, dest="max_distance")

    p = sub.add_parser("train", help="fit the model, write checkpoint + history")
    common(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a test split")
    common(p, test=True)
    p.add_argument("--checkpoint", help="checkpoint file from train")
    p.add_argument("--variant", help="variant tag recorded in the report")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="run full / wo_pi / wo_gd / wo_lp and compare")
    common(p, test=True)
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("synth", help="emit a synthetic corpus + probability tables")
    p.add_argument("--profile", choices=PROFILES, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sharpness", type=float, default=20.0,
                   help="basic profile: sharpness of synthesized distributions")
    p.add_argument("--flip-rate", type=float, default=0.0, dest="flip_rate",
                   help="basic profile: probability of a wrong top label")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("gradcheck", help="certify analytic gradients on a 4-node fixture")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("validate", help="format-check corpus / probability files")
    p.add_argument("--corpus")
    p.add_argument("--probs", action="append")
    p.add_argument("--labels", default="matres")
    p.set_defaults(fn=_cmd_validate)
    return ap


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING_FILE, "missing-file", str(exc))
    except FormatError as exc:
        return _fail(EXIT_FORMAT, "format", str(exc))
    except ShapeError as exc:
        return _fail(EXIT_DIMENSION, "dimension", str(exc))
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, "numeric", str(exc))
    except (KeyError, ValueError) as exc:
        return _fail(EXIT_FORMAT, "format", str(exc))


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
