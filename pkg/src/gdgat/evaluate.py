"""Evaluation protocol: exclusion-aware micro-F1, macro-F1, Gap, per-class
and distance-bucketed scores, plus the ablation variants.

Exclusion semantics (pinned by tests): pairs whose gold label is the
excluded one are dropped entirely; a prediction of the excluded label on a
retained pair counts as a false negative of the gold class only, never as
a false positive anywhere.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, EventPairInstance, LabelSet
from .graph import build_graph
from .probs import ProbTable


def effective_threads(requested: int) -> int:
    """Worker count after applying the GDGAT_THREADS cap."""
    cap = os.environ.get("GDGAT_THREADS")
    n = max(1, int(requested))
    if cap:
        n = max(1, min(n, int(cap)))
    return n


@dataclass
class ConfusionMatrix:
    """Rows = gold, columns = predicted, in label-set order."""

    labels: tuple[str, ...]
    counts: np.ndarray  # [C, C] nonnegative integers

    @staticmethod
    def from_predictions(golds: Sequence[str], preds: Sequence[str],
                         label_set: LabelSet) -> "ConfusionMatrix":
        c = label_set.size
        counts = np.zeros((c, c), dtype=np.int64)
        for g, p in zip(golds, preds):
            counts[label_set.index(g), label_set.index(p)] += 1
        return ConfusionMatrix(label_set.labels, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _tp_fp_fn(confusion: ConfusionMatrix, excluded: str | None):
    labels = confusion.labels
    m = confusion.counts
    keep = [i for i, lbl in enumerate(labels) if lbl != excluded]
    if excluded is not None and excluded not in labels:
        raise ValueError(f"excluded label {excluded!r} not in confusion labels")
    retained = int(m[keep, :].sum())
    if retained == 0:
        raise ValueError("no pairs remain after applying the label exclusion")
    stats = {}
    for ci in keep:
        tp = int(m[ci, ci])
        fn = int(m[ci, :].sum() - tp)  # includes predictions of the excluded label
        fp = int(sum(m[g, ci] for g in keep if g != ci))  # excluded gold rows dropped
        stats[labels[ci]] = (tp, fp, fn)
    return stats


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


def micro_f1(confusion: ConfusionMatrix, excluded: str | None = None) -> float:
    """Globally pooled F1 with the excluded label removed from accounting."""
    stats = _tp_fp_fn(confusion, excluded)
    tp = sum(s[0] for s in stats.values())
    fp = sum(s[1] for s in stats.values())
    fn = sum(s[2] for s in stats.values())
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return _f1(p, r)


def per_class_prf(confusion: ConfusionMatrix, excluded: str | None = None
                  ) -> dict[str, tuple[float, float, float]]:
    out = {}
    for lbl, (tp, fp, fn) in _tp_fp_fn(confusion, excluded).items():
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        out[lbl] = (p, r, _f1(p, r))
    return out


def macro_f1(confusion: ConfusionMatrix, excluded: str | None = None) -> float:
    """Unweighted mean of per-class F1; absent classes contribute 0."""
    per = per_class_prf(confusion, excluded)
    return sum(f for _, _, f in per.values()) / len(per)


def distance_bucket_f1(predictions, dataset: Dataset, max_distance: int = 4
                       ) -> dict[str, float]:
    """Micro-F1 per exact distance, distances beyond max merged into an open
    bucket keyed "<max+1>+".  Buckets with no scorable pairs are absent."""
    excluded = dataset.label_set.excluded_for_micro
    groups: dict[str, list] = {}
    for pred in predictions:
        pair, plabel = pred[0], pred[1]
        key = str(pair.distance) if pair.distance <= max_distance else f"{max_distance + 1}+"
        groups.setdefault(key, []).append((pair.gold, plabel))
    out = {}
    for key, rows in groups.items():
        conf = ConfusionMatrix.from_predictions(
            [g for g, _ in rows], [p for _, p in rows], dataset.label_set
        )
        try:
            out[key] = micro_f1(conf, excluded)
        except ValueError:
            continue  # only excluded-gold pairs in this bucket
    return out


@dataclass
class EvalReport:
    variant: str
    micro_f1: float
    macro_f1: float
    gap: float
    per_class: dict[str, dict[str, float]]
    distance_buckets: dict[str, float]
    distance_bucket_counts: dict[str, int]
    confusion_labels: list[str]
    confusion: list[list[int]]
    n_pairs: int
    config_echo: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        return EvalReport(**json.loads(text))

    @staticmethod
    def load(path) -> "EvalReport":
        return EvalReport.from_json(Path(path).read_text(encoding="utf-8"))

    def render_text(self) -> str:
        lines = [
            f"variant: {self.variant}   pairs: {self.n_pairs}",
            f"micro-F1: {self.micro_f1:.4f}   macro-F1: {self.macro_f1:.4f}   "
            f"Gap: {self.gap:+.4f}",
            "",
            f"{'label':<14}{'P':>8}{'R':>8}{'F1':>8}",
        ]
        for lbl, prf in self.per_class.items():
            lines.append(
                f"{lbl:<14}{prf['precision']:>8.4f}{prf['recall']:>8.4f}{prf['f1']:>8.4f}"
            )
        if self.distance_buckets:
            lines.append("")
            keys = sorted(self.distance_buckets, key=lambda k: (len(k), k))
            lines.append("distance " + "".join(f"{k:>9}" for k in keys))
            lines.append("micro-F1 " + "".join(f"{self.distance_buckets[k]:>9.4f}" for k in keys))
        return "\n".join(lines) + "\n"


def evaluate_predictions(dataset: Dataset, predictions, variant: str = "full",
                         max_distance: int = 4, config_echo: dict | None = None,
                         exclude_for_macro: bool = True) -> EvalReport:
    """Score a prediction list [(pair, label, ...), ...] against gold."""
    if not predictions:
        raise ValueError("cannot evaluate an empty prediction list")
    excluded = dataset.label_set.excluded_for_micro
    golds = [p[0].gold for p in predictions]
    preds = [p[1] for p in predictions]
    conf = ConfusionMatrix.from_predictions(golds, preds, dataset.label_set)
    micro = micro_f1(conf, excluded)
    macro = macro_f1(conf, excluded if exclude_for_macro else None)
    per = {
        lbl: {"precision": p, "recall": r, "f1": f}
        for lbl, (p, r, f) in per_class_prf(conf, excluded).items()
    }
    counts: dict[str, int] = {}
    for pred in predictions:
        d = pred[0].distance
        key = str(d) if d <= max_distance else f"{max_distance + 1}+"
        counts[key] = counts.get(key, 0) + 1
    return EvalReport(
        variant=variant,
        micro_f1=micro,
        macro_f1=macro,
        gap=micro - macro,
        per_class=per,
        distance_buckets=distance_bucket_f1(predictions, dataset, max_distance),
        distance_bucket_counts=counts,
        confusion_labels=list(dataset.label_set.labels),
        confusion=conf.counts.tolist(),
        n_pairs=len(predictions),
        config_echo=config_echo or {},
    )


def predict_dataset(params, dataset: Dataset, prob_table: ProbTable, threads: int = 1):
    """Model predictions for every labeled pair, document by document."""
    from .model import predict  # local import: model pulls in kernels

    cfg = params.node_feature_config()
    by_doc = dataset.pairs_by_doc()
    doc_ids = sorted(by_doc)

    def run(doc_id):
        graph = build_graph(dataset.documents[doc_id], prob_table, cfg)
        return predict(params, graph, by_doc[doc_id])

    n_workers = effective_threads(threads)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, doc_ids))
    else:
        results = [run(d) for d in doc_ids]
    out = []
    for chunk in results:
        out.extend(chunk)
    return out


def table_argmax_predictions(dataset: Dataset, prob_table: ProbTable):
    """Standalone-classifier predictions: argmax of each pair's own edge
    distribution, no graph and no training."""
    labels = dataset.label_set.labels
    out = []
    for pair in dataset.pairs:
        p = prob_table.get(pair.doc_id, pair.i, pair.j)
        if p is None:
            raise KeyError(
                f"probability table lacks pair ({pair.doc_id!r}, {pair.i}, {pair.j})"
            )
        out.append((pair, labels[int(np.argmax(p))], p))
    return out


VARIANTS = ("full", "wo_pi", "wo_gd", "wo_lp")


def run_ablation(train_ds: Dataset, dev_ds: Dataset, test_ds: Dataset,
                 prob_table: ProbTable, model_cfg, train_cfg, variant: str,
                 max_distance: int = 4) -> EvalReport:
    """Run one pipeline variant end to end and score the test split.

    full  - complete pipeline;
    wo_pi - every edge distribution hardened to its argmax one-hot before
            training and inference;
    wo_gd - argmax of the pair's own distribution, no graph, no training;
    wo_lp - no probability features at all: attention scores and the
            classifier input drop their edge segments.
    """
    from .train import config_dict, train as fit  # local import: avoids a cycle

    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    echo = {"variant": variant, "train_config": config_dict(train_cfg),
            "model_config": model_cfg.__dict__.copy()}

    if variant == "wo_gd":
        preds = table_argmax_predictions(test_ds, prob_table)
        return evaluate_predictions(test_ds, preds, variant, max_distance, echo)

    table = prob_table.hardened() if variant == "wo_pi" else prob_table
    cfg = model_cfg
    if variant == "wo_lp":
        from dataclasses import replace

        cfg = replace(model_cfg, use_edge_features=False)
        echo["model_config"] = cfg.__dict__.copy()
    params, _history = fit(train_ds, dev_ds, table, cfg, train_cfg)
    preds = predict_dataset(params, test_ds, table, threads=train_cfg.threads)
    return evaluate_predictions(test_ds, preds, variant, max_distance, echo)


def comparison_table(reports: dict[str, EvalReport]) -> str:
    """Side-by-side text table over ablation variants."""
    keys = [v for v in VARIANTS if v in reports] + [
        v for v in reports if v not in VARIANTS
    ]
    bucket_keys = sorted(
        {k for r in reports.values() for k in r.distance_buckets},
        key=lambda k: (len(k), k),
    )
    lines = [f"{'variant':<10}{'micro-F1':>10}{'macro-F1':>10}{'Gap':>9}"
             + "".join(f"{('d=' + b):>9}" for b in bucket_keys)]
    for v in keys:
        r = reports[v]
        row = f"{v:<10}{r.micro_f1:>10.4f}{r.macro_f1:>10.4f}{r.gap:>+9.4f}"
        for b in bucket_keys:
            val = r.distance_buckets.get(b)
            row += f"{val:>9.4f}" if val is not None else f"{'-':>9}"
        lines.append(row)
    return "\n".join(lines) + "\n"
