"""Training loop: per-document gradient accumulation, Adam/SGD, early
stopping on the dev metric, reproducible for a fixed config and seed.

The batching unit is one document graph; gradients are the mean over the
document's labeled pairs, optionally averaged over a group of documents
before each step.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import json

import numpy as np

from .data import Dataset
from .errors import NumericError
from .evaluate import ConfusionMatrix, effective_threads, macro_f1, micro_f1, predict_dataset
from .graph import build_graph, build_type_vocab
from .model import ModelConfig, ModelParams, document_loss, init_model
from .probs import ProbTable


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    shuffle: bool = True
    early_stop_patience: int = 0  # 0 disables early stopping
    dev_metric: str = "micro_f1_excluding"
    accum_docs: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.dev_metric != "micro_f1_excluding":
            raise ValueError(f"unsupported dev metric {self.dev_metric!r}")


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_micro_f1: float
    dev_macro_f1: float
    wall_time: float  # seconds; kept in memory, not serialized


TrainHistory = list  # of EpochStats, one entry per completed epoch


def save_history(history: Sequence[EpochStats], path, seed: int,
                 config_sha256: str = "") -> None:
    """History file: JSON Lines, one epoch per line.

    Wall time is deliberately left out so identical runs produce identical
    bytes; each line carries the seed and a config digest instead.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps({
                "epoch": row.epoch,
                "train_loss": row.train_loss,
                "dev_micro_f1": row.dev_micro_f1,
                "dev_macro_f1": row.dev_macro_f1,
                "seed": seed,
                "config_sha256": config_sha256,
            }, sort_keys=True, separators=(",", ":")) + "\n")


def optimizer_step(params: Sequence, grads, state: dict, config: TrainConfig):
    """One update over the given parameters.

    grads may be None to use each parameter's accumulated .grad.  SGD is
    plain theta -= lr * g; Adam is the standard bias-corrected moment
    update.  Weight decay, when nonzero, is added to the gradient (L2).
    Returns (params, state); both are updated in place.
    """
    if grads is None:
        grads = [p.grad for p in params]
    lr = config.learning_rate
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        if config.weight_decay:
            g = g + config.weight_decay * p.data
        if config.optimizer == "sgd":
            p.data = p.data - lr * g
            continue
        s = state.setdefault(p.name, {
            "m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0,
        })
        s["t"] += 1
        s["m"] = config.beta1 * s["m"] + (1.0 - config.beta1) * g
        s["v"] = config.beta2 * s["v"] + (1.0 - config.beta2) * g * g
        m_hat = s["m"] / (1.0 - config.beta1 ** s["t"])
        v_hat = s["v"] / (1.0 - config.beta2 ** s["t"])
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return params, state


def _dev_metrics(params, dev_ds, prob_table, threads):
    preds = predict_dataset(params, dev_ds, prob_table, threads=threads)
    conf = ConfusionMatrix.from_predictions(
        [p[0].gold for p in preds], [p[1] for p in preds], dev_ds.label_set
    )
    excluded = dev_ds.label_set.excluded_for_micro
    return micro_f1(conf, excluded), macro_f1(conf, excluded)


def train(train_ds: Dataset, dev_ds: Dataset, prob_table: ProbTable,
          model_cfg: ModelConfig, train_cfg: TrainConfig,
          params: ModelParams | None = None):
    """Fit the model; returns (ModelParams, TrainHistory).

    Deterministic for a fixed config and seed: fixed initialization, fixed
    shuffle order, single-threaded parameter updates.  If early stopping
    triggers, the best-dev checkpoint is returned; otherwise the final one.
    """
    if not train_ds.pairs:
        raise ValueError("training split has no labeled pairs")
    if params is None:
        vocab = build_type_vocab(train_ds.documents)
        params = init_model(model_cfg, train_ds.label_set, vocab, seed=train_cfg.seed)
    node_cfg = params.node_feature_config()

    by_doc = train_ds.pairs_by_doc()
    doc_ids = sorted(by_doc)
    graphs = {d: build_graph(train_ds.documents[d], prob_table, node_cfg) for d in doc_ids}

    from . import autodiff as ad

    rng = np.random.default_rng(train_cfg.seed)
    state: dict = {}
    history: list[EpochStats] = []
    best_metric = -1.0
    best_values = None
    stale = 0
    group_size = max(1, train_cfg.accum_docs)
    stopped_early = False

    for epoch in range(1, train_cfg.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(doc_ids)) if train_cfg.shuffle else np.arange(len(doc_ids))
        loss_sum = 0.0
        pair_count = 0
        for start in range(0, len(order), group_size):
            group = [doc_ids[k] for k in order[start : start + group_size]]
            params.zero_grad()
            for doc_id in group:
                pairs = by_doc[doc_id]
                loss = document_loss(params, graphs[doc_id], pairs)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, document {doc_id!r}"
                    )
                ad.backward(loss)
                loss_sum += value * len(pairs)
                pair_count += len(pairs)
            if len(group) > 1:
                for p in params.parameters():
                    p.grad /= len(group)
            optimizer_step(params.parameters(), None, state, train_cfg)

        dev_micro, dev_macro = _dev_metrics(params, dev_ds, prob_table, train_cfg.threads)
        history.append(EpochStats(
            epoch=epoch,
            train_loss=loss_sum / pair_count,
            dev_micro_f1=dev_micro,
            dev_macro_f1=dev_macro,
            wall_time=time.perf_counter() - started,
        ))
        if dev_micro > best_metric:
            best_metric = dev_micro
            best_values = params.copy_values()
            stale = 0
        else:
            stale += 1
            if train_cfg.early_stop_patience and stale >= train_cfg.early_stop_patience:
                stopped_early = True
                break

    if stopped_early and best_values is not None:
        params.load_values(best_values)
    return params, history
