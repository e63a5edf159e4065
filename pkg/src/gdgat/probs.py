"""Class-probability edge features: loading, validation, synthesis.

A distribution here is a 1-D float64 simplex vector of width C (one entry
per relation label).  Tables map ordered event pairs to distributions and
are frozen inputs to the graph model; whatever classifier produced them
trains separately and never joins the loss.

Interchange format (JSON Lines): a header line then one line per ordered
pair, carrying either probabilities or raw logits:

    {"label_set": ["BEFORE", ...], "provenance": "exporter-id"}
    {"doc": "d1", "i": 0, "j": 1, "probs": [0.7, 0.2, 0.05, 0.05]}
    {"doc": "d1", "i": 1, "j": 0, "logits": [2.0, 1.0, 0.0, 0.0]}

Label order in every row follows the header.  Self-pairs (i == j) are
forbidden; probability rows must sum to 1 within 1e-4 and are renormalized
to the exact simplex on load.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np

from .data import Dataset, LabelSet
from .errors import FormatError
from .tensor import Tensor, check_finite, stable_softmax

LOAD_SUM_TOLERANCE = 1e-4
RUNTIME_SUM_TOLERANCE = 1e-6

PairKey = tuple[str, int, int]


def check_distribution(p: Tensor, tol: float = RUNTIME_SUM_TOLERANCE) -> Tensor:
    """Validate a probability vector: entries in [0, 1], sum within tol of 1."""
    p = np.asarray(p, dtype=np.float64)
    check_finite(p, "probability distribution")
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"distribution must be a 1-D vector of width >= 2, got shape {p.shape}")
    if (p < 0.0).any() or (p > 1.0).any():
        raise ValueError(f"distribution entries outside [0, 1]: {p}")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"distribution sums to {p.sum()!r}, beyond tolerance {tol}")
    return p


def softmax_from_logits(logits: Tensor, label_set: LabelSet | None = None) -> Tensor:
    """Convert raw classifier logits into a probability distribution."""
    logits = np.asarray(logits, dtype=np.float64)
    if label_set is not None and logits.shape != (label_set.size,):
        raise ValueError(
            f"logit width {logits.shape} does not match label set of size {label_set.size}"
        )
    return check_distribution(stable_softmax(logits))


def harden(p: Tensor) -> Tensor:
    """One-hot at the argmax; ties break toward the lowest label index."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    out[int(np.argmax(p))] = 1.0
    return out


class ProbTable:
    """Immutable-by-convention map from ordered pairs to distributions."""

    def __init__(self, label_set: LabelSet, entries: dict[PairKey, Tensor], provenance: str = ""):
        self.label_set = label_set
        self.entries = entries
        self.provenance = provenance

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: PairKey) -> bool:
        return key in self.entries

    def get(self, doc_id: str, i: int, j: int) -> Tensor | None:
        return self.entries.get((doc_id, i, j))

    def require(self, doc_id: str, i: int, j: int) -> Tensor:
        p = self.entries.get((doc_id, i, j))
        if p is None:
            raise KeyError(f"probability table has no entry for pair ({doc_id!r}, {i}, {j})")
        return p

    def hardened(self) -> "ProbTable":
        return ProbTable(
            self.label_set,
            {k: harden(v) for k, v in self.entries.items()},
            provenance=self.provenance + "+hardened",
        )

    def iter_rows(self) -> Iterator[tuple[PairKey, Tensor]]:
        for key in sorted(self.entries):
            yield key, self.entries[key]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {"label_set": list(self.label_set.labels), "provenance": self.provenance}
            fh.write(json.dumps(header) + "\n")
            for (doc, i, j), p in self.iter_rows():
                row = {"doc": doc, "i": i, "j": j, "probs": [float(x) for x in p]}
                fh.write(json.dumps(row) + "\n")


def merge_tables(tables) -> ProbTable:
    """Combine tables over disjoint pair keys (e.g. one per corpus split)."""
    tables = list(tables)
    if not tables:
        raise ValueError("merge_tables needs at least one table")
    label_set = tables[0].label_set
    entries: dict[PairKey, Tensor] = {}
    for t in tables:
        if t.label_set != label_set:
            raise ValueError("cannot merge tables with different label sets")
        clash = entries.keys() & t.entries.keys()
        if clash:
            raise ValueError(f"duplicate pair keys while merging tables: {sorted(clash)[:3]}")
        entries.update(t.entries)
    return ProbTable(label_set, entries, "+".join(t.provenance for t in tables))


def load_prob_table(path, label_set: LabelSet) -> ProbTable:
    """Load and validate a probability interchange file."""
    path = Path(path)
    entries: dict[PairKey, Tensor] = {}
    provenance = ""
    with open(path, encoding="utf-8") as fh:
        header_seen = False
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", str(path), line_no)
            if not header_seen:
                if "label_set" not in obj:
                    raise FormatError("first line must be the header with 'label_set'", str(path), line_no)
                if list(obj["label_set"]) != list(label_set.labels):
                    raise FormatError(
                        f"header label order {obj['label_set']} does not match "
                        f"label set {list(label_set.labels)}",
                        str(path),
                        line_no,
                    )
                if "provenance" not in obj:
                    raise FormatError("header missing 'provenance'", str(path), line_no)
                provenance = str(obj["provenance"])
                header_seen = True
                continue

            try:
                key: PairKey = (str(obj["doc"]), int(obj["i"]), int(obj["j"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"malformed row: {exc}", str(path), line_no)
            if key[1] == key[2]:
                raise FormatError(f"self-pair forbidden: {key}", str(path), line_no)
            if key in entries:
                raise FormatError(f"duplicate entry for pair {key}", str(path), line_no)

            has_probs, has_logits = "probs" in obj, "logits" in obj
            if has_probs == has_logits:
                raise FormatError(
                    f"row for pair {key} must carry exactly one of 'probs' or 'logits'",
                    str(path),
                    line_no,
                )
            vec = np.asarray(obj["probs"] if has_probs else obj["logits"], dtype=np.float64)
            if vec.shape != (label_set.size,):
                raise FormatError(
                    f"row for pair {key} has width {vec.size}, expected {label_set.size}",
                    str(path),
                    line_no,
                )
            if has_logits:
                p = softmax_from_logits(vec, label_set)
            else:
                try:
                    check_distribution(vec, tol=LOAD_SUM_TOLERANCE)
                except ValueError as exc:
                    raise FormatError(f"pair {key}: {exc}", str(path), line_no)
                p = vec / vec.sum()  # renormalize to the exact simplex
            entries[key] = p
    if not header_seen:
        raise FormatError("empty probability file (header required)", str(path), 1)
    return ProbTable(label_set, entries, provenance)


def synth_prob_table(
    dataset: Dataset,
    sharpness: float,
    flip_rate: float,
    seed: int,
    noise_std: float | None = None,
) -> ProbTable:
    """Generate distributions for every ordered event pair of every document.

    Each pair gets softmax(sharpness * onehot(label) + noise) where label is
    the pair's gold with probability 1 - flip_rate, else a uniformly random
    wrong label.  Unlabeled ordered pairs fall back to the reverse pair's
    gold, then to a random label.  Noise defaults to sharpness / 8 standard
    deviation, so sharpness -> 0 degenerates to the uniform distribution and
    high sharpness mimics confident near-one-hot predictions.
    """
    if sharpness <= 0:
        raise ValueError(f"sharpness must be positive, got {sharpness}")
    if not 0.0 <= flip_rate <= 1.0:
        raise ValueError(f"flip_rate must lie in [0, 1], got {flip_rate}")
    if noise_std is None:
        noise_std = sharpness / 8.0
    labels = dataset.label_set
    c = labels.size
    rng = np.random.default_rng(seed)
    gold_by_pair = {(p.doc_id, p.i, p.j): labels.index(p.gold) for p in dataset.pairs}

    entries: dict[PairKey, Tensor] = {}
    for doc_id in sorted(dataset.documents):
        n = len(dataset.documents[doc_id])
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                label = gold_by_pair.get((doc_id, i, j))
                if label is None:
                    label = gold_by_pair.get((doc_id, j, i))
                if label is None:
                    label = int(rng.integers(c))
                if flip_rate > 0.0 and rng.random() < flip_rate:
                    label = (label + 1 + int(rng.integers(c - 1))) % c
                logits = sharpness * np.eye(c)[label] + noise_std * rng.standard_normal(c)
                entries[(doc_id, i, j)] = stable_softmax(logits)

    prov = f"synth(sharpness={sharpness}, flip_rate={flip_rate}, seed={seed}, noise_std={noise_std})"
    return ProbTable(labels, entries, prov)
