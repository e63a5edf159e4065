"""Per-document event graphs: complete, directed, no self-loops.

Every ordered pair of distinct events carries a probability distribution as
its edge feature.  Node features concatenate an order encoding (first half,
sinusoidal by default or a learned row) with a learned event-type embedding
(second half); events may append externally computed extras.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Event
from .errors import ShapeError
from .probs import ProbTable
from .tensor import Tensor


@dataclass(frozen=True)
class NodeFeatureConfig:
    d_h: int
    type_vocab: Mapping[str, int]
    use_learned_order_embedding: bool = False
    use_extra_features: bool = False

    def __post_init__(self):
        if self.d_h < 2 or self.d_h % 2 != 0:
            raise ShapeError(f"d_h must be even and >= 2 (order/type halves), got {self.d_h}")
        idxs = sorted(self.type_vocab.values())
        if idxs != list(range(len(idxs))):
            raise ValueError("type_vocab indices must be contiguous from 0")

    @property
    def half(self) -> int:
        return self.d_h // 2

    @property
    def unk_index(self) -> int:
        return len(self.type_vocab)

    def type_index(self, event_type: str) -> int:
        return self.type_vocab.get(event_type, self.unk_index)


def build_type_vocab(documents: Mapping[str, list[Event]]) -> dict[str, int]:
    """Sorted event-type vocabulary over a corpus (UNK is implicit, last row)."""
    types = sorted({e.event_type for events in documents.values() for e in events})
    return {t: i for i, t in enumerate(types)}


def sinusoidal_order_encoding(order_index: int, dim: int) -> Tensor:
    """Standard sin/cos position pattern of the given width for one position."""
    enc = np.zeros(dim)
    pos = float(order_index)
    for t in range(0, dim, 2):
        freq = 1.0 / (10000.0 ** (t / dim))
        enc[t] = np.sin(pos * freq)
        if t + 1 < dim:
            enc[t + 1] = np.cos(pos * freq)
    return enc


def order_encoding_matrix(n: int, dim: int) -> Tensor:
    return np.stack([sinusoidal_order_encoding(i, dim) for i in range(n)])


class DocumentGraph:
    """Complete directed event graph for one document."""

    def __init__(self, doc_id, events, cfg, p, extra=None):
        self.doc_id = doc_id
        self.events = list(events)
        self.cfg = cfg
        self.n = len(self.events)
        self.type_idx = np.array([cfg.type_index(e.event_type) for e in self.events], dtype=np.intp)
        self.order_idx = np.array([e.order_index for e in self.events], dtype=np.intp)
        self.sin_half = order_encoding_matrix(self.n, cfg.half)
        self.p = p  # [N, N, C], zero diagonal
        self.extra = extra  # [N, E] or None

    @property
    def edge_dim(self) -> int:
        return self.p.shape[2]

    def neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.n) if j != i]

    @property
    def edge_features(self) -> dict[tuple[int, int], Tensor]:
        return {
            (i, j): self.p[i, j]
            for i in range(self.n)
            for j in range(self.n)
            if i != j
        }

    def edge_count(self) -> int:
        return self.n * (self.n - 1)

    def input_width(self) -> int:
        return self.cfg.d_h + (self.extra.shape[1] if self.extra is not None else 0)


def build_graph(doc_events: list[Event], prob_table: ProbTable, cfg: NodeFeatureConfig) -> DocumentGraph:
    """Assemble the complete graph; every ordered pair must be in the table."""
    n = len(doc_events)
    if n < 2:
        doc = doc_events[0].doc_id if doc_events else "<empty>"
        raise ValueError(f"document {doc!r} has {n} event(s); a graph needs at least 2")
    doc_id = doc_events[0].doc_id
    c = prob_table.label_set.size
    p = np.zeros((n, n, c))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            vec = prob_table.get(doc_id, i, j)
            if vec is None:
                raise KeyError(
                    f"probability table has no entry for ordered pair ({doc_id!r}, {i}, {j})"
                )
            p[i, j] = vec

    extra = None
    if cfg.use_extra_features and any(e.extra for e in doc_events):
        widths = {len(e.extra) for e in doc_events}
        if len(widths) != 1:
            raise ShapeError(f"document {doc_id!r} has inconsistent extra-feature widths {widths}")
        extra = np.array([e.extra for e in doc_events], dtype=np.float64)
    return DocumentGraph(doc_id, doc_events, cfg, p, extra)


def init_node_features(event: Event, cfg: NodeFeatureConfig, params) -> Tensor:
    """Materialize h0 for one event: [order half || type embedding || extras].

    params supplies the learned tables (type embeddings and, when
    configured, order embeddings); unseen types fall back to the reserved
    UNK row deterministically.
    """
    if cfg.use_learned_order_embedding:
        table = params.order_embed.data
        row = min(event.order_index, table.shape[0] - 1)
        order_half = table[row]
    else:
        order_half = sinusoidal_order_encoding(event.order_index, cfg.half)
    type_half = params.type_embed.data[cfg.type_index(event.event_type)]
    parts = [order_half, type_half]
    if cfg.use_extra_features and event.extra:
        parts.append(np.asarray(event.extra, dtype=np.float64))
    return np.concatenate(parts)
