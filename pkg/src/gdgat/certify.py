"""Whole-model gradient certification on a small fixed fixture.

Builds a deterministic 4-node document, synthesizes a probability table,
and compares every analytic parameter gradient of the mean pair loss
against central finite differences.
"""

from __future__ import annotations

import numpy as np

from .autodiff import grad_check
from .data import Dataset, Event, EventPairInstance, LabelSet
from .graph import build_graph, build_type_vocab
from .model import ModelConfig, document_loss, init_model
from .probs import synth_prob_table

CERT_LABELS = LabelSet("cert4", ("A", "B", "C", "D"), excluded_for_micro=None)


def build_fixture(seed: int = 7, n_events: int = 4, heads: int = 2,
                  d_h: int = 8, d_h1: int = 4, d_h2: int = 8,
                  use_edge_features: bool = True):
    """Deterministic (params, graph, pairs) triple for certification."""
    rng = np.random.default_rng(seed)
    doc_id = "certdoc"
    events = [
        Event(doc_id, k, f"t{int(rng.integers(3))}", f"w{k}") for k in range(n_events)
    ]
    pairs = [
        EventPairInstance(doc_id, i, j, CERT_LABELS.labels[int(rng.integers(CERT_LABELS.size))],
                          abs(i - j) - 1)
        for i in range(n_events) for j in range(n_events) if i != j
    ]
    dataset = Dataset(CERT_LABELS, {doc_id: events}, pairs)
    table = synth_prob_table(dataset, sharpness=3.0, flip_rate=0.1, seed=seed + 1)
    cfg = ModelConfig(d_h=d_h, d_h1=d_h1, d_h2=d_h2, heads=heads,
                      use_edge_features=use_edge_features)
    params = init_model(cfg, CERT_LABELS, build_type_vocab(dataset.documents), seed=seed)
    graph = build_graph(events, table, params.node_feature_config())
    return params, graph, pairs


def certify_gradients(seed: int = 7, eps: float = 1e-5, **fixture_kwargs) -> float:
    """Max relative error of analytic vs numeric gradients, all parameters."""
    params, graph, pairs = build_fixture(seed=seed, **fixture_kwargs)
    return grad_check(
        lambda: document_loss(params, graph, pairs), params.parameters(), eps=eps
    )
