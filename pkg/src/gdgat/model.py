"""Two-layer edge-featured multi-head attention network with a pair head.

Layer 1 concatenates its head outputs, layer 2 averages them.  A pair
(i, j) is classified from [h_i(2) || p_ij || h_j(2)] through a single
affine layer and softmax; training minimizes cross-entropy on the logits.

Attention scores for head k are a_k . [W_k h_i || W_k h_j || p_ij], passed
through a leaky rectifier and normalized over the source node's neighbors
(all other nodes; a node never attends to itself).  Setting
use_edge_features=False drops the p segments from both the scores and the
classifier input, leaving a plain multi-head attention graph network.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import kernels
from .data import LabelSet
from .errors import ShapeError
from .graph import DocumentGraph, NodeFeatureConfig
from .probs import check_distribution
from .tensor import Tensor, log_softmax_rows, stable_softmax, xavier_init

CHECKPOINT_FORMAT = "gdgat-checkpoint-1"


@dataclass(frozen=True)
class ModelConfig:
    d_h: int = 64
    d_h1: int = 32
    d_h2: int = 64
    heads: int = 8
    activation_slope: float = 0.2
    attention_slope: float = 0.2
    use_edge_features: bool = True
    learned_order_embedding: bool = False
    max_order: int = 256
    extra_dim: int = 0

    def __post_init__(self):
        if self.d_h < 2 or self.d_h % 2:
            raise ShapeError(f"d_h must be even and >= 2, got {self.d_h}")
        if min(self.d_h1, self.d_h2, self.heads) < 1:
            raise ShapeError("d_h1, d_h2 and heads must all be >= 1")
        for s in (self.activation_slope, self.attention_slope):
            if not 0.0 <= s < 1.0:
                raise ValueError(f"leaky slope must be in [0, 1), got {s}")


@dataclass
class GatLayerParams:
    """Per-head projection and attention vectors for one layer."""

    w: ad.Param  # [K, d_in, d_out]
    a: ad.Param  # [K, 2*d_out + edge_dim]
    activation_slope: float
    attention_slope: float
    aggregation: str  # "concat" | "mean"

    @property
    def heads(self) -> int:
        return self.w.data.shape[0]

    @property
    def d_in(self) -> int:
        return self.w.data.shape[1]

    @property
    def d_out(self) -> int:
        return self.w.data.shape[2]

    @property
    def edge_dim(self) -> int:
        return self.a.data.shape[1] - 2 * self.d_out


class ModelParams:
    """All learnable tensors plus the config needed to rebuild them."""

    def __init__(self, cfg, label_set, type_vocab, layer1, layer2, w_cls, b_cls,
                 type_embed, order_embed=None):
        self.cfg = cfg
        self.label_set = label_set
        self.type_vocab = dict(type_vocab)
        self.layer1 = layer1
        self.layer2 = layer2
        self.w_cls = w_cls
        self.b_cls = b_cls
        self.type_embed = type_embed
        self.order_embed = order_embed
        self._validate_dims()

    def _validate_dims(self):
        cfg, c = self.cfg, self.label_set.size
        edge = c if cfg.use_edge_features else 0
        expect = {
            "layer1.w": (cfg.heads, cfg.d_h + cfg.extra_dim, cfg.d_h1),
            "layer1.a": (cfg.heads, 2 * cfg.d_h1 + edge),
            "layer2.w": (cfg.heads, cfg.heads * cfg.d_h1, cfg.d_h2),
            "layer2.a": (cfg.heads, 2 * cfg.d_h2 + edge),
            "w_cls": (2 * cfg.d_h2 + edge, c),
            "b_cls": (c,),
            "type_embed": (len(self.type_vocab) + 1, cfg.d_h // 2),
        }
        actual = {
            "layer1.w": self.layer1.w.data.shape,
            "layer1.a": self.layer1.a.data.shape,
            "layer2.w": self.layer2.w.data.shape,
            "layer2.a": self.layer2.a.data.shape,
            "w_cls": self.w_cls.data.shape,
            "b_cls": self.b_cls.data.shape,
            "type_embed": self.type_embed.data.shape,
        }
        for name, shape in expect.items():
            if actual[name] != shape:
                raise ShapeError(f"{name} has shape {actual[name]}, expected {shape}")
        if cfg.learned_order_embedding:
            if self.order_embed is None:
                raise ShapeError("config requests a learned order embedding but none was given")
            if self.order_embed.data.shape != (cfg.max_order, cfg.d_h // 2):
                raise ShapeError(
                    f"order_embed has shape {self.order_embed.data.shape}, "
                    f"expected ({cfg.max_order}, {cfg.d_h // 2})"
                )

    def node_feature_config(self) -> NodeFeatureConfig:
        return NodeFeatureConfig(
            d_h=self.cfg.d_h,
            type_vocab=self.type_vocab,
            use_learned_order_embedding=self.cfg.learned_order_embedding,
            use_extra_features=self.cfg.extra_dim > 0,
        )

    def parameters(self) -> list[ad.Param]:
        ps = [
            self.layer1.w, self.layer1.a,
            self.layer2.w, self.layer2.a,
            self.w_cls, self.b_cls, self.type_embed,
        ]
        if self.order_embed is not None:
            ps.append(self.order_embed)
        return ps

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def copy_values(self) -> dict[str, Tensor]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_values(self, values: dict[str, Tensor]):
        for p in self.parameters():
            p.data = values[p.name].copy()


def _vec_init(width: int, seed: int) -> Tensor:
    return xavier_init(width, 1, seed).ravel()


def init_model(cfg: ModelConfig, label_set: LabelSet, type_vocab, seed: int) -> ModelParams:
    """Deterministic Glorot initialization of every learnable tensor."""
    c = label_set.size
    edge = c if cfg.use_edge_features else 0
    seeds = iter(
        int(s) for s in np.random.SeedSequence(seed).generate_state(4 * cfg.heads + 8)
    )

    def stack(n_heads, rows, cols):
        return np.stack([xavier_init(rows, cols, next(seeds)) for _ in range(n_heads)])

    layer1 = GatLayerParams(
        w=ad.Param("layer1.w", stack(cfg.heads, cfg.d_h + cfg.extra_dim, cfg.d_h1)),
        a=ad.Param("layer1.a", np.stack([_vec_init(2 * cfg.d_h1 + edge, next(seeds))
                                         for _ in range(cfg.heads)])),
        activation_slope=cfg.activation_slope,
        attention_slope=cfg.attention_slope,
        aggregation="concat",
    )
    layer2 = GatLayerParams(
        w=ad.Param("layer2.w", stack(cfg.heads, cfg.heads * cfg.d_h1, cfg.d_h2)),
        a=ad.Param("layer2.a", np.stack([_vec_init(2 * cfg.d_h2 + edge, next(seeds))
                                         for _ in range(cfg.heads)])),
        activation_slope=cfg.activation_slope,
        attention_slope=cfg.attention_slope,
        aggregation="mean",
    )
    w_cls = ad.Param("w_cls", xavier_init(2 * cfg.d_h2 + edge, c, next(seeds)))
    b_cls = ad.Param("b_cls", np.zeros(c))
    type_embed = ad.Param("type_embed", xavier_init(len(type_vocab) + 1, cfg.d_h // 2, next(seeds)))
    order_embed = None
    if cfg.learned_order_embedding:
        order_embed = ad.Param("order_embed", xavier_init(cfg.max_order, cfg.d_h // 2, next(seeds)))
    return ModelParams(cfg, label_set, type_vocab, layer1, layer2, w_cls, b_cls,
                       type_embed, order_embed)


# ---------------------------------------------------------------------------
# forward passes


def _edge_input(layer: GatLayerParams, graph: DocumentGraph):
    return graph.p if layer.edge_dim > 0 else None


def node_features(params: ModelParams, graph: DocumentGraph) -> ad.Node:
    """Differentiable h0 assembly: [order half || type rows || extras]."""
    if params.cfg.learned_order_embedding:
        rows = np.minimum(graph.order_idx, params.cfg.max_order - 1)
        order_half = ad.gather_rows(params.order_embed, rows)
    else:
        order_half = ad.constant(graph.sin_half)
    parts = [order_half, ad.gather_rows(params.type_embed, graph.type_idx)]
    if params.cfg.extra_dim > 0:
        if graph.extra is None or graph.extra.shape[1] != params.cfg.extra_dim:
            raise ShapeError(
                f"model expects {params.cfg.extra_dim} extra feature(s); "
                f"document {graph.doc_id!r} carries "
                f"{0 if graph.extra is None else graph.extra.shape[1]}"
            )
        parts.append(ad.constant(graph.extra))
    return ad.concat_cols(parts)


def forward(params: ModelParams, graph: DocumentGraph) -> ad.Node:
    """Node embeddings after both layers: [N, d_h2]."""
    h0 = node_features(params, graph)
    h1 = ad.gat_layer(
        h0, params.layer1.w, params.layer1.a, _edge_input(params.layer1, graph),
        act_slope=params.layer1.activation_slope,
        attn_slope=params.layer1.attention_slope,
        aggregation=params.layer1.aggregation,
    )
    return ad.gat_layer(
        h1, params.layer2.w, params.layer2.a, _edge_input(params.layer2, graph),
        act_slope=params.layer2.activation_slope,
        attn_slope=params.layer2.attention_slope,
        aggregation=params.layer2.aggregation,
    )


def pair_logits(params: ModelParams, graph: DocumentGraph, pairs: Sequence) -> ad.Node:
    """Classifier logits for a batch of (i, j) pairs of one document."""
    idx_i = np.array([p.i if hasattr(p, "i") else p[0] for p in pairs], dtype=np.intp)
    idx_j = np.array([p.j if hasattr(p, "j") else p[1] for p in pairs], dtype=np.intp)
    if (idx_i == idx_j).any():
        raise ValueError("cannot classify a pair of identical events")
    h2 = forward(params, graph)
    hi = ad.gather_rows(h2, idx_i)
    hj = ad.gather_rows(h2, idx_j)
    if params.cfg.use_edge_features:
        ho = ad.concat_cols([hi, ad.constant(graph.p[idx_i, idx_j]), hj])
    else:
        ho = ad.concat_cols([hi, hj])
    return ad.add(ad.matmul(ho, params.w_cls), params.b_cls)


def classify_pair(params: ModelParams, graph: DocumentGraph, i: int, j: int) -> Tensor:
    """Predicted distribution over labels for one ordered pair."""
    logits = pair_logits(params, graph, [(i, j)]).data[0]
    return check_distribution(stable_softmax(logits))


def pair_loss(logits: Tensor, gold) -> float:
    """Cross-entropy of one pair from its logits (fused log-softmax).

    gold may be a label index or a one-hot vector.
    """
    logits = np.asarray(logits, dtype=np.float64)
    lsm = log_softmax_rows(logits[None, :])[0]
    gold = np.asarray(gold)
    if gold.ndim == 0:
        return float(-lsm[int(gold)])
    return float(-(gold * lsm).sum())


def document_loss(params: ModelParams, graph: DocumentGraph, pairs: Sequence) -> ad.Node:
    """Mean cross-entropy over a document's labeled pairs."""
    gold = [params.label_set.index(p.gold) for p in pairs]
    return ad.mean_cross_entropy(pair_logits(params, graph, pairs), gold)


def predict(params: ModelParams, graph: DocumentGraph, pairs: Sequence):
    """(pair, predicted label, distribution) for each pair; ties take the
    lowest label index."""
    if not pairs:
        return []
    probs = np.apply_along_axis(
        stable_softmax, 1, pair_logits(params, graph, pairs).data
    )
    out = []
    for pair, row in zip(pairs, probs):
        out.append((pair, params.label_set.labels[int(np.argmax(row))], row))
    return out


# ---------------------------------------------------------------------------
# inspection helpers (single layer / head / node)


def layer_forward(layer: GatLayerParams, graph: DocumentGraph, h_in: Tensor) -> Tensor:
    """One layer's output rows for given input rows (active kernel backend)."""
    out, _ = kernels.layer_forward(
        np.asarray(h_in, dtype=np.float64), layer.w.data, layer.a.data,
        _edge_input(layer, graph), layer.activation_slope, layer.attention_slope,
        layer.aggregation,
    )
    return out


def _layer_cache(layer: GatLayerParams, graph: DocumentGraph, h_in: Tensor) -> dict:
    _, cache = kernels.layer_forward(
        np.asarray(h_in, dtype=np.float64), layer.w.data, layer.a.data,
        _edge_input(layer, graph), layer.activation_slope, layer.attention_slope,
        layer.aggregation,
    )
    return cache


def attention_coefficients(layer: GatLayerParams, head: int, node: int,
                           graph: DocumentGraph, h_in: Tensor) -> Tensor:
    """Attention weights of one head over node's neighbors (ascending index)."""
    alpha = _layer_cache(layer, graph, h_in)["alpha"]
    return np.array([alpha[head, node, j] for j in graph.neighbors(node)])


def head_output(layer: GatLayerParams, head: int, node: int,
                graph: DocumentGraph, h_in: Tensor) -> Tensor:
    """One head's activated output row for one node."""
    cache = _layer_cache(layer, graph, h_in)
    pre = cache["pre"][head, node]
    return np.where(pre >= 0.0, pre, layer.activation_slope * pre)


# ---------------------------------------------------------------------------
# checkpoints


def _encode(arr: Tensor) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode(obj) -> Tensor:
    arr = np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8").copy()
    return arr.reshape(obj["shape"])


def save_checkpoint(params: ModelParams, path, run_config: dict | None = None,
                    seed: int | None = None) -> None:
    """Write a self-describing checkpoint (config echo + named tensors)."""
    doc = {
        "format_version": CHECKPOINT_FORMAT,
        "config": asdict(params.cfg),
        "label_set": params.label_set.to_dict(),
        "type_vocab": params.type_vocab,
        "run_config": run_config or {},
        "seed": seed,
        "tensors": {p.name: _encode(p.data) for p in params.parameters()},
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_checkpoint(path) -> ModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != CHECKPOINT_FORMAT:
        raise ShapeError(
            f"unsupported checkpoint format {doc.get('format_version')!r}, "
            f"expected {CHECKPOINT_FORMAT!r}"
        )
    cfg = ModelConfig(**doc["config"])
    label_set = LabelSet.from_dict(doc["label_set"])
    tensors = {name: _decode(t) for name, t in doc["tensors"].items()}
    params = init_model(cfg, label_set, doc["type_vocab"], seed=0)
    for p in params.parameters():
        if p.name not in tensors:
            raise ShapeError(f"checkpoint missing tensor {p.name!r}")
        if tensors[p.name].shape != p.data.shape:
            raise ShapeError(
                f"checkpoint tensor {p.name!r} has shape {tensors[p.name].shape}, "
                f"expected {p.data.shape}"
            )
        p.data = tensors[p.name]
    return params
