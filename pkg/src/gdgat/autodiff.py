"""Minimal reverse-mode differentiation over float64 numpy arrays.

Just enough machinery for this model: leaf parameters, a handful of array
ops, one fused attention-layer op dispatched to the selected kernel
backend, and a finite-difference certifier for the whole thing.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError
from .tensor import leaky_relu_grad, log_softmax_rows, row_softmax


class Node:
    """One value in the computation graph."""

    __slots__ = ("data", "grad", "parents", "backward_fn", "needs_grad")

    def __init__(self, data, parents=(), backward_fn=None, needs_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.needs_grad = needs_grad or any(p.needs_grad for p in self.parents)

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g


class Param(Node):
    """Named leaf parameter; its .grad is the gradient record for a step."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, needs_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.data.shape})"


def constant(data) -> Node:
    return Node(data)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def backward(loss: Node) -> None:
    """Reverse sweep from a scalar loss, accumulating into leaf .grad."""
    if loss.data.shape != ():
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.needs_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    loss.accumulate(np.ones(()))
    for node in reversed(topo):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


def matmul(a: Node, b: Node) -> Node:
    a, b = _as_node(a), _as_node(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}")
    out = Node(a.data @ b.data, parents=(a, b))

    def back(g):
        if a.needs_grad:
            a.accumulate(g @ b.data.T)
        if b.needs_grad:
            b.accumulate(a.data.T @ g)

    out.backward_fn = back
    return out


def add(a: Node, b: Node) -> Node:
    """Elementwise sum; a row vector b broadcasts over the rows of a."""
    a, b = _as_node(a), _as_node(b)
    broadcast = a.data.ndim == 2 and b.data.ndim == 1 and b.data.shape[0] == a.data.shape[1]
    if not broadcast and a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes incompatible: {a.data.shape} + {b.data.shape}")
    out = Node(a.data + b.data, parents=(a, b))

    def back(g):
        if a.needs_grad:
            a.accumulate(g)
        if b.needs_grad:
            b.accumulate(g.sum(axis=0) if broadcast else g)

    out.backward_fn = back
    return out


def concat_cols(parts: Sequence[Node]) -> Node:
    parts = [_as_node(p) for p in parts]
    out = Node(np.concatenate([p.data for p in parts], axis=1), parents=parts)
    widths = [p.data.shape[1] for p in parts]

    def back(g):
        off = 0
        for p, w in zip(parts, widths):
            if p.needs_grad:
                p.accumulate(g[:, off : off + w])
            off += w

    out.backward_fn = back
    return out


def gather_rows(src: Node, idx) -> Node:
    src = _as_node(src)
    idx = np.asarray(idx, dtype=np.intp)
    out = Node(src.data[idx], parents=(src,))

    def back(g):
        if src.needs_grad:
            acc = np.zeros_like(src.data)
            np.add.at(acc, idx, g)
            src.accumulate(acc)

    out.backward_fn = back
    return out


def leaky_relu(x: Node, slope: float) -> Node:
    x = _as_node(x)
    out = Node(np.where(x.data >= 0.0, x.data, slope * x.data), parents=(x,))

    def back(g):
        if x.needs_grad:
            x.accumulate(g * leaky_relu_grad(x.data, slope))

    out.backward_fn = back
    return out


def mean_cross_entropy(logits: Node, gold_idx) -> Node:
    """Mean over rows of -log softmax(logits)[gold]; fused for stability."""
    logits = _as_node(logits)
    gold = np.asarray(gold_idx, dtype=np.intp)
    n = logits.data.shape[0]
    if gold.shape != (n,):
        raise ShapeError(f"gold indices shape {gold.shape} != ({n},)")
    lsm = log_softmax_rows(logits.data)
    out = Node(-lsm[np.arange(n), gold].mean(), parents=(logits,))

    def back(g):
        if logits.needs_grad:
            grad = row_softmax(logits.data)
            grad[np.arange(n), gold] -= 1.0
            logits.accumulate(grad * (float(g) / n))

    out.backward_fn = back
    return out


def gat_layer(h: Node, w: Node, a: Node, p, *, act_slope, attn_slope, aggregation) -> Node:
    """Fused attention layer; p is a constant [N, N, E] array or None."""
    h, w, a = _as_node(h), _as_node(w), _as_node(a)
    out_data, cache = kernels.layer_forward(
        h.data, w.data, a.data, p, act_slope, attn_slope, aggregation
    )
    out = Node(out_data, parents=(h, w, a))

    def back(g):
        dh, dw, da = kernels.layer_backward(g, cache)
        if h.needs_grad:
            h.accumulate(dh)
        if w.needs_grad:
            w.accumulate(dw)
        if a.needs_grad:
            a.accumulate(da)

    out.backward_fn = back
    return out


def grad_check(
    loss_fn: Callable[[], Node], params: Sequence[Param], eps: float = 1e-5
) -> float:
    """Certify analytic gradients against central finite differences.

    Rebuilds the loss via loss_fn for every probe, so loss_fn must be a
    deterministic closure over the given params.  Returns the worst
    relative error max(|analytic - numeric|) / max(|analytic|, |numeric|,
    1e-8) over every entry of every parameter.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    base = float(loss_fn().data)
    again = float(loss_fn().data)
    if base != again:
        raise NumericError(f"loss_fn is not deterministic: {base} != {again}")

    for p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.ravel()
        an_flat = an.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().data)
            flat[i] = orig - eps
            down = float(loss_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(an_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(an_flat[i] - numeric) / denom)
    return worst
