"""Dense float64 tensor primitives.

A "tensor" throughout this package is a C-contiguous ``numpy.ndarray`` of
float64 (row-major values, shape given by ``.shape``).  Every public
operation here validates that its result is finite; NaN/Inf anywhere is a
bug, not a value.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

Tensor = np.ndarray


def tensor(data, shape=None) -> Tensor:
    """Build a validated float64 tensor from nested lists or an array."""
    t = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        t = t.reshape(shape)
    return check_finite(t, "tensor()")


def check_finite(t: Tensor, context: str = "") -> Tensor:
    if not np.isfinite(t).all():
        raise NumericError(f"non-finite values in {context or 'tensor'}")
    return t


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors with 64-bit accumulation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}"
        )
    return check_finite(a @ b, "matmul")


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    """Elementwise x for x >= 0, slope*x otherwise.  slope must be in [0, 1)."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in [0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return check_finite(np.where(x >= 0.0, x, slope * x), "leaky_relu")


def leaky_relu_grad(x: Tensor, slope: float) -> Tensor:
    """Derivative of leaky_relu wrt its input (1 on the x >= 0 branch)."""
    return np.where(np.asarray(x) >= 0.0, 1.0, slope)


def stable_softmax(v: Tensor) -> Tensor:
    """Softmax of a 1-D vector, computed with max-subtraction.

    Shift-invariant: adding a constant to all inputs leaves the output
    unchanged up to rounding.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"stable_softmax expects a nonempty 1-D vector, got shape {v.shape}")
    check_finite(v, "stable_softmax input")
    e = np.exp(v - v.max())
    return check_finite(e / e.sum(), "stable_softmax")


def row_softmax(m: Tensor) -> Tensor:
    """Row-wise stable softmax of a 2-D tensor."""
    m = np.asarray(m, dtype=np.float64)
    e = np.exp(m - m.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(m: Tensor) -> Tensor:
    """Row-wise log-softmax, fused so no intermediate probability is logged."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def xavier_init(rows: int, cols: int, seed: int) -> Tensor:
    """Deterministic uniform Glorot initialization in +-sqrt(6/(rows+cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"xavier_init needs rows, cols >= 1, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=(rows, cols))
