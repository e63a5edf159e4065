"""Attention-layer kernel backends.

The compiled cython extension is preferred when it imported cleanly; the
numpy implementation is the always-available fallback.  GDGAT_BACKEND=python
or =cython forces a choice (the latter fails loudly if the extension is
missing).  Both backends implement the same (out, cache) contract.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import _attention as _ext
except ImportError:
    _ext = None

_BACKENDS = {"python": numpy_backend}
if _ext is not None:
    _BACKENDS["cython"] = _ext


def _initial_backend() -> str:
    forced = os.environ.get("GDGAT_BACKEND")
    if forced:
        if forced not in ("python", "cython"):
            raise ValueError(f"GDGAT_BACKEND must be 'python' or 'cython', got {forced!r}")
        if forced == "cython" and _ext is None:
            raise ImportError("GDGAT_BACKEND=cython but the compiled extension is unavailable")
        return forced
    return "cython" if _ext is not None else "python"


_active = _initial_backend()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Switch the kernel backend (used by tests and the benchmark)."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


def layer_forward(h, w, a, p, act_slope, attn_slope, aggregation):
    return _BACKENDS[_active].layer_forward(h, w, a, p, act_slope, attn_slope, aggregation)


def layer_backward(d_out_grad, cache):
    return _BACKENDS[_active].layer_backward(d_out_grad, cache)
