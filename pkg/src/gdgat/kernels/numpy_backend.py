"""Vectorized numpy implementation of the attention-layer kernels.

One "layer" call covers, for every head k and node i of a complete graph
without self-loops:

    score(i, j, k) = a_k . [W_k h_i || W_k h_j || p_ij]
    alpha(i, ., k) = softmax_j leaky_relu(score(i, j, k))      over j != i
    head(i, k)     = leaky_relu( sum_j alpha(i, j, k) W_k h_j )

followed by head concatenation ("concat") or averaging ("mean").  The
cython extension implements the same contract; both backends return the
identical (out, cache) pair so callers can inspect attention weights and
run the backward pass regardless of backend.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def _leaky(x, slope):
    return np.where(x >= 0.0, x, slope * x)


def _leaky_grad(x, slope):
    return np.where(x >= 0.0, 1.0, slope)


def layer_forward(h, w, a, p, act_slope, attn_slope, aggregation):
    """Run one multi-head attention layer.

    h: [N, d_in] node features
    w: [K, d_in, d_out] per-head projections
    a: [K, 2*d_out + E] per-head attention vectors (E = edge feature width, 0 if unused)
    p: [N, N, E] edge features, or None when E == 0
    aggregation: "concat" -> out [N, K*d_out]; "mean" -> out [N, d_out]

    Returns (out, cache); cache feeds layer_backward and exposes the
    attention weights as cache["alpha"] with shape [K, N, N] (zero diagonal).
    """
    k_heads, d_in, d_out = w.shape
    n = h.shape[0]
    if n < 2:
        raise ValueError("attention layer needs at least 2 nodes")
    if h.shape[1] != d_in:
        raise ValueError(f"node feature width {h.shape[1]} != layer input width {d_in}")
    edge_dim = a.shape[1] - 2 * d_out
    if edge_dim < 0:
        raise ValueError(f"attention vector width {a.shape[1]} shorter than 2*d_out={2 * d_out}")
    if edge_dim > 0 and (p is None or p.shape != (n, n, edge_dim)):
        got = None if p is None else p.shape
        raise ValueError(f"edge features must have shape ({n}, {n}, {edge_dim}), got {got}")

    g = np.einsum("nd,kde->kne", h, w)  # projected features, [K, N, d_out]
    a_src = a[:, :d_out]
    a_dst = a[:, d_out : 2 * d_out]
    src = np.einsum("kne,ke->kn", g, a_src)
    dst = np.einsum("kne,ke->kn", g, a_dst)
    z = src[:, :, None] + dst[:, None, :]
    if edge_dim > 0:
        z = z + np.einsum("ijc,kc->kij", p, a[:, 2 * d_out :])

    scores = _leaky(z, attn_slope)
    diag = np.arange(n)
    masked = scores.copy()
    masked[:, diag, diag] = NEG_INF
    shifted = masked - masked.max(axis=2, keepdims=True)
    expv = np.exp(shifted)
    alpha = expv / expv.sum(axis=2, keepdims=True)  # [K, N, N], zero diagonal

    pre = np.einsum("kij,kje->kie", alpha, g)
    act = _leaky(pre, act_slope)
    if aggregation == "concat":
        out = np.transpose(act, (1, 0, 2)).reshape(n, k_heads * d_out)
    elif aggregation == "mean":
        out = act.mean(axis=0)
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")

    cache = {
        "h": h,
        "w": w,
        "a": a,
        "p": p,
        "g": g,
        "z": z,
        "alpha": alpha,
        "pre": pre,
        "act_slope": act_slope,
        "attn_slope": attn_slope,
        "aggregation": aggregation,
        "edge_dim": edge_dim,
    }
    return out, cache


def layer_backward(d_out_grad, cache):
    """Gradients of a layer_forward call.

    d_out_grad matches the forward output shape.  Returns (dh, dw, da);
    edge features are constants, so no gradient is produced for p.
    """
    h, w, a, p = cache["h"], cache["w"], cache["a"], cache["p"]
    g, z, alpha, pre = cache["g"], cache["z"], cache["alpha"], cache["pre"]
    act_slope, attn_slope = cache["act_slope"], cache["attn_slope"]
    k_heads, d_in, d_out = w.shape
    n = h.shape[0]
    edge_dim = cache["edge_dim"]

    if cache["aggregation"] == "concat":
        d_act = np.transpose(d_out_grad.reshape(n, k_heads, d_out), (1, 0, 2))
    else:
        d_act = np.broadcast_to(d_out_grad / k_heads, (k_heads, n, d_out)).copy()

    d_pre = d_act * _leaky_grad(pre, act_slope)
    d_alpha = np.einsum("kie,kje->kij", d_pre, g)
    d_g = np.einsum("kij,kie->kje", alpha, d_pre)

    # softmax over j for each (k, i) row; the zeroed diagonal drops out
    row_dot = (alpha * d_alpha).sum(axis=2, keepdims=True)
    d_scores = alpha * (d_alpha - row_dot)
    d_z = d_scores * _leaky_grad(z, attn_slope)
    diag = np.arange(n)
    d_z[:, diag, diag] = 0.0

    d_src = d_z.sum(axis=2)  # [K, N]
    d_dst = d_z.sum(axis=1)  # [K, N]
    a_src = a[:, :d_out]
    a_dst = a[:, d_out : 2 * d_out]
    d_g += d_src[:, :, None] * a_src[:, None, :]
    d_g += d_dst[:, :, None] * a_dst[:, None, :]

    da = np.empty_like(a)
    da[:, :d_out] = np.einsum("kn,kne->ke", d_src, g)
    da[:, d_out : 2 * d_out] = np.einsum("kn,kne->ke", d_dst, g)
    if edge_dim > 0:
        da[:, 2 * d_out :] = np.einsum("kij,ijc->kc", d_z, p)

    dw = np.einsum("nd,kne->kde", h, d_g)
    dh = np.einsum("kne,kde->nd", d_g, w)
    return dh, dw, da
