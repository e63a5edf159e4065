# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled attention-layer kernels.

Same contract as numpy_backend.layer_forward / layer_backward: fused loops
over heads, nodes and edges of a complete self-loop-free graph.  Kept in
lockstep with the numpy backend by the backend-equivalence tests.
"""

import numpy as np

from libc.math cimport exp, INFINITY


cdef inline double _leaky(double x, double slope) nogil:
    return x if x >= 0.0 else slope * x


cdef inline double _leaky_grad(double x, double slope) nogil:
    return 1.0 if x >= 0.0 else slope


def layer_forward(h_arr, w_arr, a_arr, p_arr, double act_slope, double attn_slope, str aggregation):
    cdef double[:, ::1] h = np.ascontiguousarray(h_arr, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(a_arr, dtype=np.float64)

    cdef Py_ssize_t k_heads = w.shape[0]
    cdef Py_ssize_t d_in = w.shape[1]
    cdef Py_ssize_t d_out = w.shape[2]
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t edge_dim = a.shape[1] - 2 * d_out

    if n < 2:
        raise ValueError("attention layer needs at least 2 nodes")
    if h.shape[1] != d_in:
        raise ValueError(f"node feature width {h.shape[1]} != layer input width {d_in}")
    if edge_dim < 0:
        raise ValueError(f"attention vector width {a.shape[1]} shorter than 2*d_out={2 * d_out}")
    if edge_dim > 0 and (p_arr is None or p_arr.shape != (n, n, edge_dim)):
        got = None if p_arr is None else p_arr.shape
        raise ValueError(f"edge features must have shape ({n}, {n}, {edge_dim}), got {got}")

    if p_arr is None:
        p_arr = np.zeros((n, n, 1), dtype=np.float64)
    cdef double[:, :, ::1] p = np.ascontiguousarray(p_arr, dtype=np.float64)

    g_arr = np.zeros((k_heads, n, d_out), dtype=np.float64)
    z_arr = np.zeros((k_heads, n, n), dtype=np.float64)
    alpha_arr = np.zeros((k_heads, n, n), dtype=np.float64)
    pre_arr = np.zeros((k_heads, n, d_out), dtype=np.float64)
    act_arr = np.zeros((k_heads, n, d_out), dtype=np.float64)
    cdef double[:, :, ::1] g = g_arr
    cdef double[:, :, ::1] z = z_arr
    cdef double[:, :, ::1] alpha = alpha_arr
    cdef double[:, :, ::1] pre = pre_arr
    cdef double[:, :, ::1] act = act_arr

    src_arr = np.zeros((k_heads, n), dtype=np.float64)
    dst_arr = np.zeros((k_heads, n), dtype=np.float64)
    cdef double[:, ::1] src = src_arr
    cdef double[:, ::1] dst = dst_arr

    cdef Py_ssize_t k, i, j, d, e, c
    cdef double acc, m, s, score

    with nogil:
        for k in range(k_heads):
            for i in range(n):
                for e in range(d_out):
                    acc = 0.0
                    for d in range(d_in):
                        acc += h[i, d] * w[k, d, e]
                    g[k, i, e] = acc
            for i in range(n):
                acc = 0.0
                for e in range(d_out):
                    acc += g[k, i, e] * a[k, e]
                src[k, i] = acc
                acc = 0.0
                for e in range(d_out):
                    acc += g[k, i, e] * a[k, d_out + e]
                dst[k, i] = acc
            for i in range(n):
                for j in range(n):
                    acc = src[k, i] + dst[k, j]
                    for c in range(edge_dim):
                        acc += p[i, j, c] * a[k, 2 * d_out + c]
                    z[k, i, j] = acc
            for i in range(n):
                m = -INFINITY
                for j in range(n):
                    if j != i:
                        score = _leaky(z[k, i, j], attn_slope)
                        if score > m:
                            m = score
                s = 0.0
                for j in range(n):
                    if j != i:
                        alpha[k, i, j] = exp(_leaky(z[k, i, j], attn_slope) - m)
                        s += alpha[k, i, j]
                for j in range(n):
                    if j != i:
                        alpha[k, i, j] /= s
            for i in range(n):
                for e in range(d_out):
                    acc = 0.0
                    for j in range(n):
                        acc += alpha[k, i, j] * g[k, j, e]
                    pre[k, i, e] = acc
                    act[k, i, e] = _leaky(acc, act_slope)

    if aggregation == "concat":
        out = np.transpose(act_arr, (1, 0, 2)).reshape(n, k_heads * d_out)
    elif aggregation == "mean":
        out = act_arr.mean(axis=0)
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")

    cache = {
        "h": np.asarray(h),
        "w": np.asarray(w),
        "a": np.asarray(a),
        "p": np.asarray(p) if edge_dim > 0 else None,
        "g": g_arr,
        "z": z_arr,
        "alpha": alpha_arr,
        "pre": pre_arr,
        "act_slope": act_slope,
        "attn_slope": attn_slope,
        "aggregation": aggregation,
        "edge_dim": int(edge_dim),
    }
    return out, cache


def layer_backward(d_out_grad, cache):
    cdef double[:, ::1] h = cache["h"]
    cdef double[:, :, ::1] w = cache["w"]
    cdef double[:, ::1] a = cache["a"]
    cdef double[:, :, ::1] g = cache["g"]
    cdef double[:, :, ::1] z = cache["z"]
    cdef double[:, :, ::1] alpha = cache["alpha"]
    cdef double[:, :, ::1] pre = cache["pre"]
    cdef double act_slope = cache["act_slope"]
    cdef double attn_slope = cache["attn_slope"]
    cdef Py_ssize_t edge_dim = cache["edge_dim"]

    cdef Py_ssize_t k_heads = w.shape[0]
    cdef Py_ssize_t d_in = w.shape[1]
    cdef Py_ssize_t d_out = w.shape[2]
    cdef Py_ssize_t n = h.shape[0]

    p_obj = cache["p"]
    if p_obj is None:
        p_obj = np.zeros((n, n, 1), dtype=np.float64)
    cdef double[:, :, ::1] p = p_obj

    if cache["aggregation"] == "concat":
        d_act_arr = np.ascontiguousarray(
            np.transpose(np.asarray(d_out_grad).reshape(n, k_heads, d_out), (1, 0, 2))
        )
    else:
        d_act_arr = np.broadcast_to(
            np.asarray(d_out_grad) / k_heads, (k_heads, n, d_out)
        ).copy()
    cdef double[:, :, ::1] d_act = d_act_arr

    dh_arr = np.zeros((n, d_in), dtype=np.float64)
    dw_arr = np.zeros((k_heads, d_in, d_out), dtype=np.float64)
    da_arr = np.zeros((k_heads, 2 * d_out + edge_dim), dtype=np.float64)
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, :, ::1] dw = dw_arr
    cdef double[:, ::1] da = da_arr

    d_pre_arr = np.zeros((n, d_out), dtype=np.float64)
    d_g_arr = np.zeros((n, d_out), dtype=np.float64)
    d_z_arr = np.zeros((n, n), dtype=np.float64)
    d_src_arr = np.zeros(n, dtype=np.float64)
    d_dst_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] d_pre = d_pre_arr
    cdef double[:, ::1] d_g = d_g_arr
    cdef double[:, ::1] d_z = d_z_arr
    cdef double[::1] d_src = d_src_arr
    cdef double[::1] d_dst = d_dst_arr

    cdef Py_ssize_t k, i, j, d, e, c
    cdef double acc, row_dot, d_alpha

    with nogil:
        for k in range(k_heads):
            for i in range(n):
                for e in range(d_out):
                    d_pre[i, e] = d_act[k, i, e] * _leaky_grad(pre[k, i, e], act_slope)
                    d_g[i, e] = 0.0
                d_src[i] = 0.0
                d_dst[i] = 0.0

            # attention softmax rows: d_alpha -> d_z, and message term into d_g
            for i in range(n):
                row_dot = 0.0
                for j in range(n):
                    if j == i:
                        continue
                    acc = 0.0
                    for e in range(d_out):
                        acc += d_pre[i, e] * g[k, j, e]
                    d_z[i, j] = acc  # holds d_alpha for now
                    row_dot += alpha[k, i, j] * acc
                for j in range(n):
                    if j == i:
                        d_z[i, j] = 0.0
                        continue
                    d_alpha = d_z[i, j]
                    d_z[i, j] = (
                        alpha[k, i, j]
                        * (d_alpha - row_dot)
                        * _leaky_grad(z[k, i, j], attn_slope)
                    )
                    for e in range(d_out):
                        d_g[j, e] += alpha[k, i, j] * d_pre[i, e]

            for i in range(n):
                for j in range(n):
                    if j == i:
                        continue
                    d_src[i] += d_z[i, j]
                    d_dst[j] += d_z[i, j]
                    for c in range(edge_dim):
                        da[k, 2 * d_out + c] += d_z[i, j] * p[i, j, c]

            for i in range(n):
                for e in range(d_out):
                    d_g[i, e] += d_src[i] * a[k, e] + d_dst[i] * a[k, d_out + e]
                    da[k, e] += d_src[i] * g[k, i, e]
                    da[k, d_out + e] += d_dst[i] * g[k, i, e]

            for i in range(n):
                for d in range(d_in):
                    acc = 0.0
                    for e in range(d_out):
                        acc += d_g[i, e] * w[k, d, e]
                        dw[k, d, e] += h[i, d] * d_g[i, e]
                    dh[i, d] += acc

    return dh_arr, dw_arr, da_arr
