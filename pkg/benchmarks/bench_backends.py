#!/usr/bin/env python3
"""Compare the compiled and numpy attention-kernel backends.

Times the fused layer forward+backward on synthetic graphs of several
sizes, plus one end-to-end training epoch, for every available backend.

    python benchmarks/bench_backends.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from gdgat import kernels
from gdgat.model import ModelConfig
from gdgat.probs import merge_tables
from gdgat.synth import synth_bundle
from gdgat.train import TrainConfig, train


def bench_layer(backend, n, d_in, d_out, heads, edge_dim, repeats):
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    h = rng.normal(size=(n, d_in))
    w = rng.normal(size=(heads, d_in, d_out)) * 0.2
    a = rng.normal(size=(heads, 2 * d_out + edge_dim)) * 0.2
    p = rng.dirichlet(np.ones(edge_dim), size=(n, n))
    d_out_grad = rng.normal(size=(n, heads * d_out))

    out, cache = kernels.layer_forward(h, w, a, p, 0.2, 0.2, "concat")  # warmup
    kernels.layer_backward(d_out_grad, cache)

    start = time.perf_counter()
    for _ in range(repeats):
        out, cache = kernels.layer_forward(h, w, a, p, 0.2, 0.2, "concat")
        kernels.layer_backward(d_out_grad, cache)
    return (time.perf_counter() - start) / repeats


def bench_epoch(backend, seed=0):
    kernels.set_backend(backend)
    bundle = synth_bundle("basic", seed, basic_pairs=(300, 100, 100))
    table = merge_tables([bundle[s][1] for s in ("train", "dev")])
    cfg = TrainConfig(epochs=1, seed=seed)
    start = time.perf_counter()
    train(bundle["train"][0], bundle["dev"][0], table, ModelConfig(), cfg)
    return time.perf_counter() - start


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {backends}\n")
    sizes = [(8, 64, 32, 8, 4), (16, 64, 32, 8, 4), (32, 128, 64, 8, 6)]
    header = f"{'graph (N, d_in, d_out, K, C)':<34}" + "".join(f"{b:>14}" for b in backends)
    print(header)
    for n, d_in, d_out, heads, edge_dim in sizes:
        times = [
            bench_layer(b, n, d_in, d_out, heads, edge_dim, args.repeats) for b in backends
        ]
        label = f"({n}, {d_in}, {d_out}, {heads}, {edge_dim})"
        print(f"{label:<34}" + "".join(f"{t * 1e6:>11.1f} us" for t in times))

    print()
    times = [bench_epoch(b) for b in backends]
    print(f"{'one training epoch (300 pairs)':<34}"
          + "".join(f"{t * 1e3:>11.1f} ms" for t in times))
    if len(backends) > 1:
        print(f"\nspeedup ({backends[0]} vs {backends[-1]}): "
              f"{times[-1] / times[0]:.2f}x on the epoch benchmark")


if __name__ == "__main__":
    main()
