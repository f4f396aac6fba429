"""Compare the compiled GRU kernel against the numpy fallback.

    python benchmarks/bench_gru.py [--repeat 5] [--json out.json]

Times the fused GRU forward and backward over a few batch shapes, then one
full training epoch of the model on a small synthetic corpus per backend.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from chargepred.experiments import configure, prepare_synthetic
from chargepred.model import ModelConfig, train
from chargepred.numeric import kernels
from chargepred.synthetic import generate_synthetic_corpus

SHAPES = [(8, 50, 32), (32, 100, 64), (32, 200, 128)]  # (batch, steps, hidden)


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernel(backend: str, B: int, m: int, h: int, repeat: int) -> dict:
    impl = kernels.get_backend(backend)
    rng = np.random.default_rng(0)
    xw = rng.normal(scale=0.5, size=(B, m, 3 * h))
    wh = rng.normal(scale=1 / np.sqrt(h), size=(h, 3 * h))
    mask = np.ones((B, m))
    mask[B // 2:, m // 2:] = 0.0
    H, cache = impl.gru_forward(xw, wh, mask)
    dH = rng.normal(size=H.shape)
    fwd = best_of(lambda: impl.gru_forward(xw, wh, mask), repeat)
    bwd = best_of(lambda: impl.gru_backward(dH, H, cache, wh, mask), repeat)
    return {"forward_s": fwd, "backward_s": bwd}


def bench_epoch(backend: str, repeat: int) -> float:
    corpus = prepare_synthetic(generate_synthetic_corpus(5, 40, seed=0))
    config = configure(ModelConfig(d_emb=32, d_h=32, epochs=1, batch_size=8), corpus)
    kernels.set_backend(backend)
    try:
        return best_of(lambda: train(corpus.train, corpus.def_tokens, config), repeat)
    finally:
        kernels.set_backend("cython" if "cython" in kernels.BACKENDS else "python")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="also write results here")
    args = parser.parse_args()

    backends = sorted(kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled extension not built; timing the numpy fallback only")
    results: dict = {"kernel": [], "epoch": {}}
    print(f"{'shape (B,m,h)':<18}" + "".join(f"{b + ' fwd':>14}{b + ' bwd':>14}" for b in backends) + f"{'speedup':>10}")
    for B, m, h in SHAPES:
        row = {"shape": [B, m, h]}
        for b in backends:
            row[b] = bench_kernel(b, B, m, h, args.repeat)
        line = f"{str((B, m, h)):<18}" + "".join(
            f"{row[b]['forward_s'] * 1e3:>12.2f}ms{row[b]['backward_s'] * 1e3:>12.2f}ms" for b in backends)
        if len(backends) == 2:
            total = {b: row[b]["forward_s"] + row[b]["backward_s"] for b in backends}
            row["speedup"] = total["python"] / total["cython"]
            line += f"{row['speedup']:>9.1f}x"
        print(line)
        results["kernel"].append(row)

    for b in backends:
        results["epoch"][b] = bench_epoch(b, max(1, args.repeat // 2))
        print(f"one training epoch (C=5, 200 facts, d_h=32) with {b}: {results['epoch'][b]:.2f}s")

    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
