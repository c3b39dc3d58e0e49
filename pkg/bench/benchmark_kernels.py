#!/usr/bin/env python3
"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Times the three hot paths (Gini split search, forest traversal, Lloyd
k-means) on synthetic workloads sized like a real training run.  The numba
columns include a warm-up call so JIT compilation is not billed to the
measurement.

    python bench/benchmark_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from hcti import kernels


def _time(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_best_split(impls, repeats):
    # Node-sized input: tree building calls this thousands of times on
    # shrinking subsets, so per-call cost at small n is what matters.
    rng = np.random.default_rng(1)
    X = np.ascontiguousarray(rng.normal(size=(160, 15)))
    y = (rng.random(160) < 0.4).astype(np.int64)

    def run_many(fn):
        for _ in range(500):
            fn(X, y, 5)

    rows = {}
    for name, fns in impls.items():
        fns["best_split"](X, y, 5)  # warm-up / JIT
        rows[name] = _time(run_many, fns["best_split"], repeats=repeats)
    return "best_split (160x15, 500 calls)", rows


def bench_training(impls, repeats):
    from datetime import timedelta

    from hcti.risk.forest import Hyperparams, train_ensemble
    from hcti.risk.windows import LabeledWindow
    from hcti.scenarios import ScenarioClass
    from hcti.util import parse_ts

    rng = np.random.default_rng(7)
    X = rng.normal(size=(400, 15))
    X[200:, :4] += 3.0
    y = np.array([0] * 200 + [1] * 200)
    t0 = parse_ts("2025-01-01T00:00:00Z")
    windows = [LabeledWindow("o", ScenarioClass.DENIAL,
                             t0 + timedelta(hours=i), bool(y[i]),
                             features=X[i]) for i in range(400)]
    params = Hyperparams(n_trees=100, seed=3)

    rows = {}
    saved = kernels.best_split
    try:
        for name, fns in impls.items():
            kernels.best_split = fns["best_split"]
            train_ensemble(windows, params)  # warm-up / JIT
            rows[name] = _time(train_ensemble, windows, params,
                               repeats=repeats)
    finally:
        kernels.best_split = saved
    return "train_ensemble (400 windows, 100 trees)", rows


def bench_forest_predict(impls, repeats):
    from datetime import timedelta

    from hcti.risk.forest import Hyperparams, train_ensemble
    from hcti.risk.windows import LabeledWindow
    from hcti.scenarios import ScenarioClass
    from hcti.util import parse_ts

    rng = np.random.default_rng(2)
    X = rng.normal(size=(400, 15))
    X[200:, :4] += 3.0
    y = np.array([0] * 200 + [1] * 200)
    t0 = parse_ts("2025-01-01T00:00:00Z")
    windows = [LabeledWindow("o", ScenarioClass.DENIAL,
                             t0 + timedelta(hours=i), bool(y[i]),
                             features=X[i]) for i in range(400)]
    ensemble = train_ensemble(windows, Hyperparams(n_trees=100, seed=3))
    probe = np.ascontiguousarray(rng.normal(size=(20_000, 15)))
    args = (ensemble.features, ensemble.thresholds, ensemble.lefts,
            ensemble.rights, ensemble.values, ensemble.tree_roots, probe)
    rows = {}
    for name, fns in impls.items():
        fns["forest_predict"](*args)
        rows[name] = _time(fns["forest_predict"], *args, repeats=repeats)
    return "forest_predict (100 trees x 20k rows)", rows


def bench_kmeans(impls, repeats):
    rng = np.random.default_rng(3)
    X = np.ascontiguousarray(np.vstack([
        rng.normal(0, 1, size=(5000, 17)),
        rng.normal(6, 1, size=(5000, 17)),
    ]))
    centers0 = X[rng.choice(10_000, size=70, replace=False)].copy()
    rows = {}
    for name, fns in impls.items():
        fns["kmeans_run"](X, centers0, 25)
        rows[name] = _time(fns["kmeans_run"], X, centers0, 25,
                           repeats=repeats)
    return "kmeans (10k x 17, k=70)", rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    impls = kernels.implementations()
    print(f"numba available: {kernels.HAVE_NUMBA}; "
          f"active path: {'numba' if kernels.USE_NUMBA else 'numpy'} "
          f"(HCTI_DISABLE_NUMBA toggles)\n")
    header = f"{'kernel':40s} " + " ".join(f"{name:>12s}" for name in impls)
    print(header)
    print("-" * len(header))
    for bench in (bench_best_split, bench_training, bench_forest_predict,
                  bench_kmeans):
        label, rows = bench(impls, args.repeats)
        cells = " ".join(f"{rows[name] * 1000:>10.2f}ms" for name in impls)
        speedup = ""
        if "numba" in rows:
            speedup = f"   ({rows['numpy'] / rows['numba']:.1f}x)"
        print(f"{label:40s} {cells}{speedup}")


if __name__ == "__main__":
    main()
