#!/usr/bin/env python3
"""Compare the numba kernel backend against the pure-numpy fallback.

Runs the same workloads in two child processes, one with
MANIFOLD_ILPR_NUMBA=1 and one with MANIFOLD_ILPR_NUMBA=0, and prints a
side-by-side table. Each workload is executed twice per process and the
second (warm) timing is reported, so numba compilation cost is excluded;
run the script twice if the on-disk kernel cache is cold.

    python benchmarks/backend_benchmark.py
"""

import json
import os
import subprocess
import sys
import time


def workloads():
    import numpy as np

    from manifold_ilpr import accel, spd
    from manifold_ilpr.bandwidth import GridSpec, select_bandwidth
    from manifold_ilpr.embedding import EmbedConfig, tsne_from_distances
    from manifold_ilpr.regression import Dataset, FitConfig, ilpr_epm_fit_many
    from manifold_ilpr.simulation import (
        TrueModel,
        _realization_rng,
        add_lognormal_noise_many,
        gen_covariates,
        true_response_many,
    )

    lc = spd.EpmMetric(spd.LOG_CHOLESKY)
    rng = _realization_rng(99, 1, 6, 0)
    model = TrueModel.draw(1, 6, rng)
    x = gen_covariates(200, 1, rng)
    ys = add_lognormal_noise_many(true_response_many(model, x), 0.5, rng)
    ds = Dataset(x, ys)

    pts = rng.standard_normal((400, 40))
    d = np.sqrt(np.maximum(accel.pairwise_sq_dists(pts[:120]), 0.0))

    def loocv_sweep():
        select_bandwidth(ds, 1, lc, GridSpec(num_points=20))

    def fit_grid():
        ilpr_epm_fit_many(ds, ds.x, FitConfig(1, 0.5), lc)

    def tsne_small():
        tsne_from_distances(d, EmbedConfig(perplexity=15.0, iterations=150, seed=0))

    def pairwise():
        accel.pairwise_sq_dists(pts)

    return [
        ("loocv sweep (N=200, 20 bandwidths)", loocv_sweep),
        ("local linear fit at 200 queries", fit_grid),
        ("t-SNE 120 points, 150 iterations", tsne_small),
        ("pairwise distances 400x400", pairwise),
    ]


def run_child():
    from manifold_ilpr import accel

    results = {"backend": accel.backend(), "timings": {}}
    for name, fn in workloads():
        fn()  # warm (jit compile, allocator)
        t0 = time.perf_counter()
        fn()
        results["timings"][name] = time.perf_counter() - t0
    json.dump(results, sys.stdout)


def main():
    if "--child" in sys.argv:
        run_child()
        return
    rows = {}
    backends = {}
    for flag in ("1", "0"):
        env = dict(os.environ, MANIFOLD_ILPR_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        data = json.loads(out.stdout)
        backends[flag] = data["backend"]
        for name, seconds in data["timings"].items():
            rows.setdefault(name, {})[flag] = seconds
    if backends["1"] != "numba":
        print("warning: numba backend unavailable; both columns ran pure numpy")
    width = max(len(name) for name in rows)
    print(f"{'workload':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, t in rows.items():
        speed = t["0"] / t["1"] if t["1"] > 0 else float("inf")
        print(f"{name:<{width}}  {t['1']:>9.4f}s  {t['0']:>9.4f}s  {speed:>7.2f}x")


if __name__ == "__main__":
    main()
