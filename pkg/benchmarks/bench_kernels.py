#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy/SciPy fallback.

Times the censored-Gaussian primitives on large arrays and one end-to-end
estimation trial under each backend (the trial is re-run in a subprocess
with SWMIMO_PURE=1 to force the fallback).

Usage: python benchmarks/bench_kernels.py [--size 2000000] [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

import swmimo.kernels as K


def bench(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_table(size, repeats):
    rng = np.random.default_rng(0)
    lo = rng.standard_normal(size) * 2
    up = lo + rng.uniform(0.05, 1.5, size)
    lo[rng.random(size) < 0.1] = -np.inf
    up[rng.random(size) < 0.1] = np.inf
    mu = rng.standard_normal(size)

    rows = []
    cases = [
        ("log_cdf_diff", lambda impl: impl[0](lo, up, mu, 0.7071)),
        ("censored_moments", lambda impl: impl[1](lo, up, mu, 0.7071)),
    ]
    numpy_impl = (K._log_cdf_diff_np, K._censored_moments_np)
    for name, call in cases:
        t_np = bench(lambda: call(numpy_impl), repeats)
        row = {"kernel": name, "n": size, "numpy_s": t_np}
        if K._IMPL is not None:
            fast_impl = (
                lambda a, b, c, d: K._IMPL.log_cdf_diff(a, b, c, d),
                lambda a, b, c, d: K._IMPL.censored_moments(a, b, c, d),
            )
            t_cy = bench(lambda: call(fast_impl), repeats)
            row.update(cython_s=t_cy, speedup=t_np / t_cy)
        rows.append(row)
    return rows


TRIAL_SNIPPET = r"""
import time
import numpy as np
import swmimo
from swmimo.channel import SystemConfig
from swmimo.harness import make_scene, estimate_scene, trial_rng

cfg = SystemConfig(M=16, K=2, R=8, D=4, paths=(2, 2), powers=(1.0, 1.0), bits=3,
                   frame_len=12, n_frames=20, res_angle=2, res_delay=2)
best = float("inf")
for t in range(3):
    scene = make_scene(cfg, trial_rng(0, 0, t))
    t0 = time.perf_counter()
    estimate_scene(scene, "nfcfgs")
    best = min(best, time.perf_counter() - t0)
print(swmimo.BACKEND, best)
"""


def end_to_end():
    rows = []
    for pure in (False, True):
        env = dict(os.environ)
        if pure:
            env["SWMIMO_PURE"] = "1"
        else:
            env.pop("SWMIMO_PURE", None)
        out = subprocess.run(
            [sys.executable, "-c", TRIAL_SNIPPET], env=env, capture_output=True, text=True, check=True
        )
        backend, secs = out.stdout.split()
        rows.append({"trial_backend": backend, "best_s": float(secs)})
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=2_000_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"active backend: {K.BACKEND}")
    for row in kernel_table(args.size, args.repeats):
        print(json.dumps(row))
    for row in end_to_end():
        print(json.dumps(row))


if __name__ == "__main__":
    main()
