#!/usr/bin/env python3
"""Benchmark the compiled step kernels against the NumPy fallback.

Microbenchmarks call both implementations directly; the end-to-end section
reruns a guided-infill sampling loop in subprocesses with the backend
forced via GUIDEDWAVE_KERNELS, so the numbers reflect exactly what each
backend delivers in practice.

Usage: python benchmarks/bench_backends.py [--sizes 32,256,4096]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from guidedwave import _kernels_py
from guidedwave import backend

try:
    from guidedwave import _kernels
except ImportError:
    _kernels = None


def _time(fn, *args, repeat=5, min_seconds=0.1):
    best = float("inf")
    for _ in range(repeat):
        count = 0
        start = time.perf_counter()
        while True:
            fn(*args)
            count += 1
            elapsed = time.perf_counter() - start
            if elapsed >= min_seconds:
                break
        best = min(best, elapsed / count)
    return best


SAMPLER_SNIPPET = """
import time
import numpy as np
from guidedwave.denoise import GaussianPrior, gaussian_denoiser
from guidedwave.sampler import GuidanceConfig, ddpm_guided
from guidedwave.signals import Signal
from guidedwave.tasks import infill_task

n = {n}
den = gaussian_denoiser(GaussianPrior(mean=np.zeros(n), cov=np.ones(n)))
task = infill_task(Signal(np.sin(np.arange(float(n)))), n // 3, n // 3)
cfg = GuidanceConfig(steps=200, data_consistency=True)
runs = {runs}
start = time.perf_counter()
for i in range(runs):
    ddpm_guided(den, task, cfg, np.random.default_rng([1, i]))
print((time.perf_counter() - start) / runs)
"""


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="32,256,4096",
                        help="comma-separated vector lengths")
    parser.add_argument("--runs", type=int, default=20,
                        help="sampler runs per backend for the e2e section")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"active backend: {backend.BACKEND}")
    if _kernels is None:
        print("compiled extension not built; showing NumPy timings only")

    kernels = [
        ("lincomb", lambda mod, x, y, z: mod.lincomb(0.3, x, -0.7, y)),
        ("ddpm_update", lambda mod, x, y, z: mod.ddpm_update(x, y, z, 0.2, 0.7, 0.1)),
        ("scaled_diff", lambda mod, x, y, z: mod.scaled_diff(x, y, 0.6, 0.8)),
        ("diag_posterior", lambda mod, x, y, z: mod.diag_posterior(x, y, z, 0.5)),
    ]
    header = f"{'kernel':<16}{'n':>6}{'numpy':>12}{'compiled':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal((2, n))
        z = np.abs(rng.standard_normal(n))
        for name, call in kernels:
            t_py = _time(call, _kernels_py, x, y, z)
            if _kernels is not None:
                t_c = _time(call, _kernels, x, y, z)
                print(f"{name:<16}{n:>6}{t_py * 1e6:>10.2f}us"
                      f"{t_c * 1e6:>10.2f}us{t_py / t_c:>8.1f}x")
            else:
                print(f"{name:<16}{n:>6}{t_py * 1e6:>10.2f}us{'-':>12}{'-':>9}")

    print()
    print(f"end-to-end: 200-step guided infill, mean seconds/run over "
          f"{args.runs} runs")
    results = {}
    modes = ["python"] + (["compiled"] if _kernels is not None else [])
    for mode in modes:
        env = dict(os.environ, GUIDEDWAVE_KERNELS=mode)
        snippet = SAMPLER_SNIPPET.format(n=64, runs=args.runs)
        out = subprocess.run([sys.executable, "-c", snippet], env=env,
                             capture_output=True, text=True, check=True)
        results[mode] = float(out.stdout.strip())
        print(f"  {mode:<9} {results[mode] * 1e3:8.2f} ms/run")
    if len(results) == 2:
        print(f"  speedup   {results['python'] / results['compiled']:8.2f}x")


if __name__ == "__main__":
    main()
