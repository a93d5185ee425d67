"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--paths 200000] [--repeat 3]

Covers the hot paths: the fused ADI sweep, batched Crank-Nicolson steps,
strike-axis spline events, Monte Carlo path generation (both drift modes)
and the counter-based normal generator. The first numba call of each kernel
triggers compilation and is excluded from the timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lmmpde import kernels
from lmmpde.heatpde import AxisMap, CnStepper, adi_step_2d
from lmmpde.model import LmmConfig
from lmmpde.mcbench import McConfig, _Market


def _time(fn, repeat: int) -> float:
    fn()  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(n_paths: int):
    rng = np.random.default_rng(0)
    j = 401
    nk = 81
    surf3 = rng.random((nk, j + 1, j + 1))
    surf1 = rng.random((nk, j + 1))
    cfg = LmmConfig(n=11)
    mkt = _Market.build(cfg)
    key = kernels.stream_key(7, 1)
    nodes = np.linspace(0.0, 0.5, 81)
    vals = rng.random((5000, 81))
    queries = np.clip(vals * 0.5, 0.0, 0.5)

    def make(backend):
        kernels.set_backend(backend)
        st0 = CnStepper(AxisMap(gamma=1.2, shift=0.1), 0.4, j, 0.025)
        st1 = CnStepper(AxisMap(gamma=0.9, shift=-0.2), 0.05, j, 0.025)
        cases = {
            "adi step (81x402x402)": lambda: adi_step_2d(surf3, st0, st1),
            "cn step (81x402)": lambda: st0.step(surf1),
            "spline event (5000x81)": lambda: kernels.spline_eval(
                nodes, vals, kernels.spline_coeffs(nodes, vals), queries),
            f"ratchet paths frozen ({n_paths})": lambda: kernels.ratchet_paths(
                key, 0, n_paths, mkt.lnl0, mkt.alpha, mkt.c, mkt.chol,
                mkt.mu_frozen, mkt.rho_c2, False, 1, 0.10, 0.2, 0.9, 0.0),
            f"ratchet paths full ({n_paths // 5})": lambda: kernels.ratchet_paths(
                key, 0, n_paths // 5, mkt.lnl0, mkt.alpha, mkt.c, mkt.chol,
                mkt.mu_frozen, mkt.rho_c2, True, 5, 0.10, 0.2, 0.9, 0.0),
            "normals (2e6)": lambda: kernels.normals(key, 0, 2_000_000),
        }
        return cases

    return make


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    make = build_cases(args.paths)
    results: dict[str, dict[str, float]] = {}
    for backend in ("numba", "numpy") if kernels.HAVE_NUMBA else ("numpy",):
        for name, fn in make(backend).items():
            results.setdefault(name, {})[backend] = _time(fn, args.repeat)

    width = max(len(k) for k in results)
    print(f"{'kernel'.ljust(width)}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, t in results.items():
        tn = t.get("numba")
        tp = t.get("numpy")
        if tn is None:
            print(f"{name.ljust(width)}  {'-':>10}  {tp * 1e3:>8.1f}ms  {'-':>8}")
        else:
            print(f"{name.ljust(width)}  {tn * 1e3:>8.1f}ms  {tp * 1e3:>8.1f}ms  "
                  f"{tp / tn:>7.1f}x")
    kernels.set_backend("numba" if kernels.HAVE_NUMBA else "numpy")


if __name__ == "__main__":
    main()
