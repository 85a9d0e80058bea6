"""Compare the compiled and pure-Python state recursion kernels.

    python3 benchmarks/bench_kernels.py [--sizes 4 8 16] [--steps 20000] [--repeat 5]

Reports the median time per step of ``lti_scan`` (whole trajectory) and of
``lti_step`` (one call per sample, as in streaming use) for both backends,
and checks that they agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ddfdie import kernels


def _median_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _stable(n: int, rng) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return 0.9 * A / max(abs(np.linalg.eigvals(A)))


def bench(n: int, steps: int, repeat: int, backends) -> list[dict]:
    rng = np.random.default_rng(n)
    A = _stable(n, rng)
    drive = rng.standard_normal((n, steps))
    x0 = np.zeros(n)
    rows = []
    ref = None
    for b in backends:
        X = kernels.lti_scan(A, drive, x0, backend=b)
        if ref is None:
            ref = X
        err = float(np.max(np.abs(X - ref)))
        t_scan = _median_time(lambda: kernels.lti_scan(A, drive, x0, backend=b), repeat)
        x, out = np.zeros(n), np.empty(n)
        n_step = min(steps, 5000)
        rows_d = np.ascontiguousarray(drive.T)

        def loop():
            nonlocal x, out
            for k in range(n_step):
                kernels.lti_step(A, x, rows_d[k], out, backend=b)
                x, out = out, x

        t_step = _median_time(loop, repeat)
        rows.append({"backend": b, "n": n, "scan_s_per_step": t_scan / steps,
                     "step_s_per_call": t_step / n_step, "max_abs_diff": err})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the fallback only")
    print(f"{'backend':8s} {'n':>3s} {'scan s/step':>12s} {'step s/call':>12s} {'max diff':>9s}")
    results = []
    for n in args.sizes:
        for r in bench(n, args.steps, args.repeat, backends):
            results.append(r)
            print(f"{r['backend']:8s} {r['n']:3d} {r['scan_s_per_step']:12.3e} "
                  f"{r['step_s_per_call']:12.3e} {r['max_abs_diff']:9.1e}")
    if len(backends) == 2:
        for n in args.sizes:
            py, cy = [r for r in results if r["n"] == n]
            print(f"n={n:2d}: scan speed-up {py['scan_s_per_step'] / cy['scan_s_per_step']:.1f}x, "
                  f"step speed-up {py['step_s_per_call'] / cy['step_s_per_call']:.1f}x")
    return results


if __name__ == "__main__":
    main()
