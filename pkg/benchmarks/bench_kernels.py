"""Time the numba kernels against their numpy fallbacks on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--sequences 200] [--json out.json]

Each kernel is run once per backend before timing, so numba compilation
(or cache loading) is excluded. Outputs are compared between backends and
the largest absolute difference is reported next to the timings.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from vntpp._accel import HAVE_NUMBA, backend_scope
from vntpp.hawkes import GaussianKernel, HawkesSpec, generate_dataset, load_spec, simulate_arrays
from vntpp.kernels import hawkes as hk
from vntpp.kernels import quadrature as qd
from vntpp.kernels.svd import jacobi_svd


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(x, dtype=float)) for x in out])
    return np.ravel(np.asarray(out, dtype=float))


def _time(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n_seq: int):
    s1 = load_spec("synthetic1")
    base = load_spec("synthetic2")
    s2 = HawkesSpec(base.mu, base.a, GaussianKernel(0.5, 0.3), base.horizon)
    d1 = generate_dataset(s1, n_seq, seed=11)
    d2 = generate_dataset(s2, n_seq, seed=12)
    seqs = list(d1)

    def packed(ds):
        types = np.concatenate([s.types for s in ds]).astype(np.int64)
        times = np.concatenate([s.times for s in ds])
        offsets = np.concatenate([[0], np.cumsum([len(s) for s in ds])]).astype(np.int64)
        horizons = np.array([s.horizon for s in ds])
        return types, times, offsets, horizons

    p1 = packed(d1)
    p2 = packed(d2)
    u_gauss = np.random.default_rng(0).random((len(p2[0]) + len(d2), 20))
    gk = s2.kernel
    long_seq = max(seqs, key=len)
    grid = np.linspace(0.0, long_seq.horizon, 2000)
    lam = np.abs(np.random.default_rng(2).normal(size=(4000, 3))) + 0.1
    X = np.random.default_rng(3).normal(size=(5000, 20)) @ np.diag(np.linspace(3, 0.1, 20))

    return {
        "thinning (exp kernel, T=2000)": lambda: simulate_arrays(s1, 2000.0, seed=5),
        "thinning (gauss kernel, T=500)": lambda: simulate_arrays(s2, 500.0, seed=6),
        f"exp loglik ({n_seq} seqs)": lambda: hk.exp_loglik(*p1, s1.mu, s1.a, s1.kernel.beta),
        f"gauss loglik ({n_seq} seqs, M=20)": lambda: hk.gauss_loglik(*p2, s2.mu, s2.a, gk.center, gk.width, u_gauss),
        "intensity grid (2000 points)": lambda: hk.grid_intensity(long_seq.types, long_seq.times, grid, s1.mu, s1.a,
                                                                  hk.EXPONENTIAL, s1.kernel.beta),
        "trapezoid increments (n_sub=257)": lambda: hk.compensator_increments(long_seq.types, long_seq.times, s2.mu,
                                                                              s2.a, hk.GAUSSIAN, gk.center, gk.width,
                                                                              257),
        "quadrature accumulate (4000x3)": lambda: qd.accumulate(lam, 0.01, qd.TRAPEZOID),
        "fused head quadrature (n=1000)": lambda: qd.head_quadrature(np.array([0.2, -0.5, 1.0]),
                                                                     np.array([0.7, 1.2, 0.3]), qd.EXPONENTIAL,
                                                                     0.01, 1000, qd.RIGHT_RIEMANN),
        "jacobi svd (5000x20)": lambda: jacobi_svd(X)[1],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sequences", type=int, default=200)
    ap.add_argument("--json", help="also write the results to this file")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rows = []
    for name, fn in cases(args.sequences).items():
        with backend_scope("numba"):
            t_nb = _time(fn, args.repeat)
            out_nb = _flat(fn())
        with backend_scope("numpy"):
            t_np = _time(fn, args.repeat)
            out_np = _flat(fn())
        diff = float(np.max(np.abs(out_nb - out_np))) if out_nb.shape == out_np.shape else float("nan")
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb, "max_abs_diff": diff})

    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba [s]':>10}  {'numpy [s]':>10}  {'speedup':>8}  {'max |diff|':>10}")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['numba_s']:>10.4f}  {r['numpy_s']:>10.4f}  {r['speedup']:>7.1f}x"
              f"  {r['max_abs_diff']:>10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
