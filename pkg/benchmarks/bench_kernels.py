"""Timing of the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends are imported directly, so the comparison does not depend on
PACKINGLAB_PURE_PYTHON.  Outputs are checked for equality before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from packinglab import _pykernels
from packinglab.kernels import mix

try:
    from packinglab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _random_dag(n: int, deg: float, rng):
    m = int(n * deg)
    a = rng.integers(0, n, m)
    b = rng.integers(0, n, m)
    keep = a != b
    a, b = a[keep], b[keep]
    src, dst = np.minimum(a, b), np.maximum(a, b)
    e = np.unique(np.stack([src, dst], 1), axis=0)
    order = np.argsort(e[:, 1], kind="stable")
    pred_ptr = np.r_[0, np.cumsum(np.bincount(e[:, 1], minlength=n))].astype(np.int64)
    pred_idx = e[order, 0].astype(np.int64)
    und = np.concatenate([e, e[:, ::-1]])
    und = und[np.argsort(und[:, 0], kind="stable")]
    und_ptr = np.r_[0, np.cumsum(np.bincount(und[:, 0], minlength=n))].astype(np.int64)
    return pred_ptr, pred_idx, und_ptr, und[:, 1].astype(np.int64)


def cases(rng):
    n = 20_000
    pp, px, up, ux = _random_dag(n, 3.0, rng)
    order = np.arange(n, dtype=np.int64)
    yield "greedy_accept (n=2e4)", lambda k: k.greedy_accept(order, up, ux)
    yield "ek_rounds k=8 (n=2e4)", lambda k: k.ek_rounds(pp, px, 8)
    yield "einf_dfs (n=2e4)", lambda k: k.einf_dfs(pp, px)

    reps, nsite = 2000, 4
    counts = rng.poisson(1.5, size=(reps, nsite))
    per = counts.sum(1)
    site = np.repeat(np.tile(np.arange(nsite), reps), counts.ravel()).astype(np.int64)
    offsets = np.r_[0, np.cumsum(per)].astype(np.int64)
    hmat = (rng.random((nsite, nsite)) < 0.6).astype(float)
    hmat = np.maximum(hmat, hmat.T)
    key = mix(1, 2)
    yield "thin_atomic_batch (2e3 reps)", lambda k: k.thin_atomic_batch(offsets, site, hmat, key, 0, 3)

    L = 2000.0
    pos = rng.random(int(L * 10)) * L
    yield "rsa_line (L=2e3, 2e4 rods)", lambda k: k.rsa_line(pos, L, 1.0)


def _time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, call in cases(rng):
        a, b = call(_pykernels), call(_ckernels)
        if not np.array_equal(np.asarray(a), np.asarray(b)):
            raise SystemExit(f"backends disagree on {name}")
        tp = _time(lambda: call(_pykernels), args.repeat)
        tc = _time(lambda: call(_ckernels), args.repeat)
        print(f"{name:32s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
