"""Monte Carlo estimators: the brute-force side of every solver cross-check.

Atomic models go through a batched path (counts, timers and conflicts for a
chunk of replications at once, flags from the compiled kernel).  Other
models are simulated one replication at a time through ``rain`` and
``matern``.  Replication r always uses streams derived from (seed, r) or
from the fixed chunk that contains r, so results do not depend on ``jobs``.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import Box, Model, TimedPointPattern
from .matern import INF, build_conflict_graph, partition_from_rows
from .rain import STREAM_CONFLICT, rain_generator, sample_conflicts, sample_rain

CHUNK = 20_000  # replications per batch; fixed so streams do not depend on jobs
STREAM_CHUNK = 0x43484E4B


# ---------------------------------------------------------------------------
# selectors


def parse_selector(sel):
    """Normalize a process selector.

    int k >= 0 -> ("k", k); "inf"/inf -> ("inf",); "I" -> ("I",);
    ("QR", k) or "QRk" -> ("QR", k) for the joint (Q_1..Q_k, R_k) functional.
    """
    if isinstance(sel, tuple) and sel and sel[0] in ("k", "inf", "I", "QR"):
        return sel
    if sel == INF or sel == "inf":
        return ("inf",)
    if sel == "I":
        return ("I",)
    if isinstance(sel, str) and sel.startswith("QR"):
        return ("QR", int(sel[2:]))
    if isinstance(sel, (int, np.integer)) and sel >= 0:
        return ("k", int(sel))
    raise ValueError(f"unknown process selector {sel!r}")


def _kmax(selectors) -> int:
    k = 1
    for s in selectors:
        if s[0] in ("k", "QR"):
            k = max(k, s[1])
    return k


def _class_masks(sel, flags: np.ndarray, kmax: int) -> list[np.ndarray]:
    """Boolean masks (one per test-function slot) over the points of a batch."""
    if sel[0] == "k":
        return [flags[sel[1]].astype(bool)]
    if sel[0] == "inf":
        return [flags[kmax + 1].astype(bool)]
    if sel[0] == "I":
        return [flags[kmax + 2].astype(bool)]
    Q, R = partition_from_rows(flags[: sel[1] + 1], sel[1])
    return Q + [R]


# ---------------------------------------------------------------------------
# per-replication reductions


def segment_product(values: np.ndarray, seg: np.ndarray, nseg: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-segment product of values in [0, 1], with zero-safe bookkeeping.

    Returns (product, number of zeros, log product of the non-zero factors).
    """
    zero = values == 0
    zeros = np.bincount(seg, weights=zero.astype(float), minlength=nseg)
    logs = np.bincount(seg, weights=np.log(np.where(zero, 1.0, values)), minlength=nseg)
    prod = np.where(zeros > 0, 0.0, np.exp(logs))
    return prod, zeros, logs


def mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two replications")
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    return mean, sd / math.sqrt(n)


def ratio_se(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Ratio of means with a delta-method standard error."""
    n = len(num)
    mn, md = float(np.mean(num)), float(np.mean(den))
    if md == 0:
        raise ZeroDivisionError("no anchor points in any replication")
    r = mn / md
    resid = (num - r * den) / md
    return r, float(np.std(resid, ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class Query:
    """One quantity to estimate on shared sample paths.

    kind: "pgfl" (v is one array, or k+1 arrays for a QR selector),
          "count" (v is a 0/1 region indicator),
          "palm"  (v is the test function, region the anchor indicator).
    """

    kind: str
    selector: tuple
    t: float
    v: tuple
    region: np.ndarray | None = None


def _eval_queries(queries, site, rep_of, timers, flags, kmax, R) -> np.ndarray:
    """Per-replication values, shape (len(queries), R) or (len(queries), 2, R) for palm."""
    out = []
    for q in queries:
        alive = timers < q.t
        masks = _class_masks(q.selector, flags, kmax)
        if q.kind == "pgfl":
            vals = np.ones(len(site))
            for mask, v in zip(masks, q.v):
                sel = mask & alive
                vals[sel] = v[site[sel]]
            prod, _, _ = segment_product(vals, rep_of, R)
            out.append(np.stack([prod, np.zeros(R)]))
        elif q.kind == "count":
            sel = masks[0] & alive & (q.region[site] > 0)
            cnt = np.bincount(rep_of[sel], minlength=R).astype(float)
            out.append(np.stack([cnt, np.zeros(R)]))
        elif q.kind == "palm":
            sel = masks[0] & alive
            v = q.v[0]
            vals = np.where(sel, v[site], 1.0)
            _, zeros, logs = segment_product(vals, rep_of, R)
            anchor = sel & (q.region[site] > 0)
            # leave-one-out product over the other selected points
            vx = vals[anchor]
            r = rep_of[anchor]
            z = zeros[r]
            loo = np.where(
                z == 0,
                np.exp(logs[r] - np.log(np.where(vx > 0, vx, 1.0))),
                np.where((z == 1) & (vx == 0), np.exp(logs[r]), 0.0),
            )
            num = np.bincount(r, weights=loo, minlength=R)
            den = np.bincount(r, minlength=R).astype(float)
            out.append(np.stack([num, den]))
        else:
            raise ValueError(q.kind)
    return np.array(out)


def _atomic_chunk(args):
    weights, hmat, queries, seed, c, nrep, t_max, kmax = args
    rng = np.random.Generator(np.random.Philox(key=kernels.mix(kernels.mix(int(seed), STREAM_CHUNK), c)))
    n = len(weights)
    counts = rng.poisson(np.asarray(weights) * t_max, size=(nrep, n))
    per_rep = counts.sum(axis=1)
    site = np.repeat(np.tile(np.arange(n), nrep), counts.ravel())
    rep_of = np.repeat(np.arange(nrep), per_rep)
    timers = rng.random(len(site)) * t_max
    order = np.lexsort((timers, rep_of))
    site, timers, rep_of = site[order], timers[order], rep_of[order]
    offsets = np.r_[0, np.cumsum(per_rep)]
    key = kernels.mix(int(seed), STREAM_CONFLICT)
    flags = kernels.thin_atomic_batch(offsets, site, hmat, key, c * CHUNK, kmax)
    return _eval_queries(queries, site, rep_of, timers, flags, kmax, nrep)


def _continuous_rep(model, queries, seed, r, t_max, kmax, window, evaluator):
    s = kernels.mix(int(seed), r)
    pat = sample_rain(model, window, t_max, s)
    rel = sample_conflicts(pat, model, s)
    g = build_conflict_graph(pat, rel)
    kinds = {q.selector[0] for q in queries}
    n = len(pat)
    flags = np.zeros((kmax + 3, n), dtype=np.int8)
    flags[: kmax + 1] = g.e_rows(kmax)
    if "inf" in kinds:
        flags[kmax + 1] = g.e_inf()
    if "I" in kinds:
        flags[kmax + 2] = g.type_I()
    site = np.arange(len(pat))
    qs = [evaluator(q, pat) for q in queries]
    return _eval_queries(qs, site, np.zeros(len(pat), dtype=np.int64), pat.timers, flags, kmax, 1)


def run_queries(
    model: Model,
    queries: Sequence[Query],
    reps: int,
    seed: int,
    jobs: int = 1,
    window: Box | None = None,
) -> np.ndarray:
    """Per-replication values of every query on shared sample paths."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    t_max = max(q.t for q in queries)
    if t_max <= 0:
        raise ValueError("need a positive time")
    kmax = _kmax(q.selector for q in queries)
    if any(q.selector[0] == "I" and q.t != t_max for q in queries):
        raise ValueError("type I selections are not stable under time restriction; use a single t")
    if model.is_atomic:
        atoms = model.atoms()
        nch = (reps + CHUNK - 1) // CHUNK
        args = [
            (atoms.weights, atoms.hmat, list(queries), seed, c, min(CHUNK, reps - c * CHUNK), t_max, kmax)
            for c in range(nch)
        ]
        if jobs > 1 and nch > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                parts = list(ex.map(_atomic_chunk, args))
        else:
            parts = [_atomic_chunk(a) for a in args]
        return np.concatenate(parts, axis=-1)

    def evaluator(q, pat):
        # continuous queries carry callables; evaluate them on the realized points
        def on_points(f):
            return np.array([float(f(p)) for p in pat.locations]) if len(pat) else np.zeros(0)

        return Query(
            q.kind,
            q.selector,
            q.t,
            tuple(on_points(f) for f in q.v),
            None if q.region is None else on_points(q.region),
        )

    parts = [_continuous_rep(model, queries, seed, r, t_max, kmax, window, evaluator) for r in range(reps)]
    return np.concatenate(parts, axis=-1)


# ---------------------------------------------------------------------------
# public estimators


def _as_fn_or_array(model: Model, v):
    if model.is_atomic:
        n = len(model.measure.weights)
        if callable(v):
            return np.array([float(v(p)) for p in model.space.locations])
        return np.full(n, float(v)) if np.isscalar(v) else np.asarray(v, float)
    if callable(v):
        return v
    c = float(v)
    return lambda p: c


def _region(model: Model, B):
    """Indicator of a region: atom indices / boolean array (atomic) or a Box."""
    if model.is_atomic:
        n = len(model.measure.weights)
        if isinstance(B, Box):
            return B.contains(model.space.locations).astype(float)
        arr = np.asarray(B)
        if arr.dtype == bool and arr.shape == (n,):
            return arr.astype(float)
        ind = np.zeros(n)
        ind[np.atleast_1d(arr).astype(int)] = 1.0
        return ind
    if isinstance(B, Box):
        return lambda p: float(B.contains(np.asarray(p)[None, :])[0])
    if callable(B):
        return B
    raise ValueError("continuous regions must be a Box or an indicator callable")


def pgfl_query(model, selector, t, v) -> Query:
    sel = parse_selector(selector)
    if sel[0] == "QR":
        if len(v) != sel[1] + 1:
            raise ValueError("joint selector needs k+1 test functions")
        vs = tuple(_as_fn_or_array(model, x) for x in v)
    else:
        vs = (_as_fn_or_array(model, v),)
    return Query("pgfl", sel, float(t), vs)


def estimate_pgfl(model: Model, selector, t: float, v, reps: int, seed: int, jobs: int = 1, window=None) -> tuple[float, float]:
    """Mean and standard error of prod_{x in selection on [0,t)} v(x)."""
    vals = run_queries(model, [pgfl_query(model, selector, t, v)], reps, seed, jobs, window)
    return mean_se(vals[0, 0])


def estimate_pgfl_grid(model: Model, selector, times, vs, reps: int, seed: int, jobs: int = 1, window=None):
    """Means and standard errors on a (t, v) grid from one set of sample paths."""
    qs = [pgfl_query(model, selector, t, v) for t in times for v in vs]
    vals = run_queries(model, qs, reps, seed, jobs, window)
    res = np.array([mean_se(vals[i, 0]) for i in range(len(qs))])
    shape = (len(times), len(vs))
    return res[:, 0].reshape(shape), res[:, 1].reshape(shape)


def estimate_moment(model: Model, k, t: float, B, reps: int, seed: int, jobs: int = 1, window=None) -> tuple[float, float]:
    """Mean and standard error of the number of selected points in B on [0, t)."""
    q = Query("count", parse_selector(k), float(t), (), _region(model, B))
    if not model.is_atomic and model.mass() == 0:
        return 0.0, 0.0
    vals = run_queries(model, [q], reps, seed, jobs, window)
    return mean_se(vals[0, 0])


def estimate_moment_curve(model: Model, k, times, B, reps: int, seed: int, jobs: int = 1, window=None):
    qs = [Query("count", parse_selector(k), float(t), (), _region(model, B)) for t in times]
    vals = run_queries(model, qs, reps, seed, jobs, window)
    res = np.array([mean_se(vals[i, 0]) for i in range(len(qs))])
    return res[:, 0], res[:, 1]


def estimate_palm_pgfl(model: Model, selector, t: float, v, B, reps: int, seed: int, jobs: int = 1, window=None):
    """Campbell ratio estimate of the m-weighted average of G^!_y(v) over y in B.

    Numerator: mean of sum_{x in N cap B} prod_{z in N minus x} v(z);
    denominator: mean of N(B).  Standard error by the delta method.
    """
    sel = parse_selector(selector)
    if sel[0] == "QR":
        raise ValueError("Palm estimation takes a single selection")
    q = Query("palm", sel, float(t), (_as_fn_or_array(model, v),), _region(model, B))
    vals = run_queries(model, [q], reps, seed, jobs, window)
    num, den = vals[0, 0], vals[0, 1]
    if not np.any(den > 0):
        raise ZeroDivisionError("anchor region received no selected points in any replication")
    return ratio_se(num, den)


# ---------------------------------------------------------------------------
# expansion identity and the car-parking constant


def expansion_check(pattern, v, cap: int = 12) -> tuple[float, float]:
    """prod v(x) against the terminating alternating sum over unordered tuples.

    ``pattern`` is a TimedPointPattern (v then callable or per-point array) or
    directly the sequence of values v(x_i).
    """
    if isinstance(pattern, TimedPointPattern):
        if callable(v):
            vals = np.array([float(v(p)) for p in pattern.locations])
        else:
            vals = np.asarray(v, float)
    else:
        vals = np.asarray(pattern if v is None else v, float)
    n = len(vals)
    if n > cap:
        raise ValueError(f"pattern of {n} points exceeds the expansion cap {cap}")
    lhs = float(np.prod(vals)) if n else 1.0
    w = 1.0 - vals
    rhs = 1.0
    for i in range(1, n + 1):
        s = 0.0
        for comb in itertools.combinations(range(n), i):
            s += math.prod(w[list(comb)])
        rhs += (-1) ** i * s
    return lhs, rhs


def _renyi_rep(args):
    L, lam, r, t_max, seed, rep = args
    rng = rain_generator(kernels.mix(int(seed), rep))
    n = rng.poisson(lam * L * t_max)
    pos = rng.random(n) * L
    timers = rng.random(n) * t_max
    acc = kernels.rsa_line(pos[np.argsort(timers, kind="stable")], L, r)
    return int(acc.sum()) * r / L


def renyi_density(L: float, lam: float, r: float, t_max: float, reps: int, seed: int, jobs: int = 1) -> tuple[float, float]:
    """Covered fraction of a circle of length L after RSA of rods of length r up to t_max."""
    args = [(L, lam, r, t_max, seed, k) for k in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            dens = list(ex.map(_renyi_rep, args))
    else:
        dens = [_renyi_rep(a) for a in args]
    return mean_se(np.array(dens))


def renyi_pattern(L: float, lam: float, r: float, t_max: float, seed: int, rep: int = 0):
    """The realization used by ``renyi_density`` replication ``rep`` (positions, timers)."""
    rng = rain_generator(kernels.mix(int(seed), rep))
    n = rng.poisson(lam * L * t_max)
    return rng.random(n) * L, rng.random(n) * t_max


# ---------------------------------------------------------------------------
# reporting


def compare(check: str, mc_value: float, stderr: float, solver_value: float, z_max: float = 3.0) -> dict:
    """One entry of a validation report."""
    diff = mc_value - solver_value
    if stderr > 0:
        z = diff / stderr
        ok = abs(z) <= z_max
    else:
        z = 0.0 if abs(diff) <= 1e-12 else math.copysign(math.inf, diff)
        ok = abs(diff) <= 1e-12
    return {"check": check, "mc_value": mc_value, "solver_value": solver_value, "stderr": stderr, "z_score": z, "pass": bool(ok)}


__all__ = [
    "Query",
    "parse_selector",
    "run_queries",
    "estimate_pgfl",
    "estimate_pgfl_grid",
    "estimate_moment",
    "estimate_moment_curve",
    "estimate_palm_pgfl",
    "expansion_check",
    "renyi_density",
    "renyi_pattern",
    "compare",
    "segment_product",
    "mean_se",
    "ratio_se",
]
