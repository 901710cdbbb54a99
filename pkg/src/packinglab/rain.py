"""Sampling of the Poisson rain and of its random conflict relation."""
from __future__ import annotations

import csv
import logging
import warnings
from pathlib import Path

import numpy as np

from . import kernels
from .core import (
    Atomic,
    BudgetError,
    Box,
    ConflictRealization,
    ContinuousBox,
    DiscreteSites,
    Homogeneous,
    Model,
    ModelError,
    PiecewiseGrid,
    TableKernel,
    TimedPointPattern,
    memory_budget_bytes,
)

log = logging.getLogger(__name__)

# stream tags mixed into user seeds so rain and conflicts never share draws
STREAM_RAIN = 0x5241494E
STREAM_CONFLICT = 0x434F4E46

BYTES_PER_POINT = 96  # locations, timer, id, site, graph bookkeeping


class CostWarning(RuntimeWarning):
    """Quadratic-cost fallback in pair enumeration."""


def rain_generator(seed: int, stream: int = STREAM_RAIN) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=kernels.mix(int(seed), stream)))


def conflict_key(seed: int) -> int:
    return kernels.mix(int(seed), STREAM_CONFLICT)


def _check_budget(mean_count: float, dim: int) -> None:
    budget = memory_budget_bytes()
    # plan for a generous upper quantile of the Poisson count
    hi = mean_count + 6.0 * np.sqrt(max(mean_count, 1.0))
    need = hi * (BYTES_PER_POINT + 8 * dim)
    if need > budget:
        raise BudgetError(need, budget)


def _default_window(model: Model) -> Box | None:
    if isinstance(model.space, ContinuousBox):
        return model.space.box
    return None


def sample_rain(model: Model, window: Box | None = None, t_max: float = 1.0, seed: int = 0) -> TimedPointPattern:
    """Poisson rain on ``window x [0, t_max)``.

    Count is Poisson(Lambda(window) t_max), locations are i.i.d. from Lambda
    restricted to the window and timers are i.i.d. uniform on [0, t_max).
    Exactly tied timers (probability zero, but possible in floating point)
    are separated by bumping the later-sampled point one ulp upward.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if window is None:
        window = _default_window(model)
    rng = rain_generator(seed)
    m = model.measure
    sp = model.space
    sites = None
    if isinstance(m, Atomic):
        locs_all = sp.locations
        inside = np.ones(len(locs_all), bool) if window is None else window.contains(locs_all)
        lam = np.where(inside, m.weights, 0.0) * t_max
        _check_budget(float(lam.sum()), sp.dim)
        counts = rng.poisson(lam)
        sites = np.repeat(np.arange(len(lam)), counts)
        # shuffle so ids do not encode the site
        sites = sites[rng.permutation(len(sites))]
        locations = locs_all[sites]
    else:
        mass = model.mass(window) * t_max
        _check_budget(mass, sp.dim)
        n = int(rng.poisson(mass)) if mass > 0 else 0
        lo, hi = np.asarray(window.lower), np.asarray(window.upper)
        if isinstance(m, Homogeneous) or n == 0:
            locations = lo + rng.random((n, sp.dim)) * (hi - lo)
        else:
            (clo, chi), _ = model._grid_cells()
            olo = np.maximum(clo, lo)
            ohi = np.minimum(chi, hi)
            w = m.densities.ravel() * np.prod(np.clip(ohi - olo, 0, None), axis=1)
            cell = rng.choice(len(w), size=n, p=w / w.sum())
            locations = olo[cell] + rng.random((n, sp.dim)) * (ohi[cell] - olo[cell])
    n = len(locations)
    timers = rng.random(n) * t_max
    ties = 0
    if n > 1:
        order = np.argsort(timers, kind="stable")
        st = timers[order]
        dup = np.flatnonzero(np.diff(st) <= 0)
        while len(dup):
            for i in dup:
                # the later-sampled point of the tied pair moves up
                a, b = order[i], order[i + 1]
                j = max(a, b)
                timers[j] = np.nextafter(timers[min(a, b)], np.inf)
                ties += 1
            order = np.argsort(timers, kind="stable")
            st = timers[order]
            dup = np.flatnonzero(np.diff(st) <= 0)
        if ties:
            log.warning("separated %d tied timers", ties)
    if np.any(timers >= t_max):
        raise ModelError("timers", "tie separation pushed a timer to the horizon")
    return TimedPointPattern(
        np.arange(n), np.asarray(locations, float).reshape(n, sp.dim), timers, window, float(t_max), int(seed), sites, ties
    )


# ---------------------------------------------------------------------------
# pair enumeration


def _grid_pairs(locs: np.ndarray, model: Model) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i < j) whose cells are neighbours in a grid of width >= r_max."""
    sp = model.space
    R = float(model.kernel.r_max)
    n, d = locs.shape
    if isinstance(sp, ContinuousBox):
        lo = np.asarray(sp.lower)
        L = sp.lengths
        periodic = sp.periodic
    else:
        lo = locs.min(axis=0)
        L = locs.max(axis=0) - lo + 1e-12
        periodic = False
    if R <= 0:
        ncell = np.ones(d, dtype=np.int64)
    else:
        ncell = np.maximum(1, np.floor(L / R).astype(np.int64))
        # cap cell count so the hash stays proportional to the point count
        while np.prod(ncell.astype(float)) > max(8.0 * n, 1.0) and np.any(ncell > 1):
            ncell = np.maximum(1, ncell // 2)
    width = L / ncell
    cc = np.floor((locs - lo) / width).astype(np.int64)
    cc = np.clip(cc, 0, ncell - 1) if not periodic else cc % ncell
    strides = np.cumprod(np.r_[1, ncell[:-1]])
    cid = cc @ strides
    order = np.argsort(cid, kind="stable")
    sorted_cid = cid[order]
    ncells_total = int(np.prod(ncell))
    starts = np.searchsorted(sorted_cid, np.arange(ncells_total), side="left")
    ends = np.searchsorted(sorted_cid, np.arange(ncells_total), side="right")

    ai, aj = [], []
    offsets = np.stack(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij"), -1).reshape(-1, d)
    for off in offsets:
        nc = cc + off
        if periodic:
            nc = nc % ncell
            valid = np.ones(n, bool)
        else:
            valid = np.all((nc >= 0) & (nc < ncell), axis=1)
        ncid = np.where(valid, np.clip(nc, 0, ncell - 1) @ strides, 0)
        s = np.where(valid, starts[ncid], 0)
        e = np.where(valid, ends[ncid], 0)
        cnt = e - s
        tot = int(cnt.sum())
        if tot == 0:
            continue
        src = np.repeat(np.arange(n), cnt)
        first = np.repeat(s - np.r_[0, np.cumsum(cnt)[:-1]], cnt)
        dst = order[np.arange(tot) + first]
        keep = src < dst
        ai.append(src[keep])
        aj.append(dst[keep])
    if not ai:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    i = np.concatenate(ai)
    j = np.concatenate(aj)
    if periodic and np.any(ncell < 3):
        pairs = np.unique(np.stack([i, j], 1), axis=0)
        i, j = pairs[:, 0], pairs[:, 1]
    return i, j


def candidate_pairs(pattern: TimedPointPattern, model: Model) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs (i < j) with h > 0 and their conflict probabilities."""
    n = len(pattern)
    k = model.kernel
    if n < 2:
        z = np.zeros(0, np.int64)
        return z, z, np.zeros(0)
    if isinstance(k, TableKernel) or k.r_max is None or not np.isfinite(k.r_max):
        if n > 2000:
            warnings.warn(f"all-pairs conflict enumeration over {n} points", CostWarning, stacklevel=3)
        i, j = np.triu_indices(n, 1)
    else:
        i, j = _grid_pairs(pattern.locations, model)
    if isinstance(k, TableKernel):
        s = pattern.sites if pattern.sites is not None else model.site_index(pattern.locations)
        h = k.values[s[i], s[j]]
    else:
        h = model.kernel.of_distance(model.space.distance(pattern.locations[i], pattern.locations[j]))
    keep = h > 0
    return i[keep], j[keep], h[keep]


def sample_conflicts(pattern: TimedPointPattern, model: Model, seed: int = 0) -> ConflictRealization:
    """Independent Bernoulli(h) conflict per unordered pair.

    The uniform behind the pair {a, b} is addressed by (seed, min id, max id),
    so the relation does not depend on how the pattern is ordered.
    """
    i, j, h = candidate_pairs(pattern, model)
    if len(i) == 0:
        return ConflictRealization()
    a = pattern.ids[i]
    b = pattern.ids[j]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    u = kernels.keyed_uniform(conflict_key(seed), lo, hi)
    hit = u < h
    return ConflictRealization(np.stack([lo[hit], hi[hit]], axis=1))


# ---------------------------------------------------------------------------
# CSV round trip


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dump_pattern(pattern: TimedPointPattern, path: str | Path) -> None:
    d = pattern.locations.shape[1] if pattern.locations.ndim == 2 else 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"x{k}" for k in range(d)] + ["timer"])
        for pid, loc, t in zip(pattern.ids.tolist(), pattern.locations, pattern.timers.tolist()):
            w.writerow([pid] + [_fmt(c) for c in loc] + [_fmt(t)])


def load_pattern(path: str | Path, t_max: float | None = None, window: Box | None = None) -> TimedPointPattern:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 2
        rows = [row for row in r if row]
    ids = np.array([int(row[0]) for row in rows], dtype=np.int64)
    locs = np.array([[float(c) for c in row[1:-1]] for row in rows], dtype=float).reshape(len(rows), d)
    timers = np.array([float(row[-1]) for row in rows], dtype=float)
    if t_max is None:
        t_max = float(np.nextafter(timers.max(), np.inf)) if len(timers) else 1.0
    return TimedPointPattern(ids, locs, timers, window, t_max)


def dump_conflicts(rel: ConflictRealization, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id_a", "id_b"])
        w.writerows(rel.edges.tolist())


def load_conflicts(path: str | Path) -> ConflictRealization:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        edges = [(int(a), int(b)) for a, b in (row for row in r if row)]
    return ConflictRealization(edges)


def dump_flags(ids: np.ndarray, kept: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "kept_flag"])
        w.writerows(zip(np.asarray(ids).tolist(), np.asarray(kept, dtype=int).tolist()))


__all__ = [
    "CostWarning",
    "sample_rain",
    "sample_conflicts",
    "candidate_pairs",
    "rain_generator",
    "conflict_key",
    "dump_pattern",
    "load_pattern",
    "dump_conflicts",
    "load_conflicts",
    "dump_flags",
]
