"""Domain types: ground spaces, intensity measures, conflict kernels,
timed point patterns and conflict realizations, plus model validation.

A :class:`Model` is the pair (intensity measure, conflict kernel) living on a
ground space.  Everything downstream (sampling, thinning, p.g.fl solvers)
takes a validated model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "QuadratureError",
    "BudgetError",
    "Box",
    "ContinuousBox",
    "DiscreteSites",
    "Homogeneous",
    "Atomic",
    "PiecewiseGrid",
    "HardKernel",
    "ConstantKernel",
    "GaussianKernel",
    "TableKernel",
    "Model",
    "Atoms",
    "Diagnostics",
    "TimedPointPattern",
    "ConflictRealization",
    "kernel_mass_at",
    "validate_model",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "memory_budget_bytes",
]


class ModelError(ValueError):
    """A model invariant is violated."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class QuadratureError(RuntimeError):
    """Deterministic quadrature did not converge within the refinement limit."""

    def __init__(self, message: str, estimates: tuple[float, float]):
        super().__init__(f"{message} (last two estimates: {estimates[0]!r}, {estimates[1]!r})")
        self.estimates = estimates


class BudgetError(MemoryError):
    """Refusal to allocate beyond the configured memory budget."""

    def __init__(self, needed: float, budget: float):
        super().__init__(f"needs ~{needed / 2**20:.1f} MiB, budget is {budget / 2**20:.1f} MiB")
        self.needed = needed
        self.budget = budget


def memory_budget_bytes() -> float:
    import os

    return float(os.environ.get("PACKINGLAB_BUDGET_MB", "1024")) * 2**20


# ---------------------------------------------------------------------------
# ground spaces


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lower)
        hi = tuple(float(b) for b in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ModelError("box", "lower/upper must be non-empty and of equal length")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.asarray(self.lower)) & (pts < np.asarray(self.upper)), axis=1)


@dataclass(frozen=True)
class ContinuousBox:
    """Box in R^d, optionally periodic (a flat torus)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    periodic: bool = True

    def __post_init__(self):
        box = Box(self.lower, self.upper)
        object.__setattr__(self, "lower", box.lower)
        object.__setattr__(self, "upper", box.upper)
        if np.any(box.lengths <= 0):
            raise ModelError("box", "bounds must have positive volume")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def box(self) -> Box:
        return Box(self.lower, self.upper)

    @property
    def lengths(self) -> np.ndarray:
        return self.box.lengths

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.periodic:
            L = self.lengths
            d = d - L * np.round(d / L)
        return d

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(self.displacement(a, b) ** 2, axis=-1))


@dataclass(frozen=True)
class DiscreteSites:
    """Finite set of distinct locations in R^d."""

    locations: np.ndarray

    def __post_init__(self):
        locs = np.atleast_2d(np.asarray(self.locations, dtype=float))
        if locs.ndim != 2 or locs.shape[0] == 0:
            raise ModelError("sites", "need at least one site")
        if len(np.unique(locs, axis=0)) != len(locs):
            raise ModelError("sites", "discrete sites must be pairwise distinct")
        locs.setflags(write=False)
        object.__setattr__(self, "locations", locs)

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @property
    def size(self) -> int:
        return self.locations.shape[0]

    periodic = False

    def displacement(self, a, b):
        return np.asarray(b, dtype=float) - np.asarray(a, dtype=float)

    def distance(self, a, b):
        return np.sqrt(np.sum(self.displacement(a, b) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# intensity measures


@dataclass(frozen=True)
class Homogeneous:
    density: float


@dataclass(frozen=True)
class Atomic:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class PiecewiseGrid:
    """Cell densities on a regular grid covering the whole box (C order)."""

    densities: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.densities, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "densities", d)


# ---------------------------------------------------------------------------
# conflict kernels


@dataclass(frozen=True)
class HardKernel:
    """h(x, y) = 1 if |x - y| <= radius else 0."""

    radius: float

    @property
    def r_max(self) -> float:
        return float(self.radius)

    @property
    def is_binary(self) -> bool:
        return True

    def of_distance(self, r: np.ndarray) -> np.ndarray:
        return (np.asarray(r) <= self.radius).astype(float)


@dataclass(frozen=True)
class ConstantKernel:
    """h(x, y) = p if |x - y| <= radius else 0."""

    p: float
    radius: float

    @property
    def r_max(self) -> float:
        return float(self.radius)

    @property
    def is_binary(self) -> bool:
        return self.p in (0.0, 1.0)

    def of_distance(self, r):
        return np.where(np.asarray(r) <= self.radius, self.p, 0.0)


@dataclass(frozen=True)
class GaussianKernel:
    """Truncated Gaussian bump: amplitude * exp(-r^2 / (2 scale^2)) for r <= radius."""

    amplitude: float
    scale: float
    radius: float

    @property
    def r_max(self) -> float:
        return float(self.radius)

    @property
    def is_binary(self) -> bool:
        return self.amplitude == 0.0

    def of_distance(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.radius, self.amplitude * np.exp(-0.5 * (r / self.scale) ** 2), 0.0)


@dataclass(frozen=True)
class TableKernel:
    """Explicit site-by-site conflict probabilities for a DiscreteSites space.

    ``symmetric`` is the declared flag; validation probes it.
    """

    values: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    r_max = None

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


Kernel = HardKernel | ConstantKernel | GaussianKernel | TableKernel
Space = ContinuousBox | DiscreteSites
Measure = Homogeneous | Atomic | PiecewiseGrid


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Atoms:
    """Atomic view of a model: the representation the p.g.fl solvers work on."""

    positions: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)
    hmat: np.ndarray  # (n, n), h between atoms, diagonal included

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.hmat == 0.0) | (self.hmat == 1.0)))


@dataclass(frozen=True)
class Model:
    space: Space
    measure: Measure
    kernel: Kernel
    seed_policy: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def is_atomic(self) -> bool:
        return isinstance(self.measure, Atomic)

    @property
    def is_binary(self) -> bool:
        return self.kernel.is_binary

    # -- kernel evaluation --------------------------------------------------
    def h(self, xa, xb, sa=None, sb=None) -> np.ndarray:
        """Conflict probability between locations (or site indices for tables)."""
        if isinstance(self.kernel, TableKernel):
            if sa is None or sb is None:
                sa = self.site_index(xa)
                sb = self.site_index(xb)
            return self.kernel.values[np.asarray(sa), np.asarray(sb)]
        return self.kernel.of_distance(self.space.distance(xa, xb))

    def site_index(self, x) -> np.ndarray:
        if not isinstance(self.space, DiscreteSites):
            raise ModelError("space", "site lookup requires a DiscreteSites space")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        locs = self.space.locations
        d = np.sum((x[:, None, :] - locs[None, :, :]) ** 2, axis=-1)
        idx = np.argmin(d, axis=1)
        if np.any(d[np.arange(len(x)), idx] > 1e-18):
            raise ModelError("space", "location is not a site")
        return idx

    # -- measure ------------------------------------------------------------
    def mass(self, window: Box | None = None) -> float:
        m = self.measure
        if isinstance(m, Atomic):
            w = m.weights
            if window is not None:
                w = w[window.contains(self.space.locations)]
            return float(w.sum())
        box = window if window is not None else self.space.box
        if isinstance(m, Homogeneous):
            return float(m.density) * box.volume
        cells, vols = self._grid_cells()
        if window is None:
            return float(np.sum(m.densities.ravel() * vols))
        # overlap volume of each grid cell with the window
        lo = np.maximum(cells[0], np.asarray(box.lower))
        hi = np.minimum(cells[1], np.asarray(box.upper))
        ov = np.prod(np.clip(hi - lo, 0, None), axis=1)
        return float(np.sum(m.densities.ravel() * ov))

    def density_at(self, y: np.ndarray) -> np.ndarray:
        m = self.measure
        y = np.atleast_2d(y)
        if isinstance(m, Homogeneous):
            return np.full(len(y), float(m.density))
        if isinstance(m, PiecewiseGrid):
            sp = self.space
            shape = m.densities.shape
            rel = (y - np.asarray(sp.lower)) / sp.lengths
            if sp.periodic:
                rel = rel % 1.0
            inside = np.all((rel >= 0) & (rel < 1), axis=1)
            idx = np.clip((rel * np.asarray(shape)).astype(int), 0, np.asarray(shape) - 1)
            out = m.densities[tuple(idx.T)]
            return np.where(inside, out, 0.0)
        raise ModelError("measure", "atomic measure has no density")

    def _grid_cells(self):
        m = self.measure
        sp = self.space
        shape = m.densities.shape
        if len(shape) != sp.dim:
            raise ModelError("measure", "grid rank must equal space dimension")
        widths = sp.lengths / np.asarray(shape)
        idx = np.indices(shape).reshape(sp.dim, -1).T
        lo = np.asarray(sp.lower) + idx * widths
        return (lo, lo + widths), np.full(len(idx), float(np.prod(widths)))

    def atoms(self, cells: int | Sequence[int] | None = None) -> Atoms:
        """Atomic representation; continuous measures are discretized on a grid.

        Each cell becomes one atom at its centre carrying the cell mass.
        """
        m = self.measure
        if isinstance(m, Atomic):
            pos = self.space.locations
            w = m.weights
            if isinstance(self.kernel, TableKernel):
                hm = np.array(self.kernel.values, dtype=float)
            else:
                hm = self.kernel.of_distance(self.space.distance(pos[:, None, :], pos[None, :, :]))
            return Atoms(pos, np.array(w, dtype=float), np.asarray(hm, dtype=float))
        sp = self.space
        if isinstance(m, PiecewiseGrid) and cells is None:
            shape = m.densities.shape
        else:
            if cells is None:
                raise ModelError("measure", "continuous measure needs a discretization resolution")
            shape = (cells,) * sp.dim if np.isscalar(cells) else tuple(cells)
        widths = sp.lengths / np.asarray(shape)
        idx = np.indices(shape).reshape(sp.dim, -1).T
        centres = np.asarray(sp.lower) + (idx + 0.5) * widths
        vol = float(np.prod(widths))
        if isinstance(m, Homogeneous):
            w = np.full(len(centres), float(m.density) * vol)
        elif shape == m.densities.shape:
            w = m.densities.ravel() * vol
        else:
            w = self.density_at(centres) * vol
        hm = self.kernel.of_distance(sp.distance(centres[:, None, :], centres[None, :, :]))
        return Atoms(centres, w, np.asarray(hm, dtype=float))


# ---------------------------------------------------------------------------
# patterns and realizations


@dataclass
class TimedPointPattern:
    """Finite realization of the Poisson rain restricted to window x [0, t_max)."""

    ids: np.ndarray
    locations: np.ndarray
    timers: np.ndarray
    window: Box | None
    t_max: float
    seed: int | None = None
    sites: np.ndarray | None = None
    tie_events: int = 0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.timers = np.asarray(self.timers, dtype=float)
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim != 2:
            loc = loc.reshape(len(self.ids), -1) if len(self.ids) else loc.reshape(0, 1)
        self.locations = loc
        if self.sites is not None:
            self.sites = np.asarray(self.sites, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, ids) -> np.ndarray:
        """Positions of the given ids inside this pattern (-1 when absent)."""
        ids = np.asarray(ids, dtype=np.int64)
        order = np.argsort(self.ids, kind="stable")
        sorted_ids = self.ids[order]
        pos = np.searchsorted(sorted_ids, ids)
        pos = np.clip(pos, 0, max(len(sorted_ids) - 1, 0))
        found = (len(sorted_ids) > 0) & (sorted_ids[pos] == ids) if len(sorted_ids) else np.zeros(len(ids), bool)
        return np.where(found, order[pos] if len(order) else -1, -1)

    def subset(self, mask: np.ndarray) -> "TimedPointPattern":
        mask = np.asarray(mask, dtype=bool)
        return TimedPointPattern(
            self.ids[mask],
            self.locations[mask],
            self.timers[mask],
            self.window,
            self.t_max,
            self.seed,
            None if self.sites is None else self.sites[mask],
            self.tie_events,
        )


class ConflictRealization:
    """Symmetric, non-reflexive boolean relation over point ids.

    Stored as a sorted edge array with ``a < b`` in every row.
    """

    def __init__(self, edges: np.ndarray | Sequence[tuple[int, int]] = ()):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ModelError("conflicts", "self-pairs are not allowed")
        e = np.sort(e, axis=1)
        if len(e):
            e = np.unique(e, axis=0)
        self.edges = e
        self._codes = None

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(map(tuple, self.edges.tolist()))

    def _keys(self):
        if self._codes is None:
            self._codes = {(int(a), int(b)) for a, b in self.edges}
        return self._codes

    def lookup(self, i: int, j: int) -> bool:
        if i == j:
            return False
        a, b = (i, j) if i < j else (j, i)
        return (int(a), int(b)) in self._keys()

    def restricted_to(self, ids: np.ndarray) -> np.ndarray:
        """Edges whose both endpoints are among ``ids``."""
        ids = np.asarray(ids)
        keep = np.isin(self.edges[:, 0], ids) & np.isin(self.edges[:, 1], ids)
        return self.edges[keep]


# ---------------------------------------------------------------------------
# kernel mass and validation


def _ball_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


def _gauss_legendre_box(f, lo, hi, m, order=8):
    """Composite tensor Gauss-Legendre rule with m cells per axis."""
    x, w = np.polynomial.legendre.leggauss(order)
    d = len(lo)
    axes_pts, axes_w = [], []
    for k in range(d):
        edges = np.linspace(lo[k], hi[k], m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        axes_pts.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
        axes_w.append((half[:, None] * w[None, :]).ravel())
    grids = np.meshgrid(*axes_pts, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(len(pts))
    for k, g in enumerate(np.meshgrid(*axes_w, indexing="ij")):
        wts = wts * g.ravel()
    return float(np.sum(wts * f(pts)))


def _is_index(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _radial_integral(k, rmax: float, d: int) -> float:
    """\int_0^rmax k(r) r^(d-1) dr for the built-in radial kernels."""
    if rmax <= 0:
        return 0.0
    if isinstance(k, HardKernel):
        return rmax**d / d
    if isinstance(k, ConstantKernel):
        return k.p * rmax**d / d
    if d == 2:
        return k.amplitude * k.scale**2 * -math.expm1(-0.5 * (rmax / k.scale) ** 2)
    from scipy.integrate import quad

    return quad(lambda r: float(k.of_distance(r)) * r ** (d - 1), 0.0, rmax, epsabs=0, epsrel=1e-13)[0]


def _clipped_mass(k, x: np.ndarray, lo: np.ndarray, hi: np.ndarray, R: float) -> float:
    """\int_{box} h(|x - y|) dy for x in a closed box, d in {1, 2}.

    1-D: the two half-intervals.  2-D: polar coordinates around x, with the
    ray length to the box boundary and breakpoints at the corner directions
    and where a wall enters the kernel support.
    """
    from scipy.integrate import quad

    if len(x) == 1:
        return _radial_integral(k, min(R, hi[0] - x[0]), 1) + _radial_integral(k, min(R, x[0] - lo[0]), 1)

    def ray(th):
        c = np.array([math.cos(th), math.sin(th)])
        with np.errstate(divide="ignore"):
            t = np.where(c > 0, (hi - x) / c, np.where(c < 0, (lo - x) / c, np.inf))
        return float(max(t.min(), 0.0))

    breaks = set()
    for cx in (lo[0], hi[0]):
        for cy in (lo[1], hi[1]):
            breaks.add(math.atan2(cy - x[1], cx - x[0]) % (2 * math.pi))
    for axis, normal in ((0, 0.0), (0, math.pi), (1, 0.5 * math.pi), (1, 1.5 * math.pi)):
        dist = (hi - x)[axis] if normal in (0.0, 0.5 * math.pi) else (x - lo)[axis]
        if dist < R:
            a = math.acos(max(dist, 0.0) / R)
            breaks.update({(normal - a) % (2 * math.pi), (normal + a) % (2 * math.pi)})
    pts = sorted(b for b in breaks if 0 < b < 2 * math.pi)
    val, _ = quad(lambda th: _radial_integral(k, min(R, ray(th)), 2), 0.0, 2 * math.pi, points=pts or None,
                  epsabs=0, epsrel=1e-12, limit=400)
    return val


def kernel_mass_at(model: Model, x, *, rtol: float = 1e-8, max_cells: int = 512) -> float:
    """Conflict mass  N(x) = \\int h(x, y) Lambda(dy).

    Exact weighted sum for atomic measures.  For continuous measures a closed
    form is used when the kernel support sits wholly inside the space (or the
    space is a torus wide enough), and composite Gauss-Legendre quadrature on
    the support bounding box otherwise.
    """
    m = model.measure
    if isinstance(m, Atomic):
        if _is_index(x):
            s = int(x)
        elif isinstance(model.kernel, TableKernel):
            s = int(model.site_index(x)[0])
        else:
            locs = model.space.locations
            hx = model.kernel.of_distance(model.space.distance(np.asarray(x, float), locs))
            return float(np.dot(hx, m.weights))
        return float(np.dot(model.atoms().hmat[s], m.weights))

    sp = model.space
    k = model.kernel
    x = np.asarray(x, dtype=float).reshape(sp.dim)
    R = k.r_max
    d = sp.dim
    lo = np.asarray(sp.lower)
    hi = np.asarray(sp.upper)
    if R is None or R <= 0:
        return 0.0  # support of Lebesgue measure zero
    inside = (sp.periodic and np.all(2 * R <= sp.lengths)) or (
        np.all(x - R >= lo) and np.all(x + R <= hi)
    )
    if not inside and isinstance(m, Homogeneous) and not sp.periodic and d <= 2:
        return float(m.density) * _clipped_mass(k, x, lo, hi, R)
    if inside and isinstance(m, Homogeneous):
        lam = float(m.density)
        if isinstance(k, HardKernel):
            return lam * _ball_volume(d, R)
        if isinstance(k, ConstantKernel):
            return lam * k.p * _ball_volume(d, R)
        from scipy.integrate import quad

        surface = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        val, _ = quad(lambda s: float(k.of_distance(s)) * s ** (d - 1), 0.0, R, epsabs=0, epsrel=1e-12)
        return lam * surface * val

    blo = x - R
    bhi = x + R
    if not sp.periodic:
        blo = np.maximum(blo, lo)
        bhi = np.minimum(bhi, hi)
    if np.any(bhi <= blo):
        return 0.0

    def integrand(y):
        r = np.sqrt(np.sum((y - x) ** 2, axis=1))
        return k.of_distance(r) * model.density_at(y)

    prev = _gauss_legendre_box(integrand, blo, bhi, 1)
    cells = 2
    while True:
        cur = _gauss_legendre_box(integrand, blo, bhi, cells)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        if cells >= max_cells or cells ** d * 8**d > 5e6:
            raise QuadratureError("kernel mass quadrature did not converge", (prev, cur))
        prev = cur
        cells *= 2


@dataclass
class Diagnostics:
    passed: bool
    nbar: float
    failures: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def _probe_points(model: Model, n: int, rng) -> np.ndarray:
    sp = model.space
    if isinstance(sp, DiscreteSites):
        return sp.locations
    lo = np.asarray(sp.lower)
    L = sp.lengths
    per_axis = max(2, int(round(n ** (1 / sp.dim))))
    g = [lo[k] + (np.arange(per_axis) + 0.5) * L[k] / per_axis for k in range(sp.dim)]
    grid = np.stack([a.ravel() for a in np.meshgrid(*g, indexing="ij")], axis=1)
    corners = np.stack([a.ravel() for a in np.meshgrid(*[[lo[k], lo[k] + L[k] * (1 - 1e-12)] for k in range(sp.dim)], indexing="ij")], axis=1)
    return np.vstack([grid, corners, lo + rng.random((8, sp.dim)) * L])


def validate_model(model: Model, *, probes: int = 64, seed: int = 0) -> Diagnostics:
    """Check the model invariants; returns diagnostics carrying the N-bar estimate.

    Checks: measure finiteness and sign, kernel range and symmetry on random
    pair probes, and finiteness of max_x \\int h(x,y) Lambda(dy) over a probe set.
    """
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    details: dict[str, Any] = {}
    m = model.measure
    sp = model.space

    # measure
    if isinstance(m, Homogeneous):
        vals = np.array([m.density], dtype=float)
        if isinstance(sp, DiscreteSites):
            failures.append("measure: homogeneous density needs a continuous box")
    elif isinstance(m, Atomic):
        vals = m.weights
        if not isinstance(sp, DiscreteSites) or len(vals) != sp.size:
            failures.append("measure: atomic weights must match the discrete sites")
    else:
        vals = m.densities.ravel()
        if isinstance(sp, DiscreteSites) or m.densities.ndim != sp.dim:
            failures.append("measure: grid rank must match a continuous box")
    if not np.all(np.isfinite(vals)):
        failures.append("local finiteness: non-finite intensity")
    if np.any(vals < 0):
        failures.append("local finiteness: negative intensity")

    # kernel
    k = model.kernel
    if isinstance(k, TableKernel):
        if not isinstance(sp, DiscreteSites) or k.values.shape != (sp.size, sp.size):
            failures.append("kernel: table shape must be (sites, sites)")
        else:
            if not np.all(np.isfinite(k.values)) or np.any(k.values < 0) or np.any(k.values > 1):
                failures.append("range: h must lie in [0, 1]")
            n = sp.size
            ii = rng.integers(0, n, size=4 * probes)
            jj = rng.integers(0, n, size=4 * probes)
            if not np.array_equal(k.values[ii, jj], k.values[jj, ii]) or not np.array_equal(k.values, k.values.T):
                failures.append("symmetry: h(x, y) != h(y, x) on probed pairs")
    else:
        if not (k.r_max is not None and np.isfinite(k.r_max) and k.r_max >= 0):
            failures.append("kernel: interaction range must be finite")
        params = [getattr(k, a) for a in ("p", "amplitude") if hasattr(k, a)]
        if any(not (0.0 <= float(p) <= 1.0) for p in params):
            failures.append("range: h must lie in [0, 1]")
        if isinstance(sp, ContinuousBox):
            lo, L = np.asarray(sp.lower), sp.lengths
            a = lo + rng.random((probes, sp.dim)) * L
            b = a + (rng.random((probes, sp.dim)) - 0.5) * 2 * (k.r_max or 1.0)
            hab, hba = model.h(a, b), model.h(b, a)
            if not np.allclose(hab, hba, rtol=0, atol=0):
                failures.append("symmetry: h(x, y) != h(y, x) on probed pairs")
            if np.any(hab < 0) or np.any(hab > 1):
                failures.append("range: h must lie in [0, 1]")

    nbar = float("nan")
    if not failures:
        pts = _probe_points(model, probes, rng)
        if isinstance(sp, DiscreteSites):
            masses = np.array([kernel_mass_at(model, i) for i in range(sp.size)])
        else:
            masses = np.array([kernel_mass_at(model, p) for p in pts])
        nbar = float(masses.max()) if len(masses) else 0.0
        details["probe_masses"] = masses
        if not np.isfinite(nbar):
            failures.append("finite conflict: N-bar is not finite")
    return Diagnostics(not failures, nbar, failures, details)


# ---------------------------------------------------------------------------
# JSON model description


def model_from_dict(cfg: dict) -> Model:
    s = cfg["space"]
    if s["type"] == "box":
        space: Space = ContinuousBox(tuple(s["lower"]), tuple(s["upper"]), bool(s.get("periodic", True)))
    elif s["type"] == "sites":
        space = DiscreteSites(np.asarray(s["locations"], dtype=float))
    else:
        raise ModelError("space", f"unknown space type {s['type']!r}")

    mm = cfg["measure"]
    if mm["type"] == "homogeneous":
        measure: Measure = Homogeneous(float(mm["density"]))
    elif mm["type"] == "atomic":
        measure = Atomic(np.asarray(mm["weights"], dtype=float))
    elif mm["type"] == "grid":
        measure = PiecewiseGrid(np.asarray(mm["densities"], dtype=float))
    else:
        raise ModelError("measure", f"unknown measure type {mm['type']!r}")

    kk = cfg["kernel"]
    t = kk["type"]
    if t == "hard":
        kernel: Kernel = HardKernel(float(kk["radius"]))
    elif t == "constant":
        kernel = ConstantKernel(float(kk["p"]), float(kk["radius"]))
    elif t == "gaussian":
        kernel = GaussianKernel(float(kk["amplitude"]), float(kk["scale"]), float(kk["radius"]))
    elif t == "table":
        kernel = TableKernel(np.asarray(kk["values"], dtype=float), bool(kk.get("symmetric", True)))
    elif t == "zero":
        kernel = HardKernel(-1.0) if not isinstance(space, DiscreteSites) else TableKernel(np.zeros((space.size, space.size)))
    else:
        raise ModelError("kernel", f"unknown kernel type {t!r}")
    return Model(space, measure, kernel, dict(cfg.get("seed_policy", {})))


def model_to_dict(model: Model) -> dict:
    sp = model.space
    if isinstance(sp, ContinuousBox):
        space = {"type": "box", "lower": list(sp.lower), "upper": list(sp.upper), "periodic": sp.periodic}
    else:
        space = {"type": "sites", "locations": sp.locations.tolist()}
    m = model.measure
    if isinstance(m, Homogeneous):
        measure = {"type": "homogeneous", "density": m.density}
    elif isinstance(m, Atomic):
        measure = {"type": "atomic", "weights": m.weights.tolist()}
    else:
        measure = {"type": "grid", "densities": m.densities.tolist()}
    k = model.kernel
    if isinstance(k, HardKernel):
        kernel = {"type": "hard", "radius": k.radius}
    elif isinstance(k, ConstantKernel):
        kernel = {"type": "constant", "p": k.p, "radius": k.radius}
    elif isinstance(k, GaussianKernel):
        kernel = {"type": "gaussian", "amplitude": k.amplitude, "scale": k.scale, "radius": k.radius}
    else:
        kernel = {"type": "table", "values": k.values.tolist(), "symmetric": k.symmetric}
    return {"space": space, "measure": measure, "kernel": kernel, "seed_policy": dict(model.seed_policy)}


def load_model(path: str | Path) -> Model:
    cfg = json.loads(Path(path).read_text())
    return model_from_dict(cfg.get("model", cfg))
