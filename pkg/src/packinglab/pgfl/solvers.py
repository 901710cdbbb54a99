"""User-facing p.g.fl solvers."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ..core import (
    Atoms,
    Model,
    TableKernel,
    _gauss_legendre_box,
    _is_index,
    kernel_mass_at,
)
from .closure import ClosureBudgetError, StateClosure, integrate_linear, picard_expand
from .system import LinearSystem, f_inf_system, index_sets

log = logging.getLogger(__name__)

INF = math.inf


# ---------------------------------------------------------------------------
# test functions and results


@dataclass(frozen=True)
class TestFunction:
    """Values of v in [0, 1] on the atoms of a (possibly discretized) measure."""

    values: np.ndarray
    kind: str = "discrete"  # "discrete" | "grid"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(~np.isfinite(v)) or np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValueError("test function values must lie in [0, 1]")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    @classmethod
    def constant(cls, c: float, n: int, kind: str = "discrete") -> "TestFunction":
        return cls(np.full(n, float(c)), kind)

    def integral_defect(self, atoms: Atoms) -> float:
        """\\int (1 - v) dLambda on the atoms; finite by construction."""
        return float(np.dot(1.0 - self.values, atoms.weights))


@dataclass
class SolverResult:
    value: Any
    method: str
    tol: float
    error_estimate: float
    work: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.value, np.ndarray):
            d["value"] = self.value.tolist()
        d["states_or_depth"] = self.work.get("states", self.work.get("depth"))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# helpers


def model_atoms(model: Model, cells=None) -> Atoms:
    return model.atoms(cells)


def as_values(v, atoms: Atoms, model: Model | None = None) -> np.ndarray:
    """Evaluate a test function description on the atoms."""
    if isinstance(v, TestFunction):
        vals = v.values
    elif callable(v):
        vals = np.array([float(v(p)) for p in atoms.positions])
    elif np.isscalar(v):
        vals = np.full(atoms.n, float(v))
    else:
        vals = np.asarray(v, dtype=float).ravel()
    if vals.shape != (atoms.n,):
        raise ValueError(f"test function has {vals.size} values for {atoms.n} atoms")
    return TestFunction(vals).values


def _times(t) -> tuple[np.ndarray, bool]:
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise ValueError("times must be finite and non-negative")
    return arr, np.ndim(t) == 0


def _pack(vals: np.ndarray, scalar: bool):
    return float(vals[0]) if scalar else vals


def h_transform(v, x: int, model_or_atoms) -> np.ndarray:
    """v(.) (1 - h(x, .)) on the atoms."""
    atoms = model_or_atoms if isinstance(model_or_atoms, Atoms) else model_or_atoms.atoms()
    vals = as_values(v, atoms)
    return vals * (1.0 - atoms.hmat[int(x)])


def poisson_pgfl(model: Model, t: float, v, cells=None) -> float:
    """exp(-t \\int (1 - v) dLambda): the rain on [0, t) is Poisson with intensity t Lambda."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if not model.is_atomic and cells is None and not isinstance(v, (np.ndarray, TestFunction, list, tuple)):
        if np.isscalar(v):
            defect = (1.0 - float(v)) * model.mass()
        else:
            sp = model.space
            f = lambda y: np.array([1.0 - float(v(p)) for p in y]) * model.density_at(y)  # noqa: E731
            defect = _integrate_box(f, np.asarray(sp.lower), np.asarray(sp.upper))
        return float(math.exp(-t * defect))
    atoms = model.atoms(cells)
    vals = as_values(v, atoms)
    return float(math.exp(-t * np.dot(1.0 - vals, atoms.weights)))


def _integrate_box(f, lo, hi, rtol=1e-10, max_cells=256):
    prev = _gauss_legendre_box(f, lo, hi, 1)
    m = 2
    while m <= max_cells:
        cur = _gauss_legendre_box(f, lo, hi, m)
        if abs(cur - prev) <= rtol * max(1.0, abs(cur)):
            return cur
        prev, m = cur, 2 * m
    return cur


# ---------------------------------------------------------------------------
# generic drivers


def _choose(method: str, atoms: Atoms) -> str:
    if method in ("closure", "picard"):
        return method
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return "closure" if atoms.is_binary else "picard"


def run_system(
    system: LinearSystem,
    atoms: Atoms,
    roots: Sequence[np.ndarray],
    times: np.ndarray,
    tol: float,
    method: str = "auto",
    max_states: int = 200_000,
    max_depth: int = 256,
) -> tuple[np.ndarray, str, float, dict]:
    """Values of the system solution at ``roots`` for each time: (len(times), len(roots))."""
    m = _choose(method, atoms)
    if m == "closure":
        cl = StateClosure(system, atoms, max_states=max_states)
        try:
            idx = [cl.add(r) for r in roots]
            cl.expand()
        except ClosureBudgetError:
            if method == "closure":
                raise
            log.info("closure over budget, switching to Picard expansion")
            m = "picard"
        else:
            rep = integrate_linear(cl.matrix(), np.ones(len(cl)), times, idx, tol)
            return rep.values, "closure-ODE", rep.error, {
                "states": len(cl),
                "rk4_steps": rep.steps,
                "halvings": rep.halvings,
            }

    def factory():
        cl = StateClosure(system, atoms, max_states=max_states)
        for r in roots:
            cl.add(r)
        return cl

    def x0_fn(cl):
        return np.ones(len(cl)), cl.matrix()

    def rows_fn(cl):
        # roots were added first; duplicates collapse onto earlier indices
        return np.array([cl._index[_root_key(cl, r)] for r in roots])

    rep = picard_expand(factory, x0_fn, times, rows_fn, tol, max_depth=max_depth)
    log.debug("picard depth %d, increment ratios %s", rep.depth, np.round(rep.ratios[-6:], 4))
    return rep.values, "picard", rep.last_increment, {
        "depth": rep.depth,
        "states": rep.states,
        "ratios": rep.ratios,
    }


def _root_key(cl: StateClosure, r: np.ndarray) -> bytes:
    from .closure import _key

    return _key(np.ascontiguousarray(r, dtype=float).reshape(cl.system.nrows, cl.atoms.n), cl.exact)


# ---------------------------------------------------------------------------
# f_inf


def solve_f_inf(model: Model, t, v, tol: float = 1e-8, method: str = "auto", cells=None, **kw) -> SolverResult:
    """p.g.fl of the random-sequential-adsorption set on [0, t)."""
    atoms = model.atoms(cells)
    vals = as_values(v, atoms)
    times, scalar = _times(t)
    out, tag, err, work = run_system(f_inf_system(), atoms, [vals[None, :]], times, tol, method, **kw)
    res = np.clip(out[:, 0], 0.0, 1.0) if np.all(out[:, 0] > -tol) and np.all(out[:, 0] < 1 + tol) else out[:, 0]
    return SolverResult(_pack(res, scalar), tag, tol, err, work)


def f_inf_bounds(model: Model, t, v, cells=None) -> tuple:
    """Lower and upper bounds exp(-t D) <= f_inf <= 1 - \\int (1-e^{-tA})/A (1-v) dLambda.

    A(x) = \\int (1 - v(y)(1 - h(x, y))) Lambda(dy); the ratio takes its limit t
    when A(x) < 1e-12.
    """
    atoms = model.atoms(cells)
    vals = as_values(v, atoms)
    times, scalar = _times(t)
    lam = atoms.weights
    D = float(np.dot(1.0 - vals, lam))
    A = (1.0 - vals[None, :] * (1.0 - atoms.hmat)) @ lam
    lower = np.exp(-times * D)
    upper = np.empty_like(times)
    small = A < 1e-12
    for n, tt in enumerate(times):
        ratio = np.where(small, tt, -np.expm1(-tt * np.where(small, 1.0, A)) / np.where(small, 1.0, A))
        upper[n] = 1.0 - float(np.sum(ratio * (1.0 - vals) * lam))
    return _pack(lower, scalar), _pack(upper, scalar)


# ---------------------------------------------------------------------------
# k-Matérn


def solve_g_k(model: Model, k: int, t, vs: Sequence, tol: float = 1e-8, method: str = "auto", cells=None, **kw) -> SolverResult:
    """Joint p.g.fl of (Q_1, ..., Q_k, R_k) on [0, t) at (v_1, ..., v_{k+1})."""
    ks = index_sets(k)
    if len(vs) != k + 1:
        raise ValueError(f"g_{k} takes {k + 1} test functions, got {len(vs)}")
    atoms = model.atoms(cells)
    state = np.vstack([as_values(v, atoms) for v in vs])
    times, scalar = _times(t)
    out, tag, err, work = run_system(ks.system(), atoms, [state], times, tol, method, **kw)
    return SolverResult(_pack(out[:, 0], scalar), tag, tol, err, work)


def u_tuple(k: int, vs_by_index: dict[int, np.ndarray], n: int) -> list[np.ndarray]:
    """Arguments (u_1, ..., u_{k+1}) of g_k giving the joint p.g.fl of (M_0, ..., M_k).

    ``vs_by_index`` maps m to v_m; missing entries are the constant 1.
    """
    ks = index_sets(k)
    out = []
    for members in ks.u_vector_rows():
        u = np.ones(n)
        for m in members:
            if m in vs_by_index:
                u = u * vs_by_index[m]
        out.append(u)
    return out


def f_k(model: Model, k, t, v, tol: float = 1e-8, method: str = "auto", cells=None, **kw) -> SolverResult:
    """Marginal p.g.fl of M_k on [0, t) (k = 0: Poisson, k = inf: f_inf)."""
    if k == INF:
        return solve_f_inf(model, t, v, tol, method, cells, **kw)
    k = int(k)
    atoms = model.atoms(cells)
    vals = as_values(v, atoms)
    if k == 0:
        times, scalar = _times(t)
        res = np.exp(-times * np.dot(1.0 - vals, atoms.weights))
        return SolverResult(_pack(res, scalar), "closed-form", tol, 0.0, {})
    us = u_tuple(k, {k: vals}, atoms.n)
    return solve_g_k(model, k, t, us, tol, method, cells, **kw)


def f_k_joint(model: Model, k: int, t, vs: Sequence, tol: float = 1e-8, method: str = "auto", cells=None, **kw) -> SolverResult:
    """Joint p.g.fl E[prod_{m<=k} prod_{x in M_m} v_m(x)] via the g_k reduction."""
    atoms = model.atoms(cells)
    us = u_tuple(int(k), {m: as_values(v, atoms) for m, v in enumerate(vs)}, atoms.n)
    return solve_g_k(model, int(k), t, us, tol, method, cells, **kw)


def f_curve(model: Model, k, times, v, tol: float = 1e-8, method: str = "auto", cells=None, **kw) -> np.ndarray:
    return np.atleast_1d(f_k(model, k, np.asarray(times, float), v, tol, method, cells, **kw).value)


# ---------------------------------------------------------------------------
# first moment density


def _simpson(y: np.ndarray, h: float) -> float:
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def _anchor_values(model: Model, x, atoms: Atoms) -> np.ndarray:
    """1 - h(x, .) on the atoms, for x an atom index (atomic models) or a location."""
    if model.is_atomic and _is_index(x):
        return 1.0 - atoms.hmat[int(x)]
    if isinstance(model.kernel, TableKernel):
        s = int(model.site_index(x)[0])
        return 1.0 - atoms.hmat[s]
    hx = model.kernel.of_distance(model.space.distance(np.asarray(x, float), atoms.positions))
    return 1.0 - hx


def moment_density(
    model: Model,
    k,
    t: float,
    x,
    tol: float = 1e-9,
    method: str = "auto",
    cells=None,
    max_doublings: int = 14,
) -> SolverResult:
    """m_k(t, x) = \\int_0^t f_{k-1}(tau, 1 - h(., x)) dtau, density w.r.t. Lambda.

    k = 1 uses the Poisson closed form exp(-tau N(x)) with N from
    ``kernel_mass_at`` (no discretization); other k solve f_{k-1} on the
    atoms.  Composite Simpson, halving the step until two successive
    estimates differ by less than ``tol``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return SolverResult(0.0, "quadrature", tol, 0.0, {"nodes": 1})
    if k != INF and int(k) < 1:
        raise ValueError("k must be >= 1 or inf")
    if k != INF and int(k) == 1:
        N = kernel_mass_at(model, x)

        def curve(nodes):
            return np.exp(-nodes * N)
    else:
        atoms = model.atoms(cells)
        v = _anchor_values(model, x, atoms)
        prev_k = INF if k == INF else int(k) - 1

        def curve(nodes):
            return f_curve(model, prev_k, nodes, v, tol=tol / 10, method=method, cells=cells)

    n = 2
    nodes = np.linspace(0.0, t, n + 1)
    prev = _simpson(curve(nodes), t / n)
    err = np.inf
    for _ in range(max_doublings):
        n *= 2
        nodes = np.linspace(0.0, t, n + 1)
        cur = _simpson(curve(nodes), t / n)
        err = abs(cur - prev)
        prev = cur
        if err < tol:
            break
    return SolverResult(float(prev), "quadrature", tol, err, {"nodes": n + 1, "k": "inf" if k == INF else int(k)})


def moment_closed_form_k1(N: float, t: float) -> float:
    """(1 - e^{-tN}) / N, with limit t at N = 0."""
    return t if N == 0 else -math.expm1(-t * N) / N


# ---------------------------------------------------------------------------
# continuous-space refinement study


def refinement_study(fn: Callable[[int], float], cells0: int, levels: int = 3) -> list[tuple[int, float]]:
    """Evaluate ``fn(cells)`` while halving the cell size; returns (cells, value) pairs."""
    out = []
    c = int(cells0)
    for _ in range(levels):
        out.append((c, float(fn(c))))
        c *= 2
    return out
