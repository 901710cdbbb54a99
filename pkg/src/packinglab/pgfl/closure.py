"""State closures of a linear functional system on an atomic measure, and the
two solvers built on them.

Method A integrates the finite linear ODE obtained when the closure is
complete (always the case for {0,1} kernels: transforms only zero out
components).  Method B expands the Volterra form into its Picard iterates,
which for this linear system are the Taylor coefficients of the solution:

    a_0(s) = 1,   a_l(s) = (1/l) sum_x lambda_x sum_terms c(x, s) a_{l-1}(T(s, x)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..core import Atoms, BudgetError
from .system import LinearSystem

KEY_DECIMALS = 13


class ClosureBudgetError(BudgetError):
    def __init__(self, states: int, limit: int):
        MemoryError.__init__(
            self, f"state closure exceeds {limit} states (reached {states}); use method='picard' instead"
        )
        self.needed = states
        self.budget = limit


class PicardDivergence(RuntimeError):
    def __init__(self, depth: int, last_increment: float):
        super().__init__(f"Picard expansion not converged at depth {depth}; last increment {last_increment:.3e}")
        self.depth = depth
        self.last_increment = last_increment


def _key(state: np.ndarray, exact: bool) -> bytes:
    if exact:
        return state.tobytes()
    return np.round(state, KEY_DECIMALS).tobytes()


@dataclass
class StateClosure:
    """States reachable from the roots under the system transforms.

    ``anchor`` (atom index) and ``tag`` (row) add, for every state, the entry
    transforms needed by the reduced Palm system.
    """

    system: LinearSystem
    atoms: Atoms
    anchor: int | None = None
    tag: int = 0
    max_states: int = 200_000
    states: list[np.ndarray] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)
    _index: dict[bytes, int] = field(default_factory=dict)
    _expanded: int = 0
    rows_A: list[int] = field(default_factory=list)
    cols_A: list[int] = field(default_factory=list)
    vals_A: list[float] = field(default_factory=list)
    vals_B: list[float] = field(default_factory=list)
    rows_E: list[int] = field(default_factory=list)
    cols_E: list[int] = field(default_factory=list)
    vals_E: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.exact = self.atoms.is_binary
        self.one_minus_h = 1.0 - self.atoms.hmat
        self.active = np.flatnonzero(self.atoms.weights > 0)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def complete(self) -> bool:
        return self._expanded == len(self.states)

    def add(self, state: np.ndarray, depth: int = 0) -> int:
        state = np.ascontiguousarray(state, dtype=float).reshape(self.system.nrows, self.atoms.n)
        k = _key(state, self.exact)
        idx = self._index.get(k)
        if idx is None:
            if len(self.states) >= self.max_states:
                raise ClosureBudgetError(len(self.states) + 1, self.max_states)
            idx = len(self.states)
            self._index[k] = idx
            self.states.append(state)
            self.depth.append(depth)
        return idx

    def _child(self, s: np.ndarray, mask: np.ndarray, x: int) -> np.ndarray:
        c = s.copy()
        c[mask] *= self.one_minus_h[x]
        return c

    def expand(self, max_depth: int | None = None) -> None:
        """Breadth-first expansion, optionally stopping at a depth."""
        lam = self.atoms.weights
        terms = self.system.terms
        masks = [np.array(t.mask, dtype=bool) for t in terms]
        y = self.anchor
        while self._expanded < len(self.states):
            i = self._expanded
            d = self.depth[i]
            if max_depth is not None and d >= max_depth:
                # states are appended in BFS order, so everything after is deeper
                break
            s = self.states[i]
            for t, term, mask in zip(range(len(terms)), terms, masks):
                coef = np.zeros(self.atoms.n)
                for row, sg in term.coef:
                    coef += sg * (s[row] - 1.0)
                coef *= lam
                for x in self.active[coef[self.active] != 0.0].tolist():
                    j = self.add(self._child(s, mask, x), d + 1)
                    self.rows_A.append(i)
                    self.cols_A.append(j)
                    self.vals_A.append(coef[x])
                    if y is not None:
                        f = self.one_minus_h[x, y] if mask[self.tag] else 1.0
                        self.vals_B.append(coef[x] * f)
                if y is not None:
                    a = term.entry_weight(self.tag)
                    if a != 0:
                        j = self.add(self._child(s, mask, y), d + 1)
                        self.rows_E.append(i)
                        self.cols_E.append(j)
                        self.vals_E.append(float(a))
            self._expanded += 1

    def matrix(self) -> sp.csr_matrix:
        n = len(self.states)
        return sp.csr_matrix((self.vals_A, (self.rows_A, self.cols_A)), shape=(n, n))

    def palm_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        n = len(self.states)
        B = sp.csr_matrix((self.vals_B, (self.rows_A, self.cols_A)), shape=(n, n))
        E = sp.csr_matrix((self.vals_E, (self.rows_E, self.cols_E)), shape=(n, n))
        return B, E


# ---------------------------------------------------------------------------
# Method A: fixed-step RK4 with step halving


def _rk4(A, x0: np.ndarray, times: np.ndarray, h: float, rows: np.ndarray, level: int = 0) -> tuple[np.ndarray, int]:
    """Values of ``x[rows]`` at ``times`` (sorted, >= 0) for x' = A x.

    Each segment between output times gets ceil(span / h) * 2**level steps, so
    raising ``level`` refines every segment even when spans are shorter than h.
    """
    out = np.empty((len(times), len(rows)))
    x = x0.copy()
    t = 0.0
    steps = 0
    for n, T in enumerate(times):
        span = T - t
        if span > 0:
            m = max(1, int(np.ceil(span / h - 1e-9))) * 2**level
            dt = span / m
            for _ in range(m):
                k1 = A @ x
                k2 = A @ (x + 0.5 * dt * k1)
                k3 = A @ (x + 0.5 * dt * k2)
                k4 = A @ (x + dt * k3)
                x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            steps += m
            t = T
        out[n] = x[rows]
    return out, steps


@dataclass
class IntegrationReport:
    values: np.ndarray  # (len(times), len(rows))
    error: float
    steps: int
    halvings: int


def integrate_linear(A, x0, times, rows, tol: float, max_halvings: int = 14) -> IntegrationReport:
    """RK4 on x' = A x; halve the step until successive answers differ < tol/2."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    order = np.argsort(times)
    ts = times[order]
    rows = np.asarray(rows, dtype=np.int64)
    if A.shape[0]:
        rho = float(np.max(np.abs(A).sum(axis=1))) if A.nnz else 0.0
    else:
        rho = 0.0
    tmax = float(ts[-1]) if len(ts) else 0.0
    if rho == 0.0 or tmax == 0.0:
        vals, steps = _rk4(A, np.asarray(x0, float), ts, max(tmax, 1.0), rows)
        out = np.empty_like(vals)
        out[order] = vals
        return IntegrationReport(out, 0.0, steps, 0)
    h = min(0.5 / rho, tmax / 4)
    prev, steps = _rk4(A, np.asarray(x0, float), ts, h, rows)
    total = steps
    err = np.inf
    for halving in range(1, max_halvings + 1):
        cur, steps = _rk4(A, np.asarray(x0, float), ts, h, rows, halving)
        total += steps
        err = float(np.max(np.abs(cur - prev)))
        prev = cur
        if err < tol / 2:
            break
    out = np.empty_like(prev)
    out[order] = prev
    return IntegrationReport(out, err / 15.0, total, halving)


# ---------------------------------------------------------------------------
# Method B: adaptive-depth Picard (Taylor) expansion


@dataclass
class PicardReport:
    values: np.ndarray  # (len(times), len(rows))
    depth: int
    last_increment: float
    ratios: list[float]
    states: int


def picard_expand(closure_factory, x0_fn, times, rows_fn, tol: float, start_depth: int = 8, max_depth: int = 256) -> PicardReport:
    """Taylor coefficients on a depth-limited closure, deepened until two
    consecutive increments at the largest time fall below ``tol``.

    ``closure_factory()`` returns a fresh (unexpanded) closure whose roots are
    registered; ``x0_fn(closure)`` gives the order-0 vector and the linear
    operator, ``rows_fn(closure)`` the rows to report.
    """
    times = np.asarray(times, dtype=float)
    tmax = float(times.max()) if len(times) else 0.0
    cl = closure_factory()
    depth = start_depth
    while True:
        cl.expand(max_depth=depth)
        x0, op = x0_fn(cl)
        rows = rows_fn(cl)
        a = x0.copy()
        coeffs = [a[rows]]
        incs = [float(np.max(np.abs(a[rows]))) if len(rows) else 0.0]
        small = 0
        converged = False
        # a complete closure gives exact coefficients at every order
        lmax = max_depth if cl.complete else depth
        for l in range(1, lmax + 1):
            a = (op @ a) / l
            c = a[rows]
            coeffs.append(c)
            # numpy power saturates to inf instead of raising on large t
            with np.errstate(over="ignore", invalid="ignore"):
                inc = float(np.max(np.abs(c)) * np.power(tmax, l, dtype=np.float64)) if len(c) else 0.0
            incs.append(inc)
            small = small + 1 if inc < tol else 0
            if small >= 2:
                converged = True
                break
        if converged:
            break
        if depth >= max_depth or cl.complete:
            raise PicardDivergence(len(coeffs) - 1, incs[-1])
        depth = min(2 * depth, max_depth)
    C = np.array(coeffs)  # (L+1, nrows)
    powers = times[:, None] ** np.arange(len(C))[None, :]
    vals = powers @ C
    ratios = [incs[i] / incs[i - 1] for i in range(1, len(incs)) if incs[i - 1] > 0]
    return PicardReport(vals, len(C) - 1, incs[-1], ratios, len(cl))
