"""Reduced Palm p.g.fls of the thinned processes.

For an anchor atom y and a tagged row of a linear functional system G, let
P(t, s) = (1/lambda_y) dG(t, s)/ds_tag(y).  By the reduced Campbell formula
P(t, s) = m(t, y) G^!_y(s), where m is the moment density of the tagged
class.  Differentiating the evolution equation of G in s_tag(y) gives

    dP/dt(s) = sum_terms a_term G(T_term(s, y))
               + sum_x lambda_x sum_terms c_term(x, s) phi_term(x, y) P(T_term(s, x))

with a_term the derivative of the coefficient in the tagged row and
phi_term(x, y) = 1 - h(x, y) when the term transforms the tagged row, else 1.
Integrating from P(0) = 0 is the time-marching form of the Volterra
equations for the reduced Palm functionals; the ratio P(t, s)/P(t, 1)
recovers G^!_y.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Model, _is_index
from .pgfl.closure import ClosureBudgetError, StateClosure, integrate_linear, picard_expand
from .pgfl.solvers import SolverResult, _choose, _pack, _times, as_values, solve_f_inf
from .pgfl.system import LinearSystem, f_inf_system, index_sets


class PalmPreconditionError(ValueError):
    pass


def palm_from_reduced(v_at_y: float, reduced_value: float) -> float:
    """Palm value from the reduced one: G_y(v) = v(y) G^!_y(v)."""
    if not -1e-12 <= reduced_value <= 1 + 1e-12:
        raise ValueError("reduced value must lie in [0, 1]")
    return float(v_at_y) * float(reduced_value)


def _anchor_index(model: Model, y) -> int:
    if not model.is_atomic:
        raise PalmPreconditionError("Palm anchors must be atoms of an atomic measure; discretize first")
    if _is_index(y):
        idx = int(y)
    else:
        locs = model.space.locations
        d = np.sqrt(np.sum((locs - np.asarray(y, float)) ** 2, axis=1))
        idx = int(np.argmin(d))
        if d[idx] > 1e-12:
            raise PalmPreconditionError(f"anchor {y!r} is not an atom of the measure")
    if not 0 <= idx < len(model.measure.weights):
        raise PalmPreconditionError(f"anchor index {idx} out of range")
    if model.measure.weights[idx] <= 0:
        raise PalmPreconditionError("anchor carries no intensity mass")
    return idx


def _palm_system(
    system: LinearSystem,
    model: Model,
    y: int,
    tag: int,
    state: np.ndarray,
    times: np.ndarray,
    tol: float,
    method: str,
    form: str,
    max_states: int = 200_000,
):
    """Reduced Palm values and moment densities at ``times``."""
    atoms = model.atoms()
    ones = np.ones((system.nrows, atoms.n))
    m = _choose(method, atoms)
    if form not in ("tau", "t"):
        raise ValueError("form must be 'tau' or 't'")
    if form == "t" and m != "closure":
        raise ValueError("the t-form comparison is only available with the closure method")

    if m == "closure":
        cl = StateClosure(system, atoms, anchor=y, tag=tag, max_states=max_states)
        try:
            i_s = cl.add(state)
            i_1 = cl.add(ones)
            cl.expand()
        except ClosureBudgetError:
            if method == "closure":
                raise
            m = "picard"
    if m == "closure":
        S = len(cl)
        A = cl.matrix()
        B, E = cl.palm_matrices()
        if form == "tau":
            M = sp.bmat([[A, None], [E, B]], format="csr")
            x0 = np.r_[np.ones(S), np.zeros(S)]
            rep = integrate_linear(M, x0, times, [S + i_s, S + i_1], tol * 1e-2)
            P, mvals = rep.values[:, 0], rep.values[:, 1]
            err = rep.error
            work = {"states": S, "rk4_steps": rep.steps}
        else:
            # integrate F, its running integral IF, and the running integral of m
            e1 = E.getrow(i_1)
            Z = sp.csr_matrix((S, S))
            M = sp.bmat(
                [
                    [A, Z, None],
                    [sp.identity(S, format="csr"), Z, None],
                    [None, e1, sp.csr_matrix((1, 1))],
                ],
                format="csr",
            )
            x0 = np.r_[np.ones(S), np.zeros(S), 0.0]
            rep = integrate_linear(M, x0, times, np.arange(2 * S + 1), tol * 1e-2)
            P = np.empty(len(times))
            mvals = np.empty(len(times))
            for n, row in enumerate(rep.values):
                IF, IM = row[S : 2 * S], row[-1]
                num = E @ IF
                mt = num[i_1]
                mvals[n] = mt
                if mt <= 0:
                    P[n] = 0.0
                    continue
                lhs = (mt * sp.identity(S, format="csc") - IM * B).tocsc()
                fy = spla.spsolve(lhs, num)
                P[n] = fy[i_s] * mt
            err = rep.error
            work = {"states": S, "rk4_steps": rep.steps, "form": "t"}
    else:
        def factory():
            cl = StateClosure(system, atoms, anchor=y, tag=tag, max_states=max_states)
            cl.add(state)
            cl.add(ones)
            return cl

        def x0_fn(cl):
            S = len(cl)
            A = cl.matrix()
            B, E = cl.palm_matrices()
            return np.r_[np.ones(S), np.zeros(S)], sp.bmat([[A, None], [E, B]], format="csr")

        def rows_fn(cl):
            from .pgfl.closure import _key

            S = len(cl)
            k_s = cl._index[_key(np.ascontiguousarray(state, float), cl.exact)]
            k_1 = cl._index[_key(ones, cl.exact)]
            return np.array([S + k_s, S + k_1])

        rep = picard_expand(factory, x0_fn, times, rows_fn, tol * 1e-2)
        P, mvals = rep.values[:, 0], rep.values[:, 1]
        err = rep.last_increment
        work = {"depth": rep.depth, "states": rep.states, "ratios": rep.ratios}
    return P, mvals, err, work, ("closure-ODE" if m == "closure" else "picard")


def _reduced(P, mvals, times, tol):
    out = np.empty(len(times))
    for n, (p, mv, t) in enumerate(zip(P, mvals, times)):
        if t == 0:
            out[n] = 1.0
            continue
        if mv <= tol:
            raise PalmPreconditionError(f"moment density {mv:.3e} vanishes at t={t}")
        out[n] = p / mv
    return out


def solve_palm_f_inf(model: Model, t, v, y, tol: float = 1e-8, method: str = "auto", form: str = "tau") -> SolverResult:
    """Reduced Palm p.g.fl of the random-sequential-adsorption set at anchor atom y.

    ``form='tau'`` integrates the Volterra equation with the Palm functional at
    the inner time tau (the form obtained by differentiating the evolution
    equation).  ``form='t'`` evaluates the variant with the Palm functional
    at the outer time t inside the time integral, for comparison.
    """
    yi = _anchor_index(model, y)
    atoms = model.atoms()
    vals = as_values(v, atoms)
    times, scalar = _times(t)
    P, mvals, err, work, tag = _palm_system(f_inf_system(), model, yi, 0, vals[None, :], times, tol, method, form)
    red = _reduced(P, mvals, times, tol)
    work["m"] = mvals.tolist()
    return SolverResult(_pack(red, scalar), tag, tol, err, work)


def solve_palm_g1(model: Model, t, v, u, y, tol: float = 1e-8, method: str = "auto", form: str = "tau") -> SolverResult:
    """Reduced Palm version of the joint functional of (M_1, complement) at anchor y.

    With u = 1 this is the reduced Palm p.g.fl of the type II (1-Matérn) set.
    """
    yi = _anchor_index(model, y)
    atoms = model.atoms()
    vv = as_values(v, atoms)
    uu = as_values(u, atoms)
    if np.any(uu <= 0):
        raise PalmPreconditionError("u must be strictly positive")
    times, scalar = _times(t)
    state = np.vstack([vv, uu])
    P, mvals, err, work, tag = _palm_system(index_sets(1).system(), model, yi, 0, state, times, tol, method, form)
    red = _reduced(P, mvals, times, tol)
    work["m"] = mvals.tolist()
    return SolverResult(_pack(red, scalar), tag, tol, err, work)


def palm_curve(model: Model, times, v, y, tol: float = 1e-8, process="inf"):
    """Rows (t, palm, reduced, m) for the CSV sweep."""
    yi = _anchor_index(model, y)
    vals = as_values(v, model.atoms())
    times = np.asarray(times, float)
    if process == "inf":
        res = solve_palm_f_inf(model, times, vals, yi, tol)
    else:
        res = solve_palm_g1(model, times, vals, 1.0, yi, tol)
    red = np.atleast_1d(res.value)
    m = np.asarray(res.work["m"])
    return np.column_stack([times, vals[yi] * red, red, m]), res


def derivative_identity_residual(
    model: Model,
    t: float,
    v,
    B,
    s: float,
    tol: float = 1e-12,
    kind: str = "product",
) -> tuple[float, float]:
    """Finite-difference check of the Palm derivative identities for f_inf.

    kind='product':  [G(v e^{-s 1_B}) - G(v)] / s  vs  -sum_{x in B} v(x) G^!_x(v) m(t, x) lambda_x
    kind='sum'    :  [G(v + s 1_B) - G(v)] / s     vs   sum_{x in B} G^!_x(v) m(t, x) lambda_x
                     (B outside the support of v)

    B is a collection of atom indices.  Returns (finite difference, Palm side).
    """
    atoms = model.atoms()
    vals = as_values(v, atoms)
    B = np.atleast_1d(np.asarray(B, dtype=np.int64))
    ind = np.zeros(atoms.n)
    ind[B] = 1.0
    if kind == "product":
        moved = vals * np.exp(-s * ind)
    elif kind == "sum":
        if np.any(vals[B] != 0):
            raise ValueError("the sum identity needs B outside the support of v")
        moved = vals + s * ind
    else:
        raise ValueError("kind must be 'product' or 'sum'")
    G0 = solve_f_inf(model, t, vals, tol).value
    G1 = solve_f_inf(model, t, moved, tol).value
    fd = (G1 - G0) / s
    rhs = 0.0
    for x in B.tolist():
        lam = atoms.weights[x]
        if lam <= 0:
            continue
        red = solve_palm_f_inf(model, t, vals, x, tol)
        mval = red.work["m"][0]
        term = red.value * mval * lam
        rhs += -vals[x] * term if kind == "product" else term
    return float(fd), float(rhs)


__all__ = [
    "PalmPreconditionError",
    "palm_from_reduced",
    "solve_palm_f_inf",
    "solve_palm_g1",
    "palm_curve",
    "derivative_identity_residual",
]
