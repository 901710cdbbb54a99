"""Numerical solution of the p.g.fl equation systems."""
from __future__ import annotations

from .closure import ClosureBudgetError, PicardDivergence, StateClosure, integrate_linear, picard_expand
from .solvers import (
    SolverResult,
    TestFunction,
    as_values,
    f_curve,
    f_inf_bounds,
    f_k,
    f_k_joint,
    h_transform,
    moment_closed_form_k1,
    moment_density,
    poisson_pgfl,
    refinement_study,
    run_system,
    solve_f_inf,
    solve_g_k,
    u_tuple,
)
from .system import KMaternSystem, LinearSystem, Term, displayed_system, f_inf_system, index_sets

__all__ = [
    "ClosureBudgetError",
    "PicardDivergence",
    "StateClosure",
    "integrate_linear",
    "picard_expand",
    "SolverResult",
    "TestFunction",
    "as_values",
    "f_curve",
    "f_inf_bounds",
    "f_k",
    "f_k_joint",
    "h_transform",
    "moment_closed_form_k1",
    "moment_density",
    "poisson_pgfl",
    "refinement_study",
    "run_system",
    "solve_f_inf",
    "solve_g_k",
    "u_tuple",
    "KMaternSystem",
    "LinearSystem",
    "Term",
    "displayed_system",
    "f_inf_system",
    "index_sets",
]
