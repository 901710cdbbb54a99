"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts the same condition, so a red criterion fails the run.
"""
from __future__ import annotations

import math
import os
import time

import numpy as np

from packinglab import mc
from packinglab.checks import structural_sweep
from packinglab.core import Box, TimedPointPattern, load_model
from packinglab.matern import INF
from packinglab.palm import derivative_identity_residual, palm_from_reduced, solve_palm_f_inf, solve_palm_g1
from packinglab.pgfl import f_inf_bounds, f_k, moment_density, solve_f_inf

from conftest import FIXTURES, atomic_model, first_arrival

JOBS = os.cpu_count() or 1
SEED = 20240611
TOL = 1e-8


def random_instances(count=10, seed=SEED):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, 6))
        H = (rng.random((n, n)) < 0.5).astype(float)
        H = np.triu(H) + np.triu(H, 1).T
        lam = rng.uniform(0.2, 2.0, n)
        vs = [rng.random(n) for _ in range(2)]
        out.append((atomic_model(lam, H), lam, H, vs))
    return out


TIMES_4 = np.array([0.5, 1.0, 2.0])


def test_renyi_packing_density(acceptance_report):
    start = time.perf_counter()
    d30, s30 = mc.renyi_density(1e4, 1.0, 1.0, 30.0, 20, SEED, JOBS)
    d60, s60 = mc.renyi_density(1e4, 1.0, 1.0, 60.0, 20, SEED, JOBS)
    elapsed = time.perf_counter() - start
    in_band = abs(d30 - 0.74759) <= 0.005
    saturated = abs(d60 - d30) < 0.001
    ok = in_band and saturated and elapsed < 60
    acceptance_report(
        1, ok,
        f"density(t=30) = {d30:.5f} +- {s30:.5f}, density(t=60) = {d60:.5f} +- {s60:.5f}, "
        f"band 0.74759 +- 0.005 {'met' if in_band else 'missed'}, doubling change {abs(d60 - d30):.5f} "
        f"({'<' if saturated else '>='} 0.001), {elapsed:.1f} s. "
        "Exact coverage of this process is 0.737090 at t=30 and 0.742344 at t=60 "
        "(rho(t) = int_0^t exp(-2 int_0^u (1-e^-s)/s ds) du), so the band and the doubling test "
        "cannot both hold at these times",
    )
    assert ok


def test_matern_ii_moment_closed_form(line_model, acceptance_report):
    times = [0.5, 1.0, 2.0, 5.0]
    x = np.array([10.0])
    solver_err = max(abs(moment_density(line_model, 1, t, x).value - (1 - math.exp(-t))) for t in times)
    B = Box((0.0,), (20.0,))
    mu, se = mc.estimate_moment_curve(line_model, 1, times, B, 10_000, SEED, JOBS)
    z = [(m - (1 - math.exp(-t)) * 20.0) / s for m, s, t in zip(mu, se, times)]
    ok = solver_err <= 1e-6 and all(abs(zz) <= 3 for zz in z)
    acceptance_report(2, ok, f"max |m_1 - (1 - e^-t)| = {solver_err:.2e}; MC z-scores {np.round(z, 2).tolist()}")
    assert ok


def test_two_atom_first_arrival(two_atom_full, acceptance_report):
    lam = [0.7, 1.6]
    times = np.array([0.25, 0.5, 1.0, 1.5, 2.0])
    vs = [np.array(v) for v in ([0.3, 0.8], [0.0, 1.0], [0.5, 0.5], [0.9, 0.1], [0.2, 0.0])]
    exact = np.array([[first_arrival(lam, v, t) for v in vs] for t in times])
    solved = np.column_stack([solve_f_inf(two_atom_full, times, v, TOL).value for v in vs])
    solver_err = float(np.max(np.abs(solved - exact)))
    mean, se = mc.estimate_pgfl_grid(two_atom_full, "inf", times, vs, 1_000_000, SEED, JOBS)
    z = (mean - exact) / se
    ok = solver_err <= 1e-8 and bool(np.all(np.abs(z) <= 3))
    acceptance_report(3, ok, f"max solver error {solver_err:.2e} on 5x5 grid; MC max |z| = {np.max(np.abs(z)):.2f} at 1e6 reps")
    assert ok


def test_solver_vs_mc(acceptance_report):
    zs = []
    for i, (model, _, _, vs) in enumerate(random_instances()):
        for sel, k in (("inf", INF), (1, 1)):
            mean, se = mc.estimate_pgfl_grid(model, sel, TIMES_4, vs, 100_000, SEED + i, JOBS)
            for j, v in enumerate(vs):
                exact = np.atleast_1d(f_k(model, k, TIMES_4, v, TOL).value)
                for n in range(len(TIMES_4)):
                    if se[n, j] > 0:
                        zs.append((mean[n, j] - exact[n]) / se[n, j])
                    else:
                        zs.append(0.0 if abs(mean[n, j] - exact[n]) <= 1e-12 else math.inf)
    zs = np.array(zs)
    frac = float(np.mean(np.abs(zs) <= 3))
    ok = len(zs) == 120 and frac >= 0.95
    acceptance_report(4, ok, f"{int(np.sum(np.abs(zs) <= 3))}/{len(zs)} comparisons within 3 SE ({100 * frac:.1f}%), max |z| = {np.max(np.abs(zs)):.2f}")
    assert ok


def test_corollary_enclosure(acceptance_report):
    margins = []
    for model, _, _, vs in random_instances():
        for v in vs:
            val = np.atleast_1d(solve_f_inf(model, TIMES_4, v, TOL).value)
            lo, hi = (np.atleast_1d(b) for b in f_inf_bounds(model, TIMES_4, v))
            margins += list(val - lo) + list(hi - val)
    margins = np.array(margins)
    # for cliques the upper bound is attained exactly, so margins are resolved
    # only up to the solver tolerance
    ok = bool(np.all(margins >= -TOL))
    acceptance_report(
        5, ok,
        f"{len(margins)} margins, min {margins.min():.3e}, max {margins.max():.3e} "
        f"(nonnegative up to the solver tolerance {TOL:g})",
    )
    assert ok


def _sweep():
    model = load_model(FIXTURES / "homogeneous_2d.json")
    return structural_sweep(model, 3.0, 1000, SEED)


_SWEEP = {}


def sweep():
    if "r" not in _SWEEP:
        _SWEEP["r"] = _sweep()
    return _SWEEP["r"]


def test_structural_invariants(acceptance_report):
    sw = sweep()
    keys = ["nesting", "conflict_free_inf", "typeI_in_1", "typeI_in_inf", "sandwich", "commutation"]
    bad = {k: sw["violations"][k] for k in keys}
    ok = sum(bad.values()) == 0
    acceptance_report(6, ok, f"1000 realizations, {sw['points']} points, violations {bad}")
    assert ok


def test_stabilization(acceptance_report):
    sw = sweep()
    v = sw["violations"]["stabilization"]
    ok = v == 0 and sw["mean_ancestors"] <= sw["ancestor_bound"]
    acceptance_report(
        7, ok,
        f"stabilization violations {v}; mean |A(x)| = {sw['mean_ancestors']:.3f} <= exp(t_max N) = "
        f"{sw['ancestor_bound']:.3f}; max |A(x)| = {sw['max_ancestors']}",
    )
    assert ok


def test_palm_consistency(acceptance_report):
    results = []
    exact_identity = True
    for name, v in (("two_atom_palm", [0.35, 0.75]), ("three_atom", [0.3, 0.6, 0.8])):
        model = load_model(FIXTURES / f"{name}.json")
        v = np.array(v)
        for y in range(len(v)):
            for sel, solver in (("inf", lambda: solve_palm_f_inf(model, 1.5, v, y, TOL)),
                                (1, lambda: solve_palm_g1(model, 1.5, v, 1.0, y, TOL))):
                red = solver().value
                mean, se = mc.estimate_palm_pgfl(model, sel, 1.5, v, [y], 100_000, SEED + 7 * y, JOBS)
                # a zero standard error (anchor blocking every atom) demands exact agreement
                results.append(mc.compare(f"{name} y={y} {sel}", mean, se, red))
                exact_identity &= palm_from_reduced(v[y], red) == v[y] * red
    zs = np.array([abs(r["z_score"]) for r in results])
    exact = sum(r["stderr"] == 0 for r in results)
    ok = all(r["pass"] for r in results) and exact_identity
    acceptance_report(
        8, ok,
        f"{sum(r['pass'] for r in results)}/{len(results)} Palm comparisons pass at 1e5 reps "
        f"({exact} with zero variance, matched exactly), max |z| = {zs.max():.2f}; "
        f"palm = v(y) * reduced exact: {exact_identity}",
    )
    assert ok


def test_derivative_identities(acceptance_report):
    ratios = []
    for name, v, B in (("two_atom_palm", [0.35, 0.75], [0]), ("three_atom", [0.3, 0.6, 0.8], [1]),
                       ("three_atom", [0.3, 0.6, 0.8], [0, 2])):
        model = load_model(FIXTURES / f"{name}.json")
        res = []
        for s in (1e-2, 1e-3, 1e-4):
            fd, palm = derivative_identity_residual(model, 1.5, v, B, s)
            res.append(abs(fd - palm))
        ratios += [res[0] / res[1], res[1] / res[2]]
    logr = np.log10(ratios)
    ok = bool(np.all(np.abs(logr - 1) <= 0.1))
    acceptance_report(9, ok, f"residual ratios per decade {np.round(ratios, 3).tolist()} (band 10^(1 +- 0.1))")
    assert ok


def test_expansion_identity(acceptance_report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(0, 11))
        pat = TimedPointPattern(np.arange(n), rng.random((n, 2)), np.sort(rng.random(n)), None, 1.0)
        a, b = rng.random(2)
        v = lambda p, a=a, b=b: 0.5 + 0.5 * math.sin(7 * a * p[0] + 5 * b * p[1])  # noqa: E731
        lhs, rhs = mc.expansion_check(pat, v)
        worst = max(worst, abs(lhs - rhs))
    ok = worst <= 1e-12
    acceptance_report(10, ok, f"100 random patterns of <= 10 points in the unit square, max |lhs - rhs| = {worst:.2e}")
    assert ok
