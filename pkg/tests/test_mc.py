from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packinglab import kernels, mc
from packinglab.core import Box, ContinuousBox, HardKernel, Homogeneous, Model
from packinglab.matern import INF
from packinglab.palm import solve_palm_f_inf
from packinglab.pgfl import poisson_pgfl, u_tuple

from conftest import atomic_model, first_arrival


def within(mean, se, target, z=3.0):
    return abs(mean - target) <= z * se


def test_selector_parsing():
    assert mc.parse_selector(2) == ("k", 2)
    assert mc.parse_selector("inf") == ("inf",)
    assert mc.parse_selector(INF) == ("inf",)
    assert mc.parse_selector("I") == ("I",)
    assert mc.parse_selector("QR3") == ("QR", 3)
    with pytest.raises(ValueError):
        mc.parse_selector("bogus")


def test_constant_one_is_exact(three_atom):
    for sel in (0, 1, 2, "inf", "I"):
        assert mc.estimate_pgfl(three_atom, sel, 2.0, 1.0, 500, 3) == (1.0, 0.0)
    mean, se = mc.estimate_palm_pgfl(three_atom, "inf", 2.0, 1.0, [0], 500, 3)
    assert mean == 1.0 and se == 0.0


def test_reps_must_exceed_one(three_atom):
    with pytest.raises(ValueError):
        mc.estimate_pgfl(three_atom, 1, 1.0, 0.5, 1, 0)


def test_poisson_selection(three_atom):
    v = [0.3, 0.6, 0.8]
    mean, se = mc.estimate_pgfl(three_atom, 0, 1.0, v, 40_000, 5)
    assert within(mean, se, poisson_pgfl(three_atom, 1.0, v))


def test_full_conflict_first_arrival(two_atom_full):
    v = [0.3, 0.8]
    mean, se = mc.estimate_pgfl(two_atom_full, "inf", 1.0, v, 40_000, 6)
    assert within(mean, se, first_arrival([0.7, 1.6], v, 1.0))


def test_deterministic_and_independent_of_jobs(three_atom):
    a = mc.estimate_pgfl(three_atom, 1, 1.5, [0.3, 0.6, 0.8], 30_000, 9, jobs=1)
    b = mc.estimate_pgfl(three_atom, 1, 1.5, [0.3, 0.6, 0.8], 30_000, 9, jobs=1)
    c = mc.estimate_pgfl(three_atom, 1, 1.5, [0.3, 0.6, 0.8], 30_000, 9, jobs=2)
    assert a == b == c
    assert a != mc.estimate_pgfl(three_atom, 1, 1.5, [0.3, 0.6, 0.8], 30_000, 10)


def test_standard_error_halves_when_reps_quadruple(three_atom):
    _, s1 = mc.estimate_pgfl(three_atom, "inf", 1.0, [0.3, 0.6, 0.8], 10_000, 1)
    _, s4 = mc.estimate_pgfl(three_atom, "inf", 1.0, [0.3, 0.6, 0.8], 40_000, 2)
    assert 1.8 <= s1 / s4 <= 2.2


def test_joint_with_ones_equals_marginal_per_replication(three_atom):
    # the joint over (Q_1..Q_3, R_3) with the M_m test function on the classes
    # inside M_m, and 1 elsewhere, is the M_m marginal on every sample path
    v = np.array([0.3, 0.6, 0.8])
    for m in range(4):
        us = u_tuple(3, {m: v}, 3)
        qs = [mc.pgfl_query(three_atom, m, 1.2, v), mc.pgfl_query(three_atom, ("QR", 3), 1.2, us)]
        vals = mc.run_queries(three_atom, qs, 3000, 4)
        assert np.array_equal(vals[0, 0], vals[1, 0])


def test_moment_estimates(line_model):
    B = Box((5.0,), (9.0,))
    for t in (0.5, 2.0):
        mean, se = mc.estimate_moment(line_model, 1, t, B, 4000, 12)
        assert within(mean, se, (1 - math.exp(-t)) * 4.0)
    mean, se = mc.estimate_moment(line_model, 0, 1.0, B, 4000, 13)
    assert within(mean, se, 4.0)
    empty = Model(ContinuousBox((0.0,), (20.0,)), Homogeneous(0.0), HardKernel(0.5))
    assert mc.estimate_moment(empty, 1, 1.0, B, 50, 0) == (0.0, 0.0)


def test_palm_estimates(three_atom):
    v = [0.3, 0.6, 0.8]
    mean, se = mc.estimate_palm_pgfl(three_atom, "inf", 1.5, v, [0], 60_000, 21)
    assert within(mean, se, solve_palm_f_inf(three_atom, 1.5, v, 0).value)
    zero = atomic_model([0.6, 1.1, 0.4], np.zeros((3, 3)))
    mean, se = mc.estimate_palm_pgfl(zero, 1, 1.0, v, [1], 40_000, 22)
    assert within(mean, se, poisson_pgfl(zero, 1.0, v))
    with pytest.raises(ZeroDivisionError):
        mc.estimate_palm_pgfl(atomic_model([0.5, 0.0], np.ones((2, 2))), "inf", 1.0, 0.5, [1], 100, 0)


def test_expansion_examples():
    assert mc.expansion_check([], None) == (1.0, 1.0)
    lhs, rhs = mc.expansion_check([0.3], None)
    assert lhs == 0.3 and rhs == pytest.approx(1 - 0.7, abs=1e-16)
    with pytest.raises(ValueError):
        mc.expansion_check(np.full(13, 0.5), None)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), max_size=10))
def test_expansion_identity(vals):
    lhs, rhs = mc.expansion_check(vals, None)
    assert abs(lhs - rhs) <= 1e-12


def test_compare_entries():
    e = mc.compare("x", 0.51, 0.01, 0.5)
    assert set(e) == {"check", "mc_value", "solver_value", "stderr", "z_score", "pass"}
    assert e["pass"] and e["z_score"] == pytest.approx(1.0)
    assert not mc.compare("x", 0.6, 0.01, 0.5)["pass"]
    assert mc.compare("x", 1.0, 0.0, 1.0)["pass"]
    assert not mc.compare("x", 1.0, 0.0, 0.9)["pass"]


def test_renyi_small_intensity_and_filling():
    d, _ = mc.renyi_density(1000.0, 1.0, 1.0, 1e-4, 5, 0)
    assert d < 1e-3
    d, se = mc.renyi_density(2000.0, 1.0, 1.0, 5.0, 5, 1)
    assert d < 0.74759
    # exact coverage at t = 5 for the Poisson-timed process is 0.684570
    assert within(d, se, 0.684569702130329)


def test_renyi_pattern_reproduces_replication():
    pos, timers = mc.renyi_pattern(500.0, 1.0, 1.0, 3.0, 7, rep=2)
    acc = kernels.rsa_line(pos[np.argsort(timers, kind="stable")], 500.0, 1.0)
    d, _ = mc.renyi_density(500.0, 1.0, 1.0, 3.0, 3, 7)
    single = [mc._renyi_rep((500.0, 1.0, 1.0, 3.0, 7, r)) for r in range(3)]
    assert single[2] == acc.sum() / 500.0
    assert d == pytest.approx(np.mean(single), abs=1e-15)
