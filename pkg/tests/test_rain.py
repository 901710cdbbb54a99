from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from packinglab.core import (
    BudgetError,
    ConstantKernel,
    ContinuousBox,
    HardKernel,
    Homogeneous,
    Model,
    TimedPointPattern,
)
from packinglab.matern import restrict
from packinglab.rain import (
    CostWarning,
    candidate_pairs,
    dump_conflicts,
    dump_pattern,
    load_conflicts,
    load_pattern,
    sample_conflicts,
    sample_rain,
)

from conftest import atomic_model


def unit_square(lam=1.0, kernel=None):
    return Model(ContinuousBox((0.0, 0.0), (1.0, 1.0)), Homogeneous(lam), kernel or HardKernel(0.1))


def test_zero_intensity_gives_empty_pattern():
    p = sample_rain(unit_square(0.0), None, 5.0, 3)
    assert len(p) == 0


def test_same_seed_same_pattern():
    m = unit_square(3.0)
    a, b = sample_rain(m, None, 2.0, 42), sample_rain(m, None, 2.0, 42)
    assert np.array_equal(a.locations, b.locations) and np.array_equal(a.timers, b.timers)
    c = sample_rain(m, None, 2.0, 43)
    assert len(a) != len(c) or not np.array_equal(a.timers, c.timers)


def test_pattern_invariants():
    m = unit_square(4.0)
    p = sample_rain(m, None, 3.0, 1)
    assert np.array_equal(p.ids, np.arange(len(p)))
    assert np.all((p.timers >= 0) & (p.timers < 3.0))
    assert np.all(m.space.box.contains(p.locations))
    assert len(np.unique(p.timers)) == len(p)


def test_mean_count_poisson():
    m = unit_square(1.0)
    counts = np.array([len(sample_rain(m, None, 10.0, s)) for s in range(10_000)])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - 10.0) <= 3 * se


def test_atomic_counts_per_site():
    m = atomic_model([0.5, 2.0, 1.0], np.eye(3))
    per_site = np.array([np.bincount(sample_rain(m, None, 2.0, s).sites, minlength=3) for s in range(4000)])
    mean = per_site.mean(0)
    se = per_site.std(0, ddof=1) / np.sqrt(len(per_site))
    assert np.all(np.abs(mean - np.array([1.0, 4.0, 2.0])) <= 3 * se)


def test_window_restricts_locations():
    from packinglab.core import Box

    m = Model(ContinuousBox((0.0, 0.0), (10.0, 10.0)), Homogeneous(1.0), HardKernel(0.5))
    w = Box((2.0, 3.0), (4.0, 5.0))
    p = sample_rain(m, w, 5.0, 9)
    assert len(p) > 0 and np.all(w.contains(p.locations))


def _pattern(locs, timers=None):
    locs = np.asarray(locs, float)
    n = len(locs)
    timers = np.linspace(0.1, 0.9, n) if timers is None else np.asarray(timers, float)
    return TimedPointPattern(np.arange(n), locs, timers, None, 1.0)


def test_zero_kernel_empty_relation():
    m = unit_square(1.0, HardKernel(-1.0))
    p = sample_rain(unit_square(50.0), None, 1.0, 0)
    assert len(sample_conflicts(p, m, 0)) == 0


def test_certain_kernel_close_pair_always_conflicts():
    m = unit_square(1.0, HardKernel(0.2))
    p = _pattern([[0.5, 0.5], [0.55, 0.5]])
    for s in range(50):
        assert sample_conflicts(p, m, s).lookup(0, 1)


def test_half_kernel_edge_frequency():
    m = unit_square(1.0, ConstantKernel(0.5, 0.2))
    p = _pattern([[0.5, 0.5], [0.55, 0.5]])
    hits = np.array([sample_conflicts(p, m, s).lookup(0, 1) for s in range(10_000)], dtype=float)
    se = np.sqrt(0.25 / len(hits))
    assert abs(hits.mean() - 0.5) <= 3 * se


def test_disjoint_pairs_uncorrelated():
    # three mutually close points: indicators of {0,1} and {1,2} must be independent
    m = unit_square(1.0, ConstantKernel(0.5, 0.3))
    p = _pattern([[0.5, 0.5], [0.55, 0.5], [0.5, 0.55]])
    table = np.zeros((2, 2))
    for s in range(4000):
        rel = sample_conflicts(p, m, s)
        table[int(rel.lookup(0, 1)), int(rel.lookup(1, 2))] += 1
    assert stats.chi2_contingency(table)[1] > 1e-3


def test_relation_stable_under_reordering():
    m = unit_square(1.0, ConstantKernel(0.5, 0.3))
    p = sample_rain(unit_square(30.0), None, 1.0, 5)
    rel = sample_conflicts(p, m, 11)
    perm = np.random.default_rng(0).permutation(len(p))
    q = TimedPointPattern(p.ids[perm], p.locations[perm], p.timers[perm], None, p.t_max)
    assert np.array_equal(sample_conflicts(q, m, 11).edges, rel.edges)


def test_restriction_matches_shorter_rain_in_distribution():
    m = unit_square(20.0)
    short = [sample_rain(m, None, 0.5, s) for s in range(1500)]
    cut = [restrict(sample_rain(m, None, 1.0, 10_000 + s), 0.0, 0.5) for s in range(1500)]
    ca = np.array([len(p) for p in short])
    cb = np.array([len(p) for p in cut])
    z = (ca.mean() - cb.mean()) / np.sqrt(ca.var(ddof=1) / len(ca) + cb.var(ddof=1) / len(cb))
    assert abs(z) < 4
    ta = np.concatenate([p.timers for p in short])
    tb = np.concatenate([p.timers for p in cut])
    assert stats.ks_2samp(ta, tb).pvalue > 1e-3


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 3),
    st.booleans(),
    st.floats(0.05, 0.6),
    st.integers(0, 60),
    st.integers(0, 10_000),
)
def test_grid_pairs_match_brute_force(d, periodic, radius, n, seed):
    rng = np.random.default_rng(seed)
    L = rng.uniform(0.5, 3.0, d)
    m = Model(ContinuousBox(tuple([0.0] * d), tuple(L), periodic), Homogeneous(1.0), HardKernel(radius))
    locs = rng.random((n, d)) * L
    p = _pattern(locs, rng.permutation(n) / max(n, 1) * 0.99)
    i, j, h = candidate_pairs(p, m)
    got = set(zip(i.tolist(), j.tolist()))
    want = set()
    for a in range(n):
        for b in range(a + 1, n):
            if m.space.distance(locs[a], locs[b]) <= radius:
                want.add((a, b))
    assert got == want
    assert np.all(h == 1.0)


def test_csv_round_trip_bit_exact(tmp_path):
    m = unit_square(30.0, ConstantKernel(0.5, 0.2))
    p = sample_rain(m, None, 1.0, 8)
    rel = sample_conflicts(p, m, 8)
    dump_pattern(p, tmp_path / "p.csv")
    dump_conflicts(rel, tmp_path / "c.csv")
    q = load_pattern(tmp_path / "p.csv")
    assert np.array_equal(q.ids, p.ids)
    assert np.array_equal(q.locations, p.locations)
    assert np.array_equal(q.timers, p.timers)
    assert np.array_equal(load_conflicts(tmp_path / "c.csv").edges, rel.edges)
    dump_pattern(q, tmp_path / "p2.csv")
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()


def test_budget_refusal(monkeypatch):
    monkeypatch.setenv("PACKINGLAB_BUDGET_MB", "1")
    m = Model(ContinuousBox((0.0, 0.0), (100.0, 100.0)), Homogeneous(10.0), HardKernel(0.1))
    with pytest.raises(BudgetError) as exc:
        sample_rain(m, None, 10.0, 0)
    assert exc.value.needed > exc.value.budget


def test_all_pairs_fallback_warns():
    m = atomic_model([2300.0], [[1.0]])
    p = sample_rain(m, None, 1.0, 0)
    assert len(p) > 2000
    with pytest.warns(CostWarning):
        candidate_pairs(p, m)
