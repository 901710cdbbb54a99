from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packinglab.core import (
    Atomic,
    Box,
    ConflictRealization,
    ConstantKernel,
    ContinuousBox,
    DiscreteSites,
    GaussianKernel,
    HardKernel,
    Homogeneous,
    Model,
    ModelError,
    PiecewiseGrid,
    QuadratureError,
    TableKernel,
    kernel_mass_at,
    load_model,
    model_from_dict,
    model_to_dict,
    validate_model,
)

from conftest import atomic_model


def test_box_and_sites_invariants():
    with pytest.raises(ModelError):
        ContinuousBox((0.0,), (0.0,))
    with pytest.raises(ModelError):
        DiscreteSites(np.array([[0.0], [0.0]]))
    b = ContinuousBox((0.0, 0.0), (2.0, 3.0))
    assert b.box.volume == 6.0
    # minimum-image distance on the torus
    assert b.distance(np.array([0.1, 0.0]), np.array([1.9, 0.0])) == pytest.approx(0.2)
    assert ContinuousBox((0.0,), (2.0,), periodic=False).distance(np.array([0.1]), np.array([1.9])) == pytest.approx(1.8)


def test_kernel_mass_zero_kernel():
    m = Model(ContinuousBox((0.0,), (10.0,)), Homogeneous(2.0), HardKernel(-1.0))
    assert kernel_mass_at(m, np.array([5.0])) == 0.0


def test_kernel_mass_unit_interval_indicator():
    # h = 1 on an interval of length 1 around x, unit intensity
    m = Model(ContinuousBox((0.0,), (10.0,), periodic=False), Homogeneous(1.0), HardKernel(0.5))
    assert kernel_mass_at(m, np.array([5.0])) == pytest.approx(1.0, abs=1e-12)


def test_kernel_mass_two_atoms_weighted_sum():
    m = atomic_model([2.0, 3.0], [[1, 1], [1, 1]])
    assert kernel_mass_at(m, 0) == 5.0
    assert kernel_mass_at(m, np.array([0.0])) == 5.0


def test_kernel_mass_disc_and_gaussian_closed_forms():
    disc = Model(ContinuousBox((0.0, 0.0), (6.0, 6.0)), Homogeneous(1.0), HardKernel(0.5))
    assert kernel_mass_at(disc, np.array([3.0, 3.0])) == pytest.approx(math.pi / 4, rel=1e-12)
    soft = Model(ContinuousBox((0.0, 0.0), (6.0, 6.0)), Homogeneous(0.5), ConstantKernel(0.3, 1.0))
    assert kernel_mass_at(soft, np.array([1.0, 1.0])) == pytest.approx(0.5 * 0.3 * math.pi, rel=1e-12)
    # truncated Gaussian in 2-D: 2 pi a s^2 (1 - exp(-R^2 / 2 s^2))
    a, s, R = 0.9, 0.4, 1.6
    g = Model(ContinuousBox((0.0, 0.0), (5.0, 5.0)), Homogeneous(0.8), GaussianKernel(a, s, R))
    exact = 0.8 * 2 * math.pi * a * s * s * (1 - math.exp(-R * R / (2 * s * s)))
    assert kernel_mass_at(g, np.array([2.5, 2.5])) == pytest.approx(exact, rel=1e-9)


def test_kernel_mass_clipped_by_walls():
    m = Model(ContinuousBox((0.0, 0.0), (4.0, 4.0), periodic=False), Homogeneous(1.0), HardKernel(0.5))
    # corner: a quarter disc
    assert kernel_mass_at(m, np.array([0.0, 0.0])) == pytest.approx(math.pi / 16, rel=1e-12)
    # distance 0.1 from one wall: disc minus the circular segment beyond it
    r, dd = 0.5, 0.1
    segment = r * r * math.acos(dd / r) - dd * math.sqrt(r * r - dd * dd)
    assert kernel_mass_at(m, np.array([2.0, 0.1])) == pytest.approx(math.pi * r * r - segment, rel=1e-12)
    line = Model(ContinuousBox((0.0,), (4.0,), periodic=False), Homogeneous(2.0), HardKernel(0.5))
    assert kernel_mass_at(line, np.array([0.2])) == pytest.approx(2.0 * 0.7, rel=1e-14)


def test_kernel_mass_quadrature_failure_carries_estimates():
    dens = np.array([[1.0, 2.0], [3.0, 0.5]])
    m = Model(ContinuousBox((0.0, 0.0), (4.0, 4.0), periodic=False), PiecewiseGrid(dens), HardKernel(0.5))
    with pytest.raises(QuadratureError) as exc:
        kernel_mass_at(m, np.array([2.0, 2.0]), rtol=1e-15, max_cells=4)
    assert len(exc.value.estimates) == 2


def test_kernel_mass_grid_measure():
    # density 2 on the left half, 0 on the right; hard radius 0.5 at the border
    m = Model(ContinuousBox((0.0,), (4.0,), periodic=False), PiecewiseGrid(np.array([2.0, 0.0])), HardKernel(0.5))
    assert kernel_mass_at(m, np.array([2.0])) == pytest.approx(1.0, rel=1e-8)


def test_validate_hard_disc_reports_disc_measure():
    m = Model(ContinuousBox((0.0, 0.0), (6.0, 6.0)), Homogeneous(1.0), HardKernel(0.5))
    d = validate_model(m)
    assert d.passed
    assert d.nbar == pytest.approx(math.pi / 4, rel=1e-12)


def test_validate_detects_asymmetry():
    m = atomic_model([1.0, 1.0], [[1, 0.3], [0.7, 1]])
    d = validate_model(m)
    assert not d.passed
    assert any(f.startswith("symmetry") for f in d.failures)


def test_validate_detects_infinite_density():
    m = Model(ContinuousBox((0.0,), (1.0,)), Homogeneous(math.inf), HardKernel(0.1))
    d = validate_model(m)
    assert not d.passed
    assert any(f.startswith("local finiteness") for f in d.failures)


def test_validate_detects_range():
    m = Model(ContinuousBox((0.0,), (1.0,)), Homogeneous(1.0), ConstantKernel(1.5, 0.1))
    assert any(f.startswith("range") for f in validate_model(m).failures)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_mass_never_exceeds_nbar(n, seed):
    rng = np.random.default_rng(seed)
    H = (rng.random((n, n)) < 0.5).astype(float)
    H = np.maximum(H, H.T)
    m = atomic_model(rng.uniform(0.2, 2.0, n), H)
    d = validate_model(m)
    assert d.passed
    for i in range(n):
        assert 0 <= kernel_mass_at(m, i) <= d.nbar + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), max_size=40))
def test_conflict_realization_symmetric_and_irreflexive(pairs):
    pairs = [(a, b) for a, b in pairs if a != b]
    rel = ConflictRealization(pairs)
    assert np.all(rel.edges[:, 0] < rel.edges[:, 1]) if len(rel) else True
    for a, b in pairs:
        assert rel.lookup(a, b) and rel.lookup(b, a)
    for i in range(31):
        assert not rel.lookup(i, i)


def test_conflict_realization_rejects_self_pairs():
    with pytest.raises(ModelError):
        ConflictRealization([(3, 3)])


def test_model_json_round_trip(tmp_path, fixtures_dir):
    for path in sorted(fixtures_dir.glob("*.json")):
        cfg = json.loads(path.read_text())
        if "model" not in cfg:
            continue
        m = model_from_dict(cfg["model"])
        again = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        assert model_to_dict(again) == model_to_dict(m)
        p = tmp_path / path.name
        p.write_text(json.dumps({"model": model_to_dict(m)}))
        assert model_to_dict(load_model(p)) == model_to_dict(m)


def test_every_fixture_model_validates(fixtures_dir):
    for path in sorted(fixtures_dir.glob("*.json")):
        cfg = json.loads(path.read_text())
        if "model" in cfg:
            assert validate_model(model_from_dict(cfg["model"])).passed, path.name


def test_unknown_types_rejected():
    with pytest.raises(ModelError):
        model_from_dict({"space": {"type": "sphere"}, "measure": {}, "kernel": {}})


def test_atoms_of_grid_discretization_conserve_mass():
    m = Model(ContinuousBox((0.0, 0.0), (2.0, 3.0)), Homogeneous(1.5), HardKernel(0.5))
    a = m.atoms((4, 6))
    assert a.n == 24
    assert a.total == pytest.approx(m.mass())
    assert np.allclose(a.hmat, a.hmat.T)
    assert np.all(np.diag(a.hmat) == 1.0)


def test_box_contains_half_open():
    b = Box((0.0,), (1.0,))
    assert list(b.contains(np.array([[0.0], [1.0], [0.5]]))) == [True, False, True]


def test_table_kernel_on_sites():
    m = Model(DiscreteSites(np.array([[0.0], [1.0]])), Atomic(np.array([1.0, 1.0])), TableKernel(np.array([[0, 0.4], [0.4, 0]])))
    assert m.h(np.array([0.0]), np.array([1.0])) == pytest.approx(0.4)
