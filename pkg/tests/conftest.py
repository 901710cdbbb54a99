from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from packinglab.core import (
    Atomic,
    ContinuousBox,
    DiscreteSites,
    HardKernel,
    Homogeneous,
    Model,
    TableKernel,
    load_model,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def atomic_model(weights, hmat) -> Model:
    w = np.asarray(weights, float)
    locs = np.arange(len(w), dtype=float)[:, None]
    return Model(DiscreteSites(locs), Atomic(w), TableKernel(np.asarray(hmat, float)))


def first_arrival(lam, v, t) -> float:
    """E[v(first point)] for a model where every pair conflicts (empty if no point)."""
    lam, v = np.asarray(lam, float), np.asarray(v, float)
    L = lam.sum()
    return math.exp(-L * t) + (1 - math.exp(-L * t)) * float(lam @ v) / L


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def two_atom_full() -> Model:
    return load_model(FIXTURES / "two_atom_full.json")


@pytest.fixture
def three_atom() -> Model:
    return load_model(FIXTURES / "three_atom.json")


@pytest.fixture
def two_atom_palm() -> Model:
    return load_model(FIXTURES / "two_atom_palm.json")


@pytest.fixture
def line_model() -> Model:
    """Torus of length 20, unit intensity, h = 1 for |x - y| <= 1/2."""
    return Model(ContinuousBox((0.0,), (20.0,)), Homogeneous(1.0), HardKernel(0.5))


@pytest.fixture
def disc_model() -> Model:
    return load_model(FIXTURES / "homogeneous_2d.json")


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def report(number: int, passed: bool, detail: str) -> None:
        line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
