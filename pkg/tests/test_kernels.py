from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packinglab import _pykernels, kernels

try:
    from packinglab import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def random_dag(n, p, rng):
    a, b = np.triu_indices(n, 1)
    keep = rng.random(len(a)) < p
    src, dst = a[keep], b[keep]
    order = np.argsort(dst, kind="stable")
    pred_ptr = np.r_[0, np.cumsum(np.bincount(dst, minlength=n))].astype(np.int64)
    pred_idx = src[order].astype(np.int64)
    u = np.r_[src, dst]
    w = np.r_[dst, src]
    o = np.argsort(u, kind="stable")
    und_ptr = np.r_[0, np.cumsum(np.bincount(u, minlength=n))].astype(np.int64)
    return pred_ptr, pred_idx, und_ptr, w[o].astype(np.int64)


def test_backend_flag_matches_import():
    assert kernels.BACKEND == ("cython" if _ckernels is not None and os.environ.get("PACKINGLAB_PURE_PYTHON") != "1" else "python")


def test_pure_python_forced_by_environment():
    env = dict(os.environ, PACKINGLAB_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from packinglab import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_mix_is_splitmix_reference():
    # first output of splitmix64 seeded with 0
    assert _pykernels.splitmix64(0) == 0xE220A8397B1DCDAF
    assert _pykernels.mix(1, 2) != _pykernels.mix(2, 1)


def test_keyed_uniform_range_and_addressing():
    u = _pykernels.keyed_uniform(7, np.arange(10_000), np.arange(10_000) + 1)
    assert np.all((u >= 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.02
    # value depends only on its address, not on batch composition
    assert _pykernels.keyed_uniform(7, np.array([5]), np.array([6]))[0] == u[5]


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.lists(st.integers(0, 2**40), min_size=1, max_size=50))
def test_keyed_uniform_parity(key, addr):
    a = np.array(addr, dtype=np.int64)
    assert np.array_equal(_pykernels.keyed_uniform(key, a, a[::-1]), _ckernels.keyed_uniform(key, a, a[::-1]))
    assert _pykernels.mix(key, addr[0]) == _ckernels.mix(key, addr[0])


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 60), st.floats(0.0, 0.5), st.integers(0, 10**6), st.integers(1, 6))
def test_graph_kernel_parity(n, p, seed, kmax):
    rng = np.random.default_rng(seed)
    pp, px, up, ux = random_dag(n, p, rng)
    order = np.arange(n, dtype=np.int64)
    assert np.array_equal(_pykernels.greedy_accept(order, up, ux), _ckernels.greedy_accept(order, up, ux))
    assert np.array_equal(_pykernels.ek_rounds(pp, px, kmax), _ckernels.ek_rounds(pp, px, kmax))
    assert np.array_equal(_pykernels.einf_dfs(pp, px), _ckernels.einf_dfs(pp, px))


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 10**6), st.integers(0, 4))
def test_atomic_batch_parity(nsite, reps, seed, kmax):
    rng = np.random.default_rng(seed)
    counts = rng.poisson(1.5, size=(reps, nsite))
    site = np.repeat(np.tile(np.arange(nsite), reps), counts.ravel()).astype(np.int64)
    offsets = np.r_[0, np.cumsum(counts.sum(1))].astype(np.int64)
    h = rng.choice([0.0, 0.3, 1.0], size=(nsite, nsite))
    h = np.triu(h) + np.triu(h, 1).T
    a = _pykernels.thin_atomic_batch(offsets, site, h, 99, 5, kmax)
    b = _ckernels.thin_atomic_batch(offsets, site, h, 99, 5, kmax)
    assert np.array_equal(a, b)


def rsa_brute(pos, length, r):
    kept = []
    for x in pos:
        if all(min(abs(x - y), length - abs(x - y)) >= r for y in kept):
            kept.append(x)
    return np.array([x in kept for x in pos], dtype=np.int8)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 30.0), st.floats(0.1, 3.0), st.integers(0, 80), st.integers(0, 10**6))
def test_rsa_line_matches_brute_force(length, r, n, seed):
    pos = np.random.default_rng(seed).random(n) * length
    want = rsa_brute(pos.tolist(), length, r)
    assert np.array_equal(_pykernels.rsa_line(pos, length, r), want)
    if _ckernels is not None:
        assert np.array_equal(_ckernels.rsa_line(pos, length, r), want)
