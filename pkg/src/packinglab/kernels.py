"""Kernel dispatch: the compiled extension when importable, else the numpy fallback.

Set ``PACKINGLAB_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("PACKINGLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

mix = _impl.mix
keyed_uniform = _impl.keyed_uniform
greedy_accept = _impl.greedy_accept
ek_rounds = _impl.ek_rounds
einf_dfs = _impl.einf_dfs
thin_atomic_batch = _impl.thin_atomic_batch
rsa_line = _impl.rsa_line

__all__ = [
    "BACKEND",
    "mix",
    "keyed_uniform",
    "greedy_accept",
    "ek_rounds",
    "einf_dfs",
    "thin_atomic_batch",
    "rsa_line",
]
