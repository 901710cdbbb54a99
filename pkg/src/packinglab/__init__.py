"""Matérn-type packing processes built on a Poisson rain with random conflicts."""
from __future__ import annotations

__version__ = "0.1.0"
