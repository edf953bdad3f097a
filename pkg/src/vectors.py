# src/vectors.py
"""
Test-vector presets x for the overlap process.

uniform : 1/sqrt(n) in every coordinate
signs   : +-1/sqrt(n) with random signs
slab    : sqrt(2/n) on the first n/2 coordinates
decay   : slowly decaying profile with ||x||_inf = n^{-1/4}
e1      : first basis vector (||x||_inf = 1, outside the universality regime)
haar    : one fixed uniformly random unit vector

For beta=2, uniform/signs/slab/decay carry a deterministic phase pattern so that
the vector is genuinely complex.
"""

from __future__ import annotations
import math
from typing import Tuple

import numpy as np

from .ensembles import STREAM_VECTOR, keyed_rng
from .errors import DomainError

PRESETS = ("uniform", "signs", "slab", "decay", "e1", "haar")


def _decay_profile(n: int) -> np.ndarray:
    """
    x_i proportional to i^{-a} with a in (0, 1/2) solved so that max_i x_i = n^{-1/4}.
    Bisection on a: the sup-norm ratio 1/||i^{-a}|| decreases as a grows.
    """
    i = np.arange(1, n + 1, dtype=np.float64)
    target = n ** -0.25
    lo, hi = 0.0, 0.5
    for _ in range(80):
        a = 0.5 * (lo + hi)
        ratio = 1.0 / np.linalg.norm(i ** -a)
        if ratio < target:
            lo = a
        else:
            hi = a
    prof = i ** -(0.5 * (lo + hi))
    return prof / np.linalg.norm(prof)


def make_test_vector(preset: str, n: int, beta: int = 1, seed: int = 0) -> Tuple[np.ndarray, str]:
    """Return (x, descriptor) with ||x|| = 1."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if beta not in (1, 2):
        raise DomainError(f"beta must be 1 or 2, got {beta}")

    rng = keyed_rng(seed, STREAM_VECTOR)
    if preset == "uniform":
        x = np.full(n, 1.0 / math.sqrt(n))
    elif preset == "signs":
        x = (rng.integers(0, 2, size=n) * 2 - 1) / math.sqrt(n)
    elif preset == "slab":
        half = n // 2
        x = np.zeros(n)
        x[:half] = 1.0 / math.sqrt(half)
    elif preset == "decay":
        x = _decay_profile(n)
    elif preset == "e1":
        x = np.zeros(n)
        x[0] = 1.0
    elif preset == "haar":
        if beta == 1:
            g = rng.standard_normal(n)
        else:
            g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        return g / np.linalg.norm(g), f"haar(seed={seed})"
    else:
        raise DomainError(f"unknown test vector preset '{preset}', expected one of {PRESETS}")

    if beta == 2 and preset != "e1":
        phase = np.exp(2j * np.pi * np.arange(n) / n)
        x = x * phase
    x = x / np.linalg.norm(x)
    return x, preset


def sup_norm(x: np.ndarray) -> float:
    return float(np.max(np.abs(x)))
