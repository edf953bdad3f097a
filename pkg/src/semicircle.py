# src/semicircle.py
"""
Closed-form analytics of the semicircle law:
density -> CDF -> quantile -> classical locations -> Stieltjes transform -> Psi.

Normalization: rho_sc(x) = sqrt(4 - x^2) / (2 pi) on [-2, 2], so that F_sc(2) = 1.

All functions accept scalars or numpy arrays and are pure.

Run: python -m src.cli semicircle --n 20
"""

from __future__ import annotations
import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
from scipy import integrate

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]

# -------------------------
# Data
# -------------------------

@dataclass(frozen=True)
class SpectralPoint:
    E: float     # energy, real part of z
    eta: float   # imaginary part of z, must be > 0

    def __post_init__(self):
        if not (self.eta > 0):
            raise DomainError(f"SpectralPoint needs eta > 0, got eta={self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)


@dataclass(frozen=True)
class SpectralDomain:
    eta_min: float              # lower edge for eta (the polylog/n constant is a config choice)
    e_max: float = 5.0          # |E| <= e_max
    eta_max: float = 10.0       # eta <= eta_max

    def __post_init__(self):
        if not (0 < self.eta_min < self.eta_max):
            raise DomainError(f"need 0 < eta_min < eta_max, got {self.eta_min}, {self.eta_max}")
        if self.e_max < 2:
            raise DomainError(f"e_max must cover the support [-2, 2], got {self.e_max}")

    def contains(self, point: SpectralPoint) -> bool:
        return abs(point.E) <= self.e_max and self.eta_min <= point.eta <= self.eta_max


def spectral_domain_contains(domain: SpectralDomain, point: SpectralPoint) -> bool:
    return domain.contains(point)

# -------------------------
# Density / CDF / quantile
# -------------------------

def density(x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) <= 2.0
    out = np.where(inside, np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * np.pi), 0.0)
    return float(out) if out.ndim == 0 else out


def cdf(x: ArrayLike) -> ArrayLike:
    x = np.clip(np.asarray(x, dtype=np.float64), -2.0, 2.0)
    out = 0.5 + x * np.sqrt(4.0 - x * x) / (4.0 * np.pi) + np.arcsin(x / 2.0) / np.pi
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def quantile(t: ArrayLike) -> ArrayLike:
    """F_sc^{-1}(t) by vectorized bisection on [-2, 2]; quantile(0) = -2, quantile(1) = 2."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError("quantile needs 0 <= t <= 1")

    lo = np.full(t_arr.shape, -2.0)
    hi = np.full(t_arr.shape, 2.0)
    # 64 halvings shrink a width-4 bracket below one ulp
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < t_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(t_arr == 0.0, -2.0, out)
    out = np.where(t_arr == 1.0, 2.0, out)
    out = np.where(t_arr == 0.5, 0.0, out)
    return float(out) if out.ndim == 0 else out

# -------------------------
# Classical locations
# -------------------------

def classical_location(i: int, n: int) -> float:
    if n < 1 or not (1 <= i <= n):
        raise DomainError(f"classical_location needs 1 <= i <= n, got i={i}, n={n}")
    return float(quantile(i / n))


def classical_locations(n: int) -> np.ndarray:
    """gamma_1..gamma_n as an array."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return np.asarray(quantile(np.arange(1, n + 1) / n), dtype=np.float64)


def edge_scale(n: int) -> np.ndarray:
    """[min(i, n - i + 1)]^{-1/3} n^{-2/3} for i = 1..n."""
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.minimum(i, n - i + 1) ** (-1.0 / 3.0) * float(n) ** (-2.0 / 3.0)


def spacing_constant(n: int) -> float:
    """Smallest C with |gamma_{i+1} - gamma_i| <= C * edge_scale_i for i = 1..n-1."""
    if n < 2:
        raise DomainError("spacing needs n >= 2")
    gam = classical_locations(n)
    gaps = np.diff(gam)
    return float(np.max(gaps / edge_scale(n)[:-1]))

# -------------------------
# Stieltjes transform
# -------------------------

def _check_eta(z: np.ndarray) -> None:
    if np.any(~(np.imag(z) > 0)):
        raise DomainError("Stieltjes transform needs Im z > 0")


def stieltjes_msc(z: Union[SpectralPoint, complex, np.ndarray]) -> Union[complex, np.ndarray]:
    """Root of m^2 + z m + 1 = 0 with Im m > 0."""
    if isinstance(z, SpectralPoint):
        z = z.z
    z_arr = np.asarray(z, dtype=np.complex128)
    _check_eta(z_arr)

    s = np.sqrt(z_arr * z_arr - 4.0)
    # align s with z so that (-z - s)/2 is the large root; m_sc is its reciprocal
    s = np.where(np.real(np.conj(z_arr) * s) < 0, -s, s)
    m = 1.0 / ((-z_arr - s) / 2.0)
    m = np.where(np.imag(m) > 0, m, 1.0 / m)
    return complex(m) if m.ndim == 0 else m


def stieltjes_quadrature(z: Union[SpectralPoint, complex]) -> complex:
    """int rho_sc(x) / (x - z) dx by adaptive quadrature; oracle for stieltjes_msc."""
    if isinstance(z, SpectralPoint):
        z = z.z
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("Stieltjes transform needs Im z > 0")

    pts = [z.real] if -2.0 < z.real < 2.0 else None
    re, _ = integrate.quad(
        lambda x: density(x) * (x - z.real) / ((x - z.real) ** 2 + z.imag ** 2),
        -2.0, 2.0, points=pts, limit=500, epsabs=1e-13, epsrel=1e-12,
    )
    im, _ = integrate.quad(
        lambda x: density(x) * z.imag / ((x - z.real) ** 2 + z.imag ** 2),
        -2.0, 2.0, points=pts, limit=500, epsabs=1e-13, epsrel=1e-12,
    )
    return complex(re, im)


def psi(z: Union[SpectralPoint, complex, np.ndarray], n: int) -> Union[float, np.ndarray]:
    """Psi(z) = sqrt(Im m_sc / (n eta)) + 1 / (n eta)."""
    if isinstance(z, SpectralPoint):
        z = z.z
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    z_arr = np.asarray(z, dtype=np.complex128)
    _check_eta(z_arr)
    n_eta = float(n) * np.imag(z_arr)
    out = np.sqrt(np.imag(stieltjes_msc(z_arr)) / n_eta) + 1.0 / n_eta
    return float(out) if out.ndim == 0 else out

# -------------------------
# Moments
# -------------------------

def semicircle_moment(k: int) -> float:
    """int x^k rho_sc: 0 for odd k, Catalan(k/2) for even k."""
    if k < 0:
        raise DomainError(f"moment order must be >= 0, got {k}")
    if k % 2:
        return 0.0
    j = k // 2
    return float(math.comb(2 * j, j) // (j + 1))

# -------------------------
# Tables (CLI)
# -------------------------

def density_table(xs: np.ndarray) -> List[Tuple[float, float, float]]:
    return [(float(x), float(density(x)), float(cdf(x))) for x in xs]


def location_table(n: int) -> List[Tuple[int, float]]:
    return [(i + 1, float(g)) for i, g in enumerate(classical_locations(n))]
