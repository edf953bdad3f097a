# src/resolvent.py
"""
Green-function stage: G(z) = (M - zI)^{-1} and what is measured with it.

- green: full inverse, or bilinear forms through the eigen-expansion
  G_vw = sum_i <v,u_i><u_i,w> / (lambda_i - z)
- local_law_residual / averaged_local_law: isotropic and averaged local-law ratios vs Psi(z)
- rigidity_report / count_in_interval / delocalization_stat: spectral diagnostics
- smoothed_indicator / contour_observable: the arctan-smoothed window and its
  resolvent-integral representation

Nothing here thresholds: every op reports, callers decide.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import integrate

from . import semicircle
from .ensembles import WignerMatrix
from .errors import DomainError
from .semicircle import SpectralDomain, SpectralPoint
from .spectral import SpectralDecomposition, decompose

log = logging.getLogger(__name__)

FULL_MATRIX = "full_matrix"
BILINEAR_ONLY = "bilinear_only"

# -------------------------
# Data
# -------------------------

@dataclass
class ResolventEval:
    z: SpectralPoint
    mode: str                                   # full_matrix | bilinear_only
    m_n: complex                                # (1/n) tr G
    G: Optional[np.ndarray] = None              # only for full_matrix
    forms: List[Tuple[np.ndarray, np.ndarray, complex]] = field(default_factory=list)   # (v, w, <v, G w>)

    def form(self, i: int = 0) -> complex:
        return self.forms[i][2]


@dataclass
class LocalLawReport:
    E: float
    eta: float
    residual: float
    psi: float
    ratio: float


@dataclass
class RigidityReport:
    max_scaled_deviation: float
    per_index: np.ndarray                       # |lambda_i - gamma_i| / (min(i, n-i+1)^{-1/3} n^{-2/3})


@dataclass
class CountReport:
    count: int
    length: float
    ratio: Optional[float]                      # N / (n |I|), None outside the mesoscopic regime
    in_regime: bool

# -------------------------
# Green function
# -------------------------

def _unit(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.size != n:
        raise DomainError(f"{what} has shape {v.shape}, expected ({n},)")
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > 1e-10:
        raise DomainError(f"{what} must be a unit vector, got norm {nrm!r}")
    return v


def bilinear_forms(d: SpectralDecomposition, v: np.ndarray, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """<v, G(z) w> for an array of z via the eigen-expansion."""
    a = d.eigenvectors.conj().T @ v
    b = d.eigenvectors.conj().T @ w
    weights = np.conj(a) * b
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    return weights @ (1.0 / (d.eigenvalues[:, None] - z[None, :]))


def trace_average(d: SpectralDecomposition, z: np.ndarray) -> np.ndarray:
    """m_n(z) = (1/n) sum_i 1/(lambda_i - z) for an array of z."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    return np.mean(1.0 / (d.eigenvalues[:, None] - z[None, :]), axis=0)


def green(
    M: WignerMatrix,
    z: SpectralPoint,
    mode: str = FULL_MATRIX,
    pairs: Sequence[Tuple[np.ndarray, np.ndarray]] = (),
    d: Optional[SpectralDecomposition] = None,
) -> ResolventEval:
    if mode not in (FULL_MATRIX, BILINEAR_ONLY):
        raise DomainError(f"unknown resolvent mode '{mode}'")
    n = M.n
    zc = z.z

    if mode == FULL_MATRIX:
        A = M.entries.astype(np.complex128) - zc * np.eye(n)
        G = scipy.linalg.inv(A, check_finite=False)
        forms = [(v, w, complex(np.vdot(v, G @ w))) for v, w in pairs]
        return ResolventEval(z, mode, complex(np.trace(G) / n), G, forms)

    if d is None:
        d = decompose(M)
    forms = [(v, w, complex(bilinear_forms(d, v, w, zc)[0])) for v, w in pairs]
    return ResolventEval(z, mode, complex(trace_average(d, zc)[0]), None, forms)


def resolvent_identity_error(M: WignerMatrix, ev: ResolventEval) -> float:
    """max_ij |((M - zI) G - I)_ij|."""
    if ev.G is None:
        raise DomainError("resolvent identity needs the full matrix")
    n = M.n
    R = (M.entries - ev.z.z * np.eye(n)) @ ev.G - np.eye(n)
    return float(np.max(np.abs(R)))

# -------------------------
# Local laws
# -------------------------

def local_law_residual(
    M: WignerMatrix,
    z: SpectralPoint,
    v: np.ndarray,
    w: np.ndarray,
    domain: Optional[SpectralDomain] = None,
    d: Optional[SpectralDecomposition] = None,
) -> LocalLawReport:
    """|<v, G w> - m_sc <v, w>| against Psi(z)."""
    n = M.n
    if domain is None:
        domain = SpectralDomain(eta_min=1.0 / n)
    if not domain.contains(z):
        raise DomainError(f"z = {z.z} lies outside the spectral domain")
    v = _unit(v, n, "v")
    w = _unit(w, n, "w")

    if d is not None:
        gvw = complex(bilinear_forms(d, v, w, z.z)[0])
    else:
        A = M.entries.astype(np.complex128) - z.z * np.eye(n)
        gvw = complex(np.vdot(v, scipy.linalg.solve(A, w.astype(np.complex128), check_finite=False)))

    msc = semicircle.stieltjes_msc(z)
    residual = abs(gvw - msc * complex(np.vdot(v, w)))
    p = semicircle.psi(z, n)
    return LocalLawReport(z.E, z.eta, residual, p, residual / p)


def averaged_local_law(d: SpectralDecomposition, energies: Sequence[float], eta: float) -> Tuple[float, float]:
    """(sup_E |m_n - m_sc|, sup_E |m_n - m_sc| / Psi) over an energy grid at fixed eta."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    z = np.asarray(energies, dtype=np.float64) + 1j * eta
    diff = np.abs(trace_average(d, z) - semicircle.stieltjes_msc(z))
    ratio = diff / semicircle.psi(z, d.n)
    return float(np.max(diff)), float(np.max(ratio))

# -------------------------
# Spectral diagnostics
# -------------------------

def rigidity_report(d: SpectralDecomposition) -> RigidityReport:
    gam = semicircle.classical_locations(d.n)
    per = np.abs(d.eigenvalues - gam) / semicircle.edge_scale(d.n)
    return RigidityReport(float(np.max(per)), per)


def count_in_interval(d: SpectralDecomposition, interval: Tuple[float, float]) -> int:
    """N_n(I) for the closed interval I = [a, b]."""
    a, b = interval
    if a > b:
        raise DomainError(f"interval needs a <= b, got ({a}, {b})")
    lam = d.eigenvalues
    return int(np.searchsorted(lam, b, side="right") - np.searchsorted(lam, a, side="left"))


def counting_report(d: SpectralDecomposition, interval: Tuple[float, float], c: float = 0.1) -> CountReport:
    """N_n(I) with N / (n |I|) reported when |I| >= n^{-1+c}."""
    a, b = interval
    count = count_in_interval(d, interval)
    length = b - a
    in_regime = length >= d.n ** (-1.0 + c)
    ratio = count / (d.n * length) if in_regime and length > 0 else None
    return CountReport(count, length, ratio, in_regime)


def delocalization_stat(d: SpectralDecomposition, v: np.ndarray) -> float:
    """n * max_i |<u_i, v>|^2."""
    v = _unit(v, d.n, "v")
    return float(d.n * np.max(np.abs(d.eigenvectors.conj().T @ v) ** 2))

# -------------------------
# Smoothed window
# -------------------------

def default_eta(n: int, s1: float, s2: float, epsilon: float = 0.05) -> float:
    """eta = n^{-1/2 - epsilon} (s2 - s1)^{1/2}."""
    if not s1 < s2:
        raise DomainError(f"window needs s1 < s2, got ({s1}, {s2})")
    return float(n ** (-0.5 - epsilon) * math.sqrt(s2 - s1))


def smoothed_indicator(lam, s1: float, s2: float, eta: float):
    """(1/pi)(arctan((s2 - lam)/eta) - arctan((s1 - lam)/eta)): Poisson-smoothed 1{s1 < lam <= s2}."""
    if not s1 < s2:
        raise DomainError(f"window needs s1 < s2, got ({s1}, {s2})")
    if not eta > 0:
        raise DomainError("eta must be positive")
    lam = np.asarray(lam, dtype=np.float64)
    out = (np.arctan((s2 - lam) / eta) - np.arctan((s1 - lam) / eta)) / np.pi
    return float(out) if out.ndim == 0 else out


def poisson_kernel_quadrature(lam: float, s1: float, s2: float, eta: float) -> float:
    """(1/pi) int_{s1}^{s2} eta / ((lam - E)^2 + eta^2) dE by adaptive quadrature."""
    pts = [lam] if s1 < lam < s2 else None
    val, _ = integrate.quad(
        lambda E: eta / ((lam - E) ** 2 + eta ** 2) / np.pi,
        s1, s2, points=pts, limit=500, epsabs=1e-14, epsrel=1e-13,
    )
    return float(val)


def contour_observable(
    M: WignerMatrix,
    x: np.ndarray,
    s1: float,
    s2: float,
    eta: float,
    quad_step: float,
    d: Optional[SpectralDecomposition] = None,
) -> float:
    """
    (1/pi) int_{s1}^{s2} Im(<x, G(E + i eta) x> - m_n(E + i eta)) dE
    by composite Simpson with spacing <= quad_step. Raw integral; no process scaling.
    """
    if s1 > s2:
        raise DomainError(f"window needs s1 <= s2, got ({s1}, {s2})")
    if not eta > 0:
        raise DomainError("eta must be positive")
    if not (0 < quad_step <= eta / 10.0):
        raise DomainError(f"quad_step {quad_step} too coarse for eta {eta} (need <= eta/10)")
    if s1 == s2:
        return 0.0
    if d is None:
        d = decompose(M)
    x = _unit(x, d.n, "x")

    intervals = max(2, int(math.ceil((s2 - s1) / quad_step)))
    intervals += intervals % 2
    E = np.linspace(s1, s2, intervals + 1)
    z = E + 1j * eta
    f = np.imag(bilinear_forms(d, x, x, z) - trace_average(d, z)) / np.pi
    return float(integrate.simpson(f, x=E))


def window_representation(d: SpectralDecomposition, y: np.ndarray, s1: float, s2: float, eta: float) -> float:
    """sum_i (|y_i|^2 - 1/n) * smoothed_indicator(lambda_i): exact value of the contour integral."""
    w = np.abs(np.asarray(y)) ** 2 - 1.0 / d.n
    return float(np.sum(w * smoothed_indicator(d.eigenvalues, s1, s2, eta)))
