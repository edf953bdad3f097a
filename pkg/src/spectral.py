# src/spectral.py
"""
Spectral stage:
WignerMatrix -> decompose (dense eigh) -> randomize_phases -> overlaps y = U* x
-> process_path (partial sums of |y_i|^2 - 1/n) -> X_n(t), Y_n(s), window sums.

Every statistic downstream depends on y only through |y_i|^2, so the phase
convention never changes a path; randomize_phases exists to make U itself
Haar-like in the Gaussian case.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .ensembles import STREAM_PHASES, WignerMatrix, keyed_rng
from .errors import DecompositionError, DomainError
from . import semicircle

log = logging.getLogger(__name__)

# -------------------------
# Data
# -------------------------

@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray         # (n,) ascending
    eigenvectors: np.ndarray        # (n, n), column i is u_i as returned by eigh
    beta: int
    seed: Optional[int] = None      # seed of the sampled matrix, for diagnostics
    phases: Optional[np.ndarray] = None  # (n,) unit multipliers set by randomize_phases

    @property
    def n(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def randomized(self) -> bool:
        return self.phases is not None

    @property
    def phased_eigenvectors(self) -> np.ndarray:
        """U with column i multiplied by phases[i]; the raw eigenvectors when not randomized."""
        if self.phases is None:
            return self.eigenvectors
        return self.eigenvectors * self.phases[None, :]


@dataclass(frozen=True)
class ProcessPath:
    n: int
    beta: int
    partial_sums: np.ndarray        # (n + 1,), P_0 = 0, P_k = sqrt(beta n / 2) sum_{i<=k} (|y_i|^2 - 1/n)
    test_vector_id: str = ""

    def index(self, t: Union[float, np.ndarray]) -> Union[int, np.ndarray]:
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
            raise DomainError("process time must lie in [0, 1]")
        # round before floor so that t = k/n maps to k despite representation error
        k = np.floor(np.round(self.n * t_arr, 9)).astype(np.int64)
        return int(k) if k.ndim == 0 else k

    def value(self, t: float) -> float:
        return float(self.partial_sums[self.index(t)])

    def values(self, ts: Sequence[float]) -> np.ndarray:
        return self.partial_sums[self.index(np.asarray(ts, dtype=np.float64))]

    @property
    def max_jump(self) -> float:
        return float(np.max(np.abs(np.diff(self.partial_sums))))


@dataclass
class MultiplicityReport:
    max_multiplicity: int
    cluster_sizes: List[int]        # sizes of clusters with more than one eigenvalue

# -------------------------
# Decomposition
# -------------------------

def decompose(M: WignerMatrix) -> SpectralDecomposition:
    A = M.entries
    if not np.all(np.isfinite(A)):
        raise DecompositionError("matrix has non-finite entries", seed=M.seed, replica=M.replica)
    try:
        vals, vecs = scipy.linalg.eigh(A, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise DecompositionError(f"eigh failed: {e}", seed=M.seed, replica=M.replica) from e

    order = np.argsort(vals, kind="stable")
    return SpectralDecomposition(vals[order], vecs[:, order], M.beta, M.seed)


def randomize_phases(d: SpectralDecomposition, seed: int, replica: int = 0) -> SpectralDecomposition:
    """Attach an i.i.d. sign (beta=1) or uniform phase (beta=2) to each u_i.

    The phases are kept apart from the eigenvectors and only show up in
    ``phased_eigenvectors``; overlaps and every path built from them are
    bit-identical whatever the phase seed.
    """
    if d.randomized:
        raise DomainError("decomposition is already phase-randomized")
    rng = keyed_rng(seed, replica, STREAM_PHASES)
    if d.beta == 1:
        phases = (rng.integers(0, 2, size=d.n) * 2 - 1).astype(np.float64)
    else:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=d.n)
        phases = np.exp(1j * theta)
    return replace(d, phases=phases)


def reconstruction_error(M: WignerMatrix, d: SpectralDecomposition) -> float:
    """||M - U Lambda U*||_op / ||M||_op (absolute when M = 0)."""
    U = d.phased_eigenvectors
    R = M.entries - (U * d.eigenvalues[None, :]) @ U.conj().T
    err = float(np.linalg.norm(R, 2))
    scale = float(np.max(np.abs(d.eigenvalues))) if d.n else 0.0
    return err / scale if scale > 0 else err

# -------------------------
# Overlaps and processes
# -------------------------

def _check_unit(v: np.ndarray, tol: float, what: str) -> None:
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > tol:
        raise DomainError(f"{what} must be a unit vector, got norm {nrm!r}")


def overlaps(d: SpectralDecomposition, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or x.size != d.n:
        raise DomainError(f"test vector has shape {x.shape}, expected ({d.n},)")
    if d.beta == 1 and np.iscomplexobj(x) and np.any(np.imag(x) != 0):
        raise DomainError("beta=1 needs a real test vector")
    _check_unit(x, 1e-12, "test vector")
    # projection on the raw eigenvectors; phases never enter |y_i|^2
    return d.eigenvectors.conj().T @ x


def process_path(y: np.ndarray, beta: int, test_vector_id: str = "") -> ProcessPath:
    y = np.asarray(y)
    _check_unit(y, 1e-10, "overlap vector")
    n = y.size
    w = np.abs(y) ** 2 - 1.0 / n
    P = np.empty(n + 1, dtype=np.float64)
    P[0] = 0.0
    P[1:] = np.cumsum(w) * math.sqrt(beta * n / 2.0)
    return ProcessPath(n, beta, P, test_vector_id)


def energy_window_sum(d: SpectralDecomposition, y: np.ndarray, s1: float, s2: float, beta: int) -> float:
    """sqrt(beta n / 2) * sum_i (|y_i|^2 - 1/n) 1{s1 < lambda_i <= s2}."""
    if not s1 < s2:
        raise DomainError(f"window needs s1 < s2, got ({s1}, {s2})")
    lam = d.eigenvalues
    mask = (lam > s1) & (lam <= s2)
    if not np.any(mask):
        return 0.0
    w = np.abs(np.asarray(y)[mask]) ** 2 - 1.0 / d.n
    return float(math.sqrt(beta * d.n / 2.0) * np.sum(w))


def energy_process(d: SpectralDecomposition, y: np.ndarray, s_grid: Sequence[float], beta: int) -> np.ndarray:
    """Y_n(s) = sqrt(beta n / 2) sum_i (|y_i|^2 - 1/n) 1{lambda_i <= s} on a grid of energies."""
    P = process_path(y, beta).partial_sums
    k = np.searchsorted(d.eigenvalues, np.asarray(s_grid, dtype=np.float64), side="right")
    return P[k]


def empirical_cdf(d: SpectralDecomposition, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    out = np.searchsorted(d.eigenvalues, np.asarray(s, dtype=np.float64), side="right") / d.n
    return float(out) if np.ndim(out) == 0 else out


def semicircle_cdf_distance(d: SpectralDecomposition, u_max: float = 5.0) -> float:
    """sup_{|u| <= u_max} |F_n(u) - F_sc(u)|, exact over the jump points."""
    lam = d.eigenvalues
    pts = np.concatenate([[-u_max, u_max], lam[(lam >= -u_max) & (lam <= u_max)]])
    fsc = semicircle.cdf(pts)
    right = np.searchsorted(lam, pts, side="right") / d.n
    left = np.searchsorted(lam, pts, side="left") / d.n
    return float(max(np.max(np.abs(right - fsc)), np.max(np.abs(left - fsc))))


def time_change_gap(d: SpectralDecomposition, y: np.ndarray, beta: int) -> float:
    """sup_t |Y_n(F_sc^{-1}(t)) - X_n(t)| over every breakpoint of either step function."""
    path = process_path(y, beta)
    n = d.n
    lam = d.eigenvalues
    inside = lam[(lam >= -2.0) & (lam <= 2.0)]
    ts = np.unique(np.concatenate([np.arange(n + 1) / n, semicircle.cdf(inside)]))
    kx = path.index(ts)
    ky = np.searchsorted(lam, semicircle.quantile(ts), side="right")
    return float(np.max(np.abs(path.partial_sums[ky] - path.partial_sums[kx])))


def path_sup_bound(path: ProcessPath) -> Tuple[float, float, bool]:
    """Deterministic bound sup |X_n| <= 2 sqrt(n)."""
    sup = float(np.max(np.abs(path.partial_sums)))
    bound = 2.0 * math.sqrt(path.n)
    return sup, bound, sup <= bound

# -------------------------
# Diagnostics
# -------------------------

def multiplicity_audit(d: SpectralDecomposition, rel_tol: float = 1e-10) -> MultiplicityReport:
    lam = d.eigenvalues
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    gaps = np.diff(lam)
    sizes: List[int] = []
    run = 1
    for g in gaps:
        if g <= rel_tol * scale:
            run += 1
        else:
            if run > 1:
                sizes.append(run)
            run = 1
    if run > 1:
        sizes.append(run)
    report = MultiplicityReport(max(sizes) if sizes else 1, sizes)
    if report.max_multiplicity > 1:
        log.info("eigenvalue clusters found: max multiplicity %d (%d clusters)",
                 report.max_multiplicity, len(sizes))
    return report


def delocalization_bound_holds(path: ProcessPath, y: np.ndarray) -> bool:
    """Max jump of X_n never exceeds sqrt(beta n / 2) (max |y_i|^2 + 1/n)."""
    n = path.n
    bound = math.sqrt(path.beta * n / 2.0) * (float(np.max(np.abs(y) ** 2)) + 1.0 / n)
    return path.max_jump <= bound * (1.0 + 1e-12)
