# src/bridgestats.py
"""
Brownian-bridge reference laws and distributional statistics for path ensembles.

- bridge_covariance / empirical_covariance: the limit min(s,t) - st vs replicas
- ks_statistic / two_sample_ks: sorted-merge KS distances (+ p-values from scipy.stats)
- moment_functional / clt_covariance_target: W_n(u^r) and its Gaussian covariance limit
- increment_fourth_moment / scaling_exponent_fit: E(dX)^4 vs dt on log-log axes
- modulus_of_continuity: exact w(X_n, delta) of the step path
- sphere_centered_moment: exact mixed moments of |y_i|^2 - 1/n for uniform y on the sphere
"""

from __future__ import annotations
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy import special, stats

from . import semicircle
from .ensembles import STREAM_HAAR, haar_overlap_batch, keyed_rng
from .errors import DomainError
from .spectral import ProcessPath, SpectralDecomposition, overlaps

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))   # 0.1 .. 0.9

# -------------------------
# Data
# -------------------------

@dataclass
class PathEnsemble:
    n: int
    beta: int
    test_vector_id: str
    sums: np.ndarray                # (replicas, n + 1) partial sums P_k per replica
    grid: np.ndarray                # evaluation times, strictly increasing in [0, 1]

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 1 or np.any(self.grid < 0) or np.any(self.grid > 1):
            raise DomainError("grid must be a 1-d array of times in [0, 1]")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if self.sums.ndim != 2 or self.sums.shape[1] != self.n + 1:
            raise DomainError(f"sums must have shape (replicas, {self.n + 1})")

    @classmethod
    def from_paths(cls, paths: Sequence[ProcessPath], grid: Sequence[float] = DEFAULT_GRID) -> "PathEnsemble":
        if not paths:
            raise DomainError("empty path list")
        p0 = paths[0]
        for p in paths:
            if (p.n, p.beta, p.test_vector_id) != (p0.n, p0.beta, p0.test_vector_id):
                raise DomainError("all paths must share (n, beta, test vector)")
        sums = np.vstack([p.partial_sums for p in paths])
        return cls(p0.n, p0.beta, p0.test_vector_id, sums, np.asarray(grid, dtype=np.float64))

    @classmethod
    def from_overlaps(cls, ys: np.ndarray, beta: int, test_vector_id: str = "",
                      grid: Sequence[float] = DEFAULT_GRID) -> "PathEnsemble":
        """Vectorized construction from a (replicas, n) array of overlap vectors."""
        ys = np.atleast_2d(ys)
        n = ys.shape[1]
        w = np.abs(ys) ** 2 - 1.0 / n
        sums = np.zeros((ys.shape[0], n + 1))
        sums[:, 1:] = np.cumsum(w, axis=1) * math.sqrt(beta * n / 2.0)
        return cls(n, beta, test_vector_id, sums, np.asarray(grid, dtype=np.float64))

    @property
    def replicas(self) -> int:
        return int(self.sums.shape[0])

    @property
    def paths(self) -> List[ProcessPath]:
        return [ProcessPath(self.n, self.beta, s, self.test_vector_id) for s in self.sums]

    def index(self, t) -> np.ndarray:
        return ProcessPath(self.n, self.beta, self.sums[0], self.test_vector_id).index(t)

    def at(self, t: float) -> np.ndarray:
        """X_n(t) across replicas."""
        return self.sums[:, self.index(t)]

    @property
    def values(self) -> np.ndarray:
        """(replicas, grid) matrix of X_n(t_j)."""
        return self.sums[:, self.index(self.grid)]


@dataclass
class MomentEstimate:
    value: float
    std_error: float
    in_regime: bool = True

# -------------------------
# Bridge reference
# -------------------------

def _check_time(*ts: float) -> None:
    for t in ts:
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"time must lie in [0, 1], got {t}")


def bridge_covariance(s: float, t: float) -> float:
    _check_time(s, t)
    return min(s, t) - s * t


def bridge_covariance_matrix(grid: Sequence[float]) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    _check_time(*g)
    return np.minimum.outer(g, g) - np.outer(g, g)


def bridge_increment_fourth_moment(t1: float, t2: float) -> float:
    """E(W(t2) - W(t1))^4 = 3 (dt (1 - dt))^2 for the standard bridge."""
    _check_time(t1, t2)
    dt = abs(t2 - t1)
    return 3.0 * (dt * (1.0 - dt)) ** 2

# -------------------------
# Estimators
# -------------------------

def empirical_covariance(ens: PathEnsemble) -> np.ndarray:
    if ens.replicas < 2:
        raise DomainError("empirical covariance needs at least 2 replicas")
    return np.atleast_2d(np.cov(ens.values, rowvar=False, ddof=1))


def covariance_error(ens: PathEnsemble) -> float:
    """max |empirical - bridge| over grid pairs."""
    return float(np.max(np.abs(empirical_covariance(ens) - bridge_covariance_matrix(ens.grid))))


def variance_with_se(values: np.ndarray) -> MomentEstimate:
    """Sample variance and its standard error (fourth-moment based)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise DomainError("variance needs at least 2 values")
    c = v - v.mean()
    var = float(np.sum(c * c) / (v.size - 1))
    m4 = float(np.mean(c ** 4))
    se = math.sqrt(max(m4 - var * var, 0.0) / v.size)
    return MomentEstimate(var, se)


def covariance_with_se(a: np.ndarray, b: np.ndarray) -> MomentEstimate:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size != b.size or a.size < 2:
        raise DomainError("covariance needs two equal-length samples of size >= 2")
    prod = (a - a.mean()) * (b - b.mean())
    cov = float(np.sum(prod) / (a.size - 1))
    se = float(np.std(prod, ddof=1) / math.sqrt(a.size))
    return MomentEstimate(cov, se)

# -------------------------
# Kolmogorov-Smirnov
# -------------------------

MIN_KS_SAMPLES = 20


def ks_statistic(samples: Sequence[float], reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    x = np.sort(np.asarray(samples, dtype=np.float64))
    N = x.size
    if N < MIN_KS_SAMPLES:
        raise DomainError(f"KS needs at least {MIN_KS_SAMPLES} samples, got {N}")
    F = np.asarray(reference_cdf(x), dtype=np.float64)
    i = np.arange(1, N + 1)
    return float(max(np.max(i / N - F), np.max(F - (i - 1) / N)))


def two_sample_ks(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size < MIN_KS_SAMPLES or b.size < MIN_KS_SAMPLES:
        raise DomainError(f"two-sample KS needs at least {MIN_KS_SAMPLES} samples per side")
    merged = np.concatenate([a, b])
    fa = np.searchsorted(a, merged, side="right") / a.size
    fb = np.searchsorted(b, merged, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_pvalue(D: float, N: int) -> float:
    return float(stats.kstwo.sf(D, N))


def two_sample_ks_pvalue(D: float, n1: int, n2: int) -> float:
    en = n1 * n2 / (n1 + n2)
    return float(stats.kstwobign.sf(D * math.sqrt(en)))


def ks_critical(N: int, alpha: float = 0.01) -> float:
    """Asymptotic Kolmogorov critical value (1.63/sqrt(N) at alpha = 0.01)."""
    return float(stats.kstwobign.isf(alpha) / math.sqrt(N))

# -------------------------
# Moment functionals
# -------------------------

MAX_FUNCTIONAL_POWER = 8


def moment_functional(d: SpectralDecomposition, x: np.ndarray, r: int, beta: int) -> float:
    """W_n(u^r) = sqrt(beta n) (x* M^r x - (1/n) tr M^r), computed in the eigenbasis."""
    if not 0 <= r <= MAX_FUNCTIONAL_POWER:
        raise DomainError(f"power r must be in [0, {MAX_FUNCTIONAL_POWER}], got {r}")
    if r == 0:
        return 0.0
    y = overlaps(d, x)
    lam_r = d.eigenvalues ** r
    return float(math.sqrt(beta * d.n) * (np.sum(lam_r * np.abs(y) ** 2) - np.mean(lam_r)))


def clt_covariance_target(r1: int, r2: int) -> float:
    """2 (int u^{r1+r2} dF_sc - int u^{r1} dF_sc int u^{r2} dF_sc)."""
    if r1 < 0 or r2 < 0 or r1 + r2 > 16:
        raise DomainError(f"need r1, r2 >= 0 and r1 + r2 <= 16, got ({r1}, {r2})")
    m = semicircle.semicircle_moment
    return 2.0 * (m(r1 + r2) - m(r1) * m(r2))

# -------------------------
# Increments
# -------------------------

def increment_regime_floor(n: int, epsilon: float = 0.05) -> float:
    return n ** (-0.5 - epsilon)


def increment_fourth_moment(ens: PathEnsemble, t1: float, t2: float, epsilon: float = 0.05) -> MomentEstimate:
    """Monte Carlo E(X_n(t2) - X_n(t1))^4 with standard error; flags t2 - t1 < n^{-1/2-eps}."""
    _check_time(t1, t2)
    if t1 > t2:
        raise DomainError(f"need t1 <= t2, got ({t1}, {t2})")
    if t1 == t2:
        return MomentEstimate(0.0, 0.0, False)
    in_regime = (t2 - t1) >= increment_regime_floor(ens.n, epsilon)
    if not in_regime:
        log.warning("increment (%.4g, %.4g) is below the n^{-1/2-eps} regime; computed anyway", t1, t2)
    d4 = (ens.at(t2) - ens.at(t1)) ** 4
    se = float(np.std(d4, ddof=1) / math.sqrt(d4.size)) if d4.size > 1 else math.inf
    return MomentEstimate(float(np.mean(d4)), se, in_regime)


def energy_increment_fourth_moment(increments: Sequence[float], s1: float, s2: float) -> Tuple[MomentEstimate, float]:
    """E(Y_n(s2) - Y_n(s1))^4 from samples, next to the (s2 - s1)^2 comparison value."""
    if not s1 < s2:
        raise DomainError(f"need s1 < s2, got ({s1}, {s2})")
    d4 = np.asarray(increments, dtype=np.float64) ** 4
    se = float(np.std(d4, ddof=1) / math.sqrt(d4.size)) if d4.size > 1 else math.inf
    return MomentEstimate(float(np.mean(d4)), se), (s2 - s1) ** 2


def fit_loglog_slope(deltas: Sequence[float], moments: Sequence[float]) -> float:
    d = np.asarray(deltas, dtype=np.float64)
    m = np.asarray(moments, dtype=np.float64)
    if np.unique(d).size < 4:
        raise DomainError("slope fit needs at least 4 distinct dt values")
    if np.any(d <= 0) or np.any(m <= 0):
        raise DomainError("slope fit needs positive dt and moments")
    slope, _ = np.polyfit(np.log(d), np.log(m), 1)
    return float(slope)


def scaling_exponent_fit(ens: PathEnsemble, deltas: Sequence[float], center: float = 0.5,
                         epsilon: float = 0.05) -> Tuple[float, List[MomentEstimate]]:
    """Least-squares slope of log E(dX)^4 vs log dt for windows centred at `center`."""
    floor = increment_regime_floor(ens.n, epsilon)
    usable = [dt for dt in deltas if dt >= floor]
    if len(set(usable)) < 4:
        raise DomainError("need at least 4 distinct in-regime dt values")
    est = []
    for dt in usable:
        t1, t2 = center - dt / 2.0, center + dt / 2.0
        est.append(increment_fourth_moment(ens, t1, t2, epsilon))
    return fit_loglog_slope(usable, [e.value for e in est]), est

# -------------------------
# Modulus of continuity
# -------------------------

def modulus_of_continuity(path: ProcessPath, delta: float) -> float:
    """
    w(X_n, delta) = sup_{|t1 - t2| < delta} |X_n(t1) - X_n(t2)|.
    Index pairs reachable under |t1 - t2| < delta are exactly those with |k1 - k2| <= ceil(n delta).
    """
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must be in (0, 1], got {delta}")
    P = path.partial_sums
    n = path.n
    m = min(int(math.ceil(round(n * delta, 9))), n)
    padded = np.concatenate([P, np.full(m, P[-1])])
    windows = np.lib.stride_tricks.sliding_window_view(padded, m + 1)[: n + 1]
    return float(np.max(windows.max(axis=1) - windows.min(axis=1)))

# -------------------------
# Uniform-sphere oracles
# -------------------------

def sphere_centered_moment(n: int, powers: Sequence[int], beta: int = 1) -> float:
    """
    Exact E prod_j (|y_j|^2 - 1/n)^{k_j} for y uniform on the real (beta=1) or complex (beta=2) sphere.
    |y|^2 is Dirichlet(beta/2, ..., beta/2), so E prod u_j^{a_j} = prod poch(a, a_j) / poch(n a, sum a_j).
    """
    if beta not in (1, 2):
        raise DomainError(f"beta must be 1 or 2, got {beta}")
    if len(powers) > n:
        raise DomainError("more coordinates than the dimension")
    alpha = beta / 2.0
    c = 1.0 / n
    total = 0.0
    for picks in itertools.product(*[range(k + 1) for k in powers]):
        coef = 1.0
        for k, a in zip(powers, picks):
            coef *= math.comb(k, a) * (-c) ** (k - a)
        num = math.prod(special.poch(alpha, a) for a in picks)
        total += coef * num / special.poch(n * alpha, sum(picks))
    return float(total)


def sphere_quartic_moments(n: int, replicas: int, seed: int = 0, batch: int = 1_000_000) -> Tuple[MomentEstimate, MomentEstimate]:
    """
    Monte Carlo of E(u1-c)(u2-c)(u3-c)^2 and E prod_{j<=4}(u_j-c) on the real sphere, c = 1/n.
    Only four coordinates are drawn; the rest of ||g||^2 is a chi^2_{n-4} variable.
    """
    if n < 5:
        raise DomainError("quartic sphere moments need n >= 5")
    rng = keyed_rng(seed, STREAM_HAAR)
    c = 1.0 / n
    acc = np.zeros(2)
    acc2 = np.zeros(2)
    done = 0
    while done < replicas:
        b = min(batch, replicas - done)
        g = rng.standard_normal((b, 4))
        rest = rng.chisquare(n - 4, size=b)
        u = g ** 2 / (np.sum(g ** 2, axis=1) + rest)[:, None] - c
        s1 = u[:, 0] * u[:, 1] * u[:, 2] ** 2
        s2 = u[:, 0] * u[:, 1] * u[:, 2] * u[:, 3]
        for j, s in enumerate((s1, s2)):
            acc[j] += s.sum()
            acc2[j] += (s * s).sum()
        done += b
    mean = acc / replicas
    var = acc2 / replicas - mean ** 2
    se = np.sqrt(np.maximum(var, 0.0) / replicas)
    return MomentEstimate(float(mean[0]), float(se[0])), MomentEstimate(float(mean[1]), float(se[1]))


def haar_ensemble(n: int, beta: int, replicas: int, seed: int = 0,
                  grid: Sequence[float] = DEFAULT_GRID) -> PathEnsemble:
    """Exact Gaussian-case baseline: y uniform on the sphere, no matrix involved."""
    return PathEnsemble.from_overlaps(haar_overlap_batch(n, beta, replicas, seed), beta, "haar", grid)
