# src/ensembles.py
"""
Entry distributions and Wigner matrix sampling.

Pipeline:
EntryDistribution (declared mixed moments) -> WignerSpec (n, beta, off-diagonal/diagonal laws, seed)
-> sample_wigner (keyed RNG, row-major upper-triangle draws) -> WignerMatrix (entries / sqrt(n))

Notes:
- Complex entries are (X + iY) / sqrt(2) * scale with X, Y i.i.d. copies of the base law,
  so mixed moments factorize and can be declared exactly.
- Entry laws are bounded or Gaussian; no truncation is applied.
- All randomness goes through keyed_rng(seed, *key) so replicas are independent
  reproducible streams regardless of execution order.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DomainError

log = logging.getLogger(__name__)

# -------------------------
# Keyed RNG
# -------------------------

# stream tags used as the last component of a key
STREAM_ENTRIES = 0
STREAM_PHASES = 1
STREAM_VECTOR = 2
STREAM_HAAR = 3
STREAM_SWAP_A = 4
STREAM_SWAP_B = 5


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...). Same key -> same stream."""
    if seed < 0 or any(k < 0 for k in key):
        raise DomainError(f"seed and key components must be non-negative, got {seed}, {key}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))

# -------------------------
# Entry distributions
# -------------------------

KINDS = ("gaussian", "three_point_scaled", "custom_discrete")
MAX_ORDER = 4

_SQRT3 = math.sqrt(3.0)
_THREE_POINT_SUPPORT = (-_SQRT3, 0.0, _SQRT3)
_THREE_POINT_WEIGHTS = (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)


def _gaussian_moment(k: int) -> float:
    # E g^k for g ~ N(0,1): (k-1)!! for even k
    if k % 2:
        return 0.0
    return float(math.prod(range(k - 1, 0, -2))) if k > 0 else 1.0


@dataclass(frozen=True)
class EntryDistribution:
    kind: str                               # gaussian | three_point_scaled | custom_discrete
    scale: float = 1.0                      # multiplies the base law
    is_complex: bool = False                # (X + iY)/sqrt(2) * scale when True
    support: Tuple[float, ...] = ()         # base support for custom_discrete
    weights: Tuple[float, ...] = ()         # base weights for custom_discrete
    declared_moments: Dict[Tuple[int, int], float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown entry kind '{self.kind}', expected one of {KINDS}")
        if not (self.scale > 0):
            raise DomainError(f"scale must be positive, got {self.scale}")
        if self.kind == "custom_discrete":
            if len(self.support) == 0 or len(self.support) != len(self.weights):
                raise DomainError("custom_discrete needs matching non-empty support and weights")
            if any(w < 0 for w in self.weights):
                raise DomainError("discrete weights must be non-negative")
            if abs(math.fsum(self.weights) - 1.0) > 1e-15:
                raise DomainError(f"discrete weights must sum to 1, got {math.fsum(self.weights)!r}")
        if not self.declared_moments:
            object.__setattr__(self, "declared_moments", self._compute_moments())
        m10 = self.declared_moments.get((1, 0), 0.0)
        m01 = self.declared_moments.get((0, 1), 0.0)
        if abs(m10) > 1e-12 or abs(m01) > 1e-12:
            raise DomainError(f"entry law must be centred, got mean ({m10}, {m01})")

    # base law, before scale and complex split
    def base_support(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        if self.kind == "three_point_scaled":
            return _THREE_POINT_SUPPORT, _THREE_POINT_WEIGHTS
        return tuple(self.support), tuple(self.weights)

    def base_moment(self, k: int) -> float:
        if self.kind == "gaussian":
            return _gaussian_moment(k)
        sup, w = self.base_support()
        return math.fsum(wi * si ** k for si, wi in zip(sup, w))

    def _compute_moments(self) -> Dict[Tuple[int, int], float]:
        out: Dict[Tuple[int, int], float] = {}
        for order in range(MAX_ORDER + 1):
            for l in range(order + 1):
                m = order - l
                if self.is_complex:
                    c = (self.scale / math.sqrt(2.0)) ** order
                    out[(l, m)] = c * self.base_moment(l) * self.base_moment(m)
                else:
                    out[(l, m)] = self.scale ** l * self.base_moment(l) if m == 0 else 0.0
        return out

    @property
    def declared_order(self) -> int:
        return max(l + m for (l, m) in self.declared_moments) if self.declared_moments else -1

    @property
    def variance(self) -> float:
        return self.declared_moments[(2, 0)] + self.declared_moments[(0, 2)]

    def moment(self, l: int, m: int = 0) -> float:
        key = (l, m)
        if key not in self.declared_moments:
            raise DomainError(f"moment E[Re^{l} Im^{m}] is not declared")
        return self.declared_moments[key]

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.is_complex:
            re = self._sample_base(size, rng)
            im = self._sample_base(size, rng)
            return (re + 1j * im) * (self.scale / math.sqrt(2.0))
        return self._sample_base(size, rng) * self.scale

    def _sample_base(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        sup, w = self.base_support()
        idx = rng.choice(len(sup), size=size, p=np.asarray(w, dtype=np.float64))
        return np.asarray(sup, dtype=np.float64)[idx]

    def to_flat(self, prefix: str) -> Dict[str, object]:
        out: Dict[str, object] = {
            f"{prefix}.kind": self.kind,
            f"{prefix}.scale": self.scale,
            f"{prefix}.complex": self.is_complex,
        }
        if self.kind == "custom_discrete":
            out[f"{prefix}.support"] = list(self.support)
            out[f"{prefix}.weights"] = list(self.weights)
        return out

    @classmethod
    def from_flat(cls, flat: Dict[str, object], prefix: str) -> "EntryDistribution":
        kind = str(flat[f"{prefix}.kind"])
        return cls(
            kind=kind,
            scale=float(flat.get(f"{prefix}.scale", 1.0)),
            is_complex=bool(flat.get(f"{prefix}.complex", False)),
            support=tuple(float(v) for v in flat.get(f"{prefix}.support", ())),
            weights=tuple(float(v) for v in flat.get(f"{prefix}.weights", ())),
        )


def gaussian(scale: float = 1.0, is_complex: bool = False) -> EntryDistribution:
    return EntryDistribution(kind="gaussian", scale=scale, is_complex=is_complex)


def three_point(scale: float = 1.0, is_complex: bool = False) -> EntryDistribution:
    return EntryDistribution(kind="three_point_scaled", scale=scale, is_complex=is_complex)


def rademacher(scale: float = 1.0, is_complex: bool = False) -> EntryDistribution:
    return EntryDistribution(
        kind="custom_discrete", scale=scale, is_complex=is_complex,
        support=(-1.0, 1.0), weights=(0.5, 0.5),
    )

# -------------------------
# Specs and matrices
# -------------------------

@dataclass(frozen=True)
class WignerSpec:
    n: int
    beta: int                       # 1 real symmetric, 2 complex Hermitian
    offdiag: EntryDistribution
    diag: EntryDistribution
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"Wigner matrices need n >= 2, got {self.n}")
        if self.beta not in (1, 2):
            raise DomainError(f"beta must be 1 or 2, got {self.beta}")
        if self.beta == 1 and self.offdiag.is_complex:
            raise DomainError("beta=1 needs a real off-diagonal law")
        if self.diag.is_complex:
            raise DomainError("the diagonal law must be real (Hermitian diagonal)")
        if abs(self.offdiag.variance - 1.0) > 1e-12:
            raise DomainError(f"off-diagonal variance must be 1, got {self.offdiag.variance}")
        if self.seed < 0:
            raise DomainError(f"seed must be non-negative, got {self.seed}")

    @property
    def n_sites(self) -> int:
        return self.n * (self.n + 1) // 2

    def with_seed(self, seed: int) -> "WignerSpec":
        return WignerSpec(self.n, self.beta, self.offdiag, self.diag, seed, self.name)


@dataclass(frozen=True)
class WignerMatrix:
    n: int
    beta: int
    entries: np.ndarray             # (n, n) float64 or complex128, already scaled by 1/sqrt(n)
    seed: Optional[int] = None
    replica: Optional[int] = None


def goe_spec(n: int, seed: int = 0) -> WignerSpec:
    return WignerSpec(n, 1, gaussian(), gaussian(math.sqrt(2.0)), seed, "goe")


def gue_spec(n: int, seed: int = 0) -> WignerSpec:
    return WignerSpec(n, 2, gaussian(is_complex=True), gaussian(), seed, "gue")


def matched_real_spec(n: int, seed: int = 0) -> WignerSpec:
    return WignerSpec(n, 1, three_point(), three_point(math.sqrt(2.0)), seed, "matched_real")


def matched_complex_spec(n: int, seed: int = 0) -> WignerSpec:
    return WignerSpec(n, 2, three_point(is_complex=True), three_point(), seed, "matched_complex")


def rademacher_spec(n: int, seed: int = 0, beta: int = 1) -> WignerSpec:
    """Matches the Gaussian reference to order 2 only."""
    if beta == 1:
        return WignerSpec(n, 1, rademacher(), rademacher(math.sqrt(2.0)), seed, "rademacher_real")
    return WignerSpec(n, 2, rademacher(is_complex=True), rademacher(), seed, "rademacher_complex")


ENSEMBLES = {
    "goe": goe_spec,
    "gue": gue_spec,
    "matched_real": matched_real_spec,
    "matched_complex": matched_complex_spec,
    "rademacher_real": lambda n, seed=0: rademacher_spec(n, seed, beta=1),
    "rademacher_complex": lambda n, seed=0: rademacher_spec(n, seed, beta=2),
}


def spec_by_name(name: str, n: int, seed: int = 0) -> WignerSpec:
    try:
        factory = ENSEMBLES[name]
    except KeyError:
        raise DomainError(f"unknown ensemble '{name}', expected one of {sorted(ENSEMBLES)}") from None
    return factory(n, seed)


def spec_to_flat(spec: WignerSpec) -> Dict[str, object]:
    out: Dict[str, object] = {"n": spec.n, "beta": spec.beta, "seed": spec.seed, "name": spec.name}
    out.update(spec.offdiag.to_flat("offdiag"))
    out.update(spec.diag.to_flat("diag"))
    return out


def spec_from_flat(flat: Dict[str, object]) -> WignerSpec:
    try:
        return WignerSpec(
            n=int(flat["n"]),
            beta=int(flat["beta"]),
            offdiag=EntryDistribution.from_flat(flat, "offdiag"),
            diag=EntryDistribution.from_flat(flat, "diag"),
            seed=int(flat.get("seed", 0)),
            name=str(flat.get("name", "custom")),
        )
    except KeyError as e:
        raise DomainError(f"spec block is missing key {e}") from None

# -------------------------
# Moment matching
# -------------------------

@dataclass
class MomentMatchReport:
    max_abs_deviation: float
    per_moment: List[Tuple[int, int, float, float, float]]   # (l, m, a, b, |a - b|)


def validate_moment_match(a: EntryDistribution, b: EntryDistribution, k: int = 4) -> MomentMatchReport:
    """Compare declared mixed moments E[Re^l Im^m] for 0 <= l + m <= k (exact, not sampled)."""
    if not (0 <= k <= MAX_ORDER):
        raise DomainError(f"moment order must be in [0, {MAX_ORDER}], got {k}")
    if a.declared_order < k or b.declared_order < k:
        raise DomainError(f"both laws need declared moments through order {k}")
    rows = []
    for order in range(k + 1):
        for l in range(order + 1):
            m = order - l
            va, vb = a.moment(l, m), b.moment(l, m)
            rows.append((l, m, va, vb, abs(va - vb)))
    return MomentMatchReport(max(r[4] for r in rows), rows)


def clt_conditions(dist: EntryDistribution, tol: float = 1e-12) -> Dict[str, object]:
    """
    Moment conditions of the moment-functional CLT for an off-diagonal law:
    real: E v^3 = 0; complex: E v^2 = 0 and E v^2 conj(v) = 0; always E|v|^4 finite.
    """
    M = dist.declared_moments
    fourth = sum(math.comb(2, j) * M[(4 - 2 * j, 2 * j)] for j in range(3))   # E|v|^4
    out: Dict[str, object] = {"fourth_abs_moment": fourth}
    if not dist.is_complex:
        out["third_moment"] = M[(3, 0)]
        out["satisfied"] = abs(M[(3, 0)]) <= tol and math.isfinite(fourth)
        return out
    ev2 = complex(M[(2, 0)] - M[(0, 2)], 2.0 * M[(1, 1)])
    ev2vbar = complex(M[(3, 0)] + M[(1, 2)], M[(2, 1)] + M[(0, 3)])
    out["second_moment"] = ev2
    out["second_conj_moment"] = ev2vbar
    out["satisfied"] = abs(ev2) <= tol and abs(ev2vbar) <= tol and math.isfinite(fourth)
    return out


@dataclass
class MomentAuditRow:
    l: int
    m: int
    declared: float
    empirical: float
    std_error: float
    z: float


def sampled_moment_audit(dist: EntryDistribution, size: int = 1_000_000, seed: int = 0) -> List[MomentAuditRow]:
    v = dist.sample(size, keyed_rng(seed, STREAM_ENTRIES))
    re = np.real(v)
    im = np.imag(v) if dist.is_complex else np.zeros_like(re)
    rows: List[MomentAuditRow] = []
    for order in range(1, MAX_ORDER + 1):
        for l in range(order + 1):
            m = order - l
            prod = re ** l * im ** m
            emp = float(np.mean(prod))
            se = float(np.std(prod, ddof=1) / math.sqrt(size))
            decl = dist.moment(l, m)
            z = (emp - decl) / se if se > 0 else (0.0 if emp == decl else math.inf)
            rows.append(MomentAuditRow(l, m, decl, emp, se, z))
    return rows

# -------------------------
# Sampling
# -------------------------

def site_is_diagonal(n: int) -> np.ndarray:
    iu, ju = np.triu_indices(n)
    return iu == ju


def draw_site_values(spec: WignerSpec, rng: np.random.Generator) -> np.ndarray:
    """Unscaled v_ij for all sites i <= j in row-major order."""
    n = spec.n
    diag_mask = site_is_diagonal(n)
    dtype = np.complex128 if spec.beta == 2 else np.float64
    vals = np.empty(spec.n_sites, dtype=dtype)
    vals[~diag_mask] = spec.offdiag.sample(n * (n - 1) // 2, rng)
    vals[diag_mask] = spec.diag.sample(n, rng)
    return vals


def assemble(n: int, beta: int, site_values: np.ndarray) -> np.ndarray:
    """Place row-major upper-triangle values (unscaled) into a bit-exact symmetric/Hermitian matrix."""
    dtype = np.complex128 if beta == 2 else np.float64
    scaled = np.asarray(site_values, dtype=dtype) / math.sqrt(n)
    iu, ju = np.triu_indices(n)
    diag = iu == ju
    if beta == 2:
        scaled[diag] = scaled[diag].real
    M = np.zeros((n, n), dtype=dtype)
    M[iu, ju] = scaled
    M[ju[~diag], iu[~diag]] = np.conj(scaled[~diag])
    return M


def sample_wigner(spec: WignerSpec, replica: int = 0, stream: int = STREAM_ENTRIES) -> WignerMatrix:
    rng = keyed_rng(spec.seed, replica, stream)
    vals = draw_site_values(spec, rng)
    return WignerMatrix(spec.n, spec.beta, assemble(spec.n, spec.beta, vals), spec.seed, replica)


def haar_overlap(n: int, beta: int, seed: int = 0, replica: int = 0) -> np.ndarray:
    """Uniform point on S^{n-1} (beta=1) or S^{2n-1} (beta=2) via a normalized Gaussian vector."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if beta not in (1, 2):
        raise DomainError(f"beta must be 1 or 2, got {beta}")
    rng = keyed_rng(seed, replica, STREAM_HAAR)
    if beta == 1:
        g = rng.standard_normal(n)
    else:
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    return g / np.linalg.norm(g)


def haar_overlap_batch(n: int, beta: int, replicas: int, seed: int = 0) -> np.ndarray:
    """replicas x n matrix of independent Haar overlap vectors from one stream (fast path for baselines)."""
    rng = keyed_rng(seed, STREAM_HAAR)
    if beta == 1:
        g = rng.standard_normal((replicas, n))
    else:
        g = (rng.standard_normal((replicas, n)) + 1j * rng.standard_normal((replicas, n))) / math.sqrt(2.0)
    return g / np.linalg.norm(g, axis=1, keepdims=True)
