# src/swap.py
"""
Lindeberg swap engine.

Sites (i <= j) are visited in a fixed order phi. State gamma holds ensemble-A
values on sites with phi <= gamma and ensemble-B values elsewhere, so
M^0 is a pure B sample and M^{n(n+1)/2} a pure A sample. Consecutive states
differ at one site pair (a, b)/(b, a).

Resolvents are carried across steps with an exact rank-2 (rank-1 on the
diagonal) capacitance update; the order-4 resolvent expansion is kept as a
diagnostic next to it.

Entry streams for A and B are independent keyed streams sharing the replica seed.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .ensembles import (
    STREAM_SWAP_A, STREAM_SWAP_B, WignerMatrix, WignerSpec, assemble,
    draw_site_values, keyed_rng,
)
from .errors import DomainError
from .resolvent import FULL_MATRIX, ResolventEval, contour_observable
from .semicircle import SpectralPoint

log = logging.getLogger(__name__)

# -------------------------
# Site ordering
# -------------------------

@dataclass(frozen=True)
class SiteOrdering:
    n: int
    order: np.ndarray           # order[gamma - 1] = row-major site index visited at step gamma

    @property
    def size(self) -> int:
        return self.n * (self.n + 1) // 2

    @staticmethod
    def row_major_index(n: int, i: int, j: int) -> int:
        """0-based row-major index of 0-based site (i, j), i <= j."""
        return i * n - i * (i - 1) // 2 + (j - i)

    def site(self, gamma: int) -> Tuple[int, int]:
        """phi^{-1}(gamma) as 1-based (i, j)."""
        if not 1 <= gamma <= self.size:
            raise DomainError(f"gamma must be in [1, {self.size}], got {gamma}")
        iu, ju = np.triu_indices(self.n)
        k = int(self.order[gamma - 1])
        return int(iu[k]) + 1, int(ju[k]) + 1

    def phi(self, i: int, j: int) -> int:
        """1-based step index of 1-based site (i, j), i <= j."""
        if not 1 <= i <= j <= self.n:
            raise DomainError(f"site needs 1 <= i <= j <= n, got ({i}, {j})")
        k = self.row_major_index(self.n, i - 1, j - 1)
        return int(self._inverse[k]) + 1

    @property
    def _inverse(self) -> np.ndarray:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.order.size)
        return inv


def make_ordering(n: int, permutation: Optional[Sequence[int]] = None) -> SiteOrdering:
    """Row-major bijection by default; a permutation of range(n(n+1)/2) reorders the visit."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    size = n * (n + 1) // 2
    if permutation is None:
        return SiteOrdering(n, np.arange(size))
    perm = np.asarray(permutation, dtype=np.int64)
    if perm.shape != (size,) or not np.array_equal(np.sort(perm), np.arange(size)):
        raise DomainError("ordering permutation must be a bijection of the site set")
    return SiteOrdering(n, perm)

# -------------------------
# Perturbations and resolvent update
# -------------------------

@dataclass(frozen=True)
class Rank2Perturbation:
    a: int                  # 0-based row
    b: int                  # 0-based column, a <= b
    v_ab: complex           # unscaled entry value; v_ba = conj(v_ab)
    n: int

    @property
    def is_diagonal(self) -> bool:
        return self.a == self.b

    def dense(self) -> np.ndarray:
        """n^{-1/2} V with V = (1 - delta_ab/2)(v_ab E^{ab} + v_ba E^{ba})."""
        V = np.zeros((self.n, self.n), dtype=np.complex128)
        s = 1.0 / math.sqrt(self.n)
        if self.is_diagonal:
            V[self.a, self.a] = complex(self.v_ab).real * s
        else:
            V[self.a, self.b] = self.v_ab * s
            V[self.b, self.a] = np.conj(self.v_ab) * s
        return V

    def low_rank(self) -> Tuple[List[int], np.ndarray]:
        """(index set, C) with n^{-1/2} V = U C U^T, U = columns of I at the index set."""
        s = 1.0 / math.sqrt(self.n)
        if self.is_diagonal:
            return [self.a], np.array([[complex(self.v_ab).real * s]], dtype=np.complex128)
        C = np.array([[0.0, self.v_ab * s], [np.conj(self.v_ab) * s, 0.0]], dtype=np.complex128)
        return [self.a, self.b], C


@dataclass
class UpdateResult:
    resolvent: ResolventEval            # exact S = (Q + n^{-1/2}V - z)^{-1}
    truncated: np.ndarray               # R + sum_{k=1}^{4} (-R n^{-1/2} V)^k R
    fallback: bool = False              # True when the capacitance was ill-conditioned

    @property
    def truncation_error(self) -> float:
        return float(np.max(np.abs(self.truncated - self.resolvent.G)))


def truncated_expansion(R: np.ndarray, pert: Rank2Perturbation, order: int = 4) -> np.ndarray:
    idx, C = pert.low_rank()
    RU = R[:, idx]
    T = R
    acc = R.copy()
    for _ in range(order):
        # (-R Delta) T = -R U C (U^T T)
        T = -(RU @ (C @ T[idx, :]))
        acc = acc + T
    return acc


def resolvent_update(
    R: ResolventEval,
    pert: Rank2Perturbation,
    base: Optional[WignerMatrix] = None,
    det_floor: float = 1e-12,
) -> UpdateResult:
    """
    Exact S for Q + n^{-1/2}V given R = (Q - z)^{-1}, via the small capacitance
    system K = I + (U^T R U) C:  S = R - R U C K^{-1} U^T R.
    Falls back to direct re-inversion of base + n^{-1/2}V when |det K| < det_floor.
    """
    if R.G is None:
        raise DomainError("resolvent_update needs a full-matrix resolvent")
    G = R.G
    n = G.shape[0]
    if pert.v_ab == 0:
        return UpdateResult(R, G.copy(), False)

    idx, C = pert.low_rank()
    K = np.eye(len(idx), dtype=np.complex128) + G[np.ix_(idx, idx)] @ C
    det = np.linalg.det(K)
    if abs(det) < det_floor:
        if base is None:
            raise DomainError("ill-conditioned capacitance and no base matrix for re-inversion")
        log.warning("capacitance |det| = %.3e below floor; re-inverting directly", abs(det))
        A = base.entries.astype(np.complex128) + pert.dense() - R.z.z * np.eye(n)
        S = scipy.linalg.inv(A, check_finite=False)
        fallback = True
    else:
        S = G - G[:, idx] @ (C @ np.linalg.solve(K, G[idx, :]))
        fallback = False

    trunc = truncated_expansion(G, pert)
    ev = ResolventEval(R.z, FULL_MATRIX, complex(np.trace(S) / n), S)
    return UpdateResult(ev, trunc, fallback)


def full_resolvent(M: WignerMatrix, z: SpectralPoint) -> ResolventEval:
    A = M.entries.astype(np.complex128) - z.z * np.eye(M.n)
    G = scipy.linalg.inv(A, check_finite=False)
    return ResolventEval(z, FULL_MATRIX, complex(np.trace(G) / M.n), G)

# -------------------------
# Observables
# -------------------------

@dataclass(frozen=True)
class ObservableSpec:
    kind: str                               # m_n | G_xx | contour
    z: complex = 1j                         # for m_n and G_xx
    part: str = "imag"                      # real | imag part of m_n / G_xx
    x: Optional[np.ndarray] = field(default=None, compare=False)   # test vector for G_xx / contour
    s1: float = -0.5
    s2: float = 0.5
    eta: float = 0.05
    quad_step: float = 0.00025

    def __post_init__(self):
        if self.kind not in ("m_n", "G_xx", "contour"):
            raise DomainError(f"unknown observable '{self.kind}'")
        if self.kind in ("G_xx", "contour") and self.x is None:
            raise DomainError(f"observable '{self.kind}' needs a test vector")
        if self.part not in ("real", "imag"):
            raise DomainError(f"part must be 'real' or 'imag', got '{self.part}'")

    @property
    def point(self) -> SpectralPoint:
        return SpectralPoint(self.z.real, self.z.imag)

    @property
    def resolvent_based(self) -> bool:
        return self.kind in ("m_n", "G_xx")

    def _take(self, c: complex) -> float:
        return float(c.imag if self.part == "imag" else c.real)

    def from_resolvent(self, ev: ResolventEval) -> float:
        if self.kind == "m_n":
            return self._take(ev.m_n)
        x = self.x
        return self._take(complex(np.vdot(x, ev.G @ x)))

    def evaluate(self, M: WignerMatrix) -> float:
        if self.kind == "contour":
            return contour_observable(M, self.x, self.s1, self.s2, self.eta, self.quad_step)
        return self.from_resolvent(full_resolvent(M, self.point))

# -------------------------
# Swap states
# -------------------------

@dataclass(frozen=True)
class SwapState:
    gamma: int
    ordering: SiteOrdering
    beta: int
    values_a: np.ndarray                    # unscaled site values of stream A, row-major
    values_b: np.ndarray                    # unscaled site values of stream B, row-major
    matrix: WignerMatrix

    @property
    def n(self) -> int:
        return self.ordering.n

    @property
    def final(self) -> int:
        return self.ordering.size


def _check_pair(spec_a: WignerSpec, spec_b: WignerSpec) -> None:
    if spec_a.n != spec_b.n or spec_a.beta != spec_b.beta:
        raise DomainError(
            f"swap needs matching (n, beta); got ({spec_a.n}, {spec_a.beta}) vs ({spec_b.n}, {spec_b.beta})"
        )


def stream_values(spec: WignerSpec, seed: int, replica: int, stream: int) -> np.ndarray:
    return draw_site_values(spec, keyed_rng(seed, replica, stream))


def initial_state(
    spec_a: WignerSpec,
    spec_b: WignerSpec,
    seed: int,
    replica: int = 0,
    ordering: Optional[SiteOrdering] = None,
) -> SwapState:
    _check_pair(spec_a, spec_b)
    n = spec_a.n
    ordering = ordering or make_ordering(n)
    if ordering.n != n:
        raise DomainError("ordering size does not match the matrix size")
    va = stream_values(spec_a, seed, replica, STREAM_SWAP_A)
    vb = stream_values(spec_b, seed, replica, STREAM_SWAP_B)
    M = WignerMatrix(n, spec_a.beta, assemble(n, spec_a.beta, vb), seed, replica)
    return SwapState(0, ordering, spec_a.beta, va, vb, M)


def state_at(state: SwapState, gamma: int) -> SwapState:
    """Jump to step gamma directly (A values on the first gamma sites in phi order)."""
    if not 0 <= gamma <= state.final:
        raise DomainError(f"gamma must be in [0, {state.final}], got {gamma}")
    vals = state.values_b.copy()
    taken = state.ordering.order[:gamma]
    vals[taken] = state.values_a[taken]
    M = replace(state.matrix, entries=assemble(state.n, state.beta, vals))
    return replace(state, gamma=gamma, matrix=M)


def _site_coords(state: SwapState, gamma: int) -> Tuple[int, int, int]:
    """(row-major site index, a, b) for step gamma, 0-based a <= b."""
    i, j = state.ordering.site(gamma)
    k = int(state.ordering.order[gamma - 1])
    return k, i - 1, j - 1


def swap_site(state: SwapState) -> SwapState:
    """Advance gamma by one, moving the next site from stream B to stream A."""
    if state.gamma >= state.final:
        raise DomainError("swap is already at its final step")
    gamma = state.gamma + 1
    k, a, b = _site_coords(state, gamma)

    # same arithmetic as assemble() so the final state is bit-identical to a pure A sample
    val = np.asarray([state.values_a[k]], dtype=state.matrix.entries.dtype) / math.sqrt(state.n)
    entries = state.matrix.entries.copy()
    if a == b:
        entries[a, a] = val[0].real
    else:
        entries[a, b] = val[0]
        entries[b, a] = np.conj(val[0])
    return replace(state, gamma=gamma, matrix=replace(state.matrix, entries=entries))


def step_perturbation(state: SwapState, gamma: int) -> Rank2Perturbation:
    """Difference M^gamma - M^{gamma-1} as a rank-2 perturbation (value v_A - v_B)."""
    k, a, b = _site_coords(state, gamma)
    return Rank2Perturbation(a, b, complex(state.values_a[k] - state.values_b[k]), state.n)


def one_step_difference(state: SwapState, observable: ObservableSpec) -> float:
    """
    observable(M^gamma) - observable(M^{gamma-1}) with everything but the swapped
    site shared (both matrices are Q plus one site value).
    """
    if state.gamma < 1:
        raise DomainError("one_step_difference needs gamma >= 1")
    k, a, b = _site_coords(state, state.gamma)
    if state.values_a[k] == state.values_b[k]:
        return 0.0
    prev = state_at(state, state.gamma - 1)
    if observable.resolvent_based:
        R = full_resolvent(prev.matrix, observable.point)
        upd = resolvent_update(R, step_perturbation(state, state.gamma), base=prev.matrix)
        return observable.from_resolvent(upd.resolvent) - observable.from_resolvent(R)
    return observable.evaluate(state.matrix) - observable.evaluate(prev.matrix)

# -------------------------
# Telescoping
# -------------------------

@dataclass
class StepRecord:
    gamma: int
    a: int          # 1-based
    b: int          # 1-based
    delta: float


@dataclass
class TelescopeReport:
    per_step: List[StepRecord]
    total: float                        # sum of steps (all) or n_sites * mean step (sample)
    endpoint_difference: float          # observable(pure A) - observable(pure B), computed directly
    full_coverage: bool
    fallbacks: int = 0

    @property
    def identity_error(self) -> float:
        return abs(self.total - self.endpoint_difference)


def telescoping_experiment(
    spec_a: WignerSpec,
    spec_b: WignerSpec,
    observable: ObservableSpec,
    sites: Union[str, int] = "all",
    seed: int = 0,
    replica: int = 0,
    ordering: Optional[SiteOrdering] = None,
    refresh_every: int = 256,
) -> TelescopeReport:
    """
    sites="all": walk every step, carrying the resolvent with exact rank-2 updates
    (refreshed by direct inversion every refresh_every steps).
    sites=k: k steps sampled uniformly without replacement; total is the
    unbiased estimate n_sites * mean(delta).
    """
    state = initial_state(spec_a, spec_b, seed, replica, ordering)
    final = state.final
    start_value = observable.evaluate(state.matrix)
    end_state = state_at(state, final)
    endpoint = observable.evaluate(end_state.matrix) - start_value

    records: List[StepRecord] = []
    fallbacks = 0

    if sites == "all":
        R = full_resolvent(state.matrix, observable.point) if observable.resolvent_based else None
        current = start_value
        for gamma in range(1, final + 1):
            nxt = swap_site(state)
            _, a, b = _site_coords(nxt, gamma)
            if R is not None:
                upd = resolvent_update(R, step_perturbation(nxt, gamma), base=state.matrix)
                fallbacks += int(upd.fallback)
                value = observable.from_resolvent(upd.resolvent)
                R = upd.resolvent
                if gamma % refresh_every == 0:
                    R = full_resolvent(nxt.matrix, observable.point)
            else:
                value = observable.evaluate(nxt.matrix)
            records.append(StepRecord(gamma, a + 1, b + 1, value - current))
            current = value
            state = nxt
        total = float(math.fsum(r.delta for r in records))
        return TelescopeReport(records, total, endpoint, True, fallbacks)

    k = int(sites)
    if not 1 <= k <= final:
        raise DomainError(f"site sample size must be in [1, {final}], got {k}")
    rng = keyed_rng(seed, replica, STREAM_SWAP_A, STREAM_SWAP_B)
    gammas = np.sort(rng.choice(final, size=k, replace=False) + 1)
    for gamma in gammas:
        st = state_at(state, int(gamma))
        _, a, b = _site_coords(st, int(gamma))
        records.append(StepRecord(int(gamma), a + 1, b + 1, one_step_difference(st, observable)))
    total = final * float(np.mean([r.delta for r in records]))
    return TelescopeReport(records, total, endpoint, False, fallbacks)


def endpoint_totals(
    spec_a: WignerSpec,
    spec_b: WignerSpec,
    observable: ObservableSpec,
    replicas: int,
    seed: int = 0,
) -> np.ndarray:
    """observable(pure A) - observable(pure B) per replica; equals the telescoped total exactly."""
    _check_pair(spec_a, spec_b)
    n, beta = spec_a.n, spec_a.beta
    out = np.empty(replicas)
    for r in range(replicas):
        A = WignerMatrix(n, beta, assemble(n, beta, stream_values(spec_a, seed, r, STREAM_SWAP_A)), seed, r)
        B = WignerMatrix(n, beta, assemble(n, beta, stream_values(spec_b, seed, r, STREAM_SWAP_B)), seed, r)
        out[r] = observable.evaluate(A) - observable.evaluate(B)
    return out
