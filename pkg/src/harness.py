# src/harness.py
"""
Experiment orchestration.

ExperimentConfig (flat dotted key = value text, or JSON) -> run() -> RunReport.
Replicas are mapped through joblib and collected in replica order; every
aggregate is computed single-threaded afterwards, so a report depends only on
(config, master seed).

Experiments:
  bridge        X_n(t) vs the Brownian bridge (variance, covariance grid, KS)
  universality  ensemble A vs ensemble B on X_n(1/2) and the covariance grid
  locallaw      averaged/isotropic local laws, delocalization, rigidity frequencies
  rigidity      rigidity, eigenvalue counting, distance to F_sc
  window        energy-window sum vs its contour-integral representation
  swap          rank-2 update accuracy, telescoping identity, moment sensitivity
  clt           Var/Cov of the moment functionals W_n(u^r)
  increments    E(dX)^4 scaling exponent and bridge values
  necessity     x = e_1, where the fourth moment of the entries shows up
"""

from __future__ import annotations
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import stats
from tqdm import tqdm

from . import bridgestats, resolvent, semicircle, spectral, storage, swap
from .ensembles import (
    ENSEMBLES, STREAM_ENTRIES, STREAM_SWAP_B, WignerSpec, clt_conditions, keyed_rng,
    rademacher_spec, sample_wigner, spec_by_name,
)
from .errors import ConfigError, DecompositionError, DomainError, WignerBridgeError
from .vectors import PRESETS, make_test_vector

log = logging.getLogger(__name__)

EXPERIMENTS = ("bridge", "universality", "locallaw", "rigidity", "window",
               "swap", "clt", "increments", "necessity")

INSUFFICIENT = "insufficient replicas"
ZERO_SE = "zero standard error"
NO_REPLICAS = "every replica was flagged"

# -------------------------
# Configuration
# -------------------------

@dataclass
class Thresholds:
    freq_floor: float = 0.99                    # replica frequency a local-law bound must reach
    local_law_ratio: float = 10.0               # |residual| / Psi
    delocalization_log_power: float = 3.0       # n max|<u_i,v>|^2 <= (log n)^p
    rigidity_log_power: float = 2.0             # scaled deviation <= (log n)^p
    variance_tol: float = 0.03                  # |Var X_n(1/2) - 1/4|
    covariance_tol: float = 0.05                # max grid-pair covariance error
    ks_normal: float = 0.05                     # KS of X_n(1/2)/sqrt(1/4) vs N(0,1)
    ks_two_sample: float = 0.06                 # A vs B two-sample KS
    window_gap: float = 0.1                     # mean |sharp - smoothed| window sum
    identity_tol: float = 1e-8                  # contour quadrature vs eigen-expansion
    update_tol: float = 1e-8                    # rank-2 update and telescoping identity
    exponent_floor: float = 4.0 / 3.0 - 0.15    # fitted E(dX)^4 slope
    increment_rel_tol: float = 0.25             # E(dX)^4 at dt = 1/4 vs 3(dt(1-dt))^2
    clt_var_tol: float = 0.2                    # |Var W_n(u^r) - 2|
    clt_cov_z: float = 3.0                      # Cov(W(u), W(u^3)) vs 4 in standard errors
    necessity_z: float = 5.0                    # x = e_1 separation in standard errors
    failure_budget: float = 0.001               # tolerated fraction of flagged replicas


@dataclass
class ExperimentConfig:
    experiment: str = "bridge"                  # one of EXPERIMENTS
    ensemble_a: str = field(default="goe", metadata={"key": "ensemble.a"})
    ensemble_b: str = field(default="", metadata={"key": "ensemble.b"})
    n: int = 400
    replicas: int = 2000
    test_vector: str = "uniform"
    grid: Tuple[float, ...] = bridgestats.DEFAULT_GRID
    epsilon: float = 0.05
    master_seed: int = field(default=0, metadata={"key": "seed"})
    out_dir: str = field(default="", metadata={"key": "out"})
    n_jobs: int = field(default=-1, metadata={"key": "jobs"})

    eta_power: float = field(default=0.6, metadata={"key": "locallaw.eta_power"})          # eta = n^{-p}
    energy_points: int = field(default=41, metadata={"key": "locallaw.energy_points"})     # grid on [-2.5, 2.5]
    eta_min: float = field(default=0.0, metadata={"key": "locallaw.eta_min"})              # 0 means 1/n
    count_window: Tuple[float, ...] = field(default=(-0.5, 0.5), metadata={"key": "rigidity.interval"})

    window: Tuple[float, ...] = field(default=(-0.5, 0.5), metadata={"key": "window.interval"})
    quad_divisor: float = field(default=200.0, metadata={"key": "window.quad_divisor"})    # step = eta / divisor

    deltas: Tuple[float, ...] = field(default=(0.05, 0.1, 0.2, 0.3, 0.4), metadata={"key": "increments.deltas"})
    modulus_delta: float = field(default=0.1, metadata={"key": "increments.modulus_delta"})

    swap_n: int = field(default=50, metadata={"key": "swap.n"})
    swap_cases: int = field(default=100, metadata={"key": "swap.cases"})
    telescope_n: int = field(default=10, metadata={"key": "swap.telescope_n"})
    swap_z: float = field(default=1.0, metadata={"key": "swap.eta"})                       # observable at z = i eta

    thresholds: Thresholds = field(default_factory=Thresholds)

    # -- flat form --

    @staticmethod
    def _key(f) -> str:
        return f.metadata.get("key", f.name)

    def to_flat(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for f in fields(self):
            if f.name == "thresholds":
                continue
            v = getattr(self, f.name)
            out[self._key(f)] = list(v) if isinstance(v, tuple) else v
        for f in fields(self.thresholds):
            out[f"thresholds.{f.name}"] = getattr(self.thresholds, f.name)
        return out

    @classmethod
    def from_flat(cls, flat: Dict[str, Any]) -> "ExperimentConfig":
        by_key = {cls._key(f): f for f in fields(cls) if f.name != "thresholds"}
        th_fields = {f"thresholds.{f.name}": f for f in fields(Thresholds)}
        base, th = cls(), Thresholds()
        kwargs: Dict[str, Any] = {}
        th_kwargs: Dict[str, Any] = {}
        for key, raw in flat.items():
            if key in by_key:
                f = by_key[key]
                kwargs[f.name] = _coerce(key, raw, getattr(base, f.name))
            elif key in th_fields:
                f = th_fields[key]
                th_kwargs[f.name] = _coerce(key, raw, getattr(th, f.name))
            else:
                raise ConfigError(f"unknown config key '{key}'")
        cfg = cls(**kwargs, thresholds=Thresholds(**th_kwargs))
        cfg.validate()
        return cfg

    def config_hash(self) -> str:
        return storage.sha256_bytes(json.dumps(self.to_flat(), sort_keys=True).encode("utf-8"))

    # -- checks --

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got '{self.experiment}'")
        for key, name in (("ensemble.a", self.ensemble_a), ("ensemble.b", self.ensemble_b)):
            if name and name not in ENSEMBLES:
                raise ConfigError(f"{key} = '{name}' is not one of {sorted(ENSEMBLES)}")
        if not self.ensemble_a:
            raise ConfigError("ensemble.a is required")
        if self.experiment in ("universality", "swap") and not self.ensemble_b:
            raise ConfigError(f"experiment '{self.experiment}' needs ensemble.b")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")
        if self.master_seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.test_vector not in PRESETS:
            raise ConfigError(f"test_vector must be one of {PRESETS}, got '{self.test_vector}'")
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon must be in (0, 1/2), got {self.epsilon}")
        g = np.asarray(self.grid, dtype=np.float64)
        if g.size < 1 or np.any(g <= 0) or np.any(g >= 1) or np.any(np.diff(g) <= 0):
            raise ConfigError("grid must be strictly increasing inside (0, 1)")
        for key, pair in (("rigidity.interval", self.count_window), ("window.interval", self.window)):
            if len(pair) != 2 or not pair[0] < pair[1]:
                raise ConfigError(f"{key} must be two increasing numbers, got {pair}")
        if self.quad_divisor < 10:
            raise ConfigError("window.quad_divisor must be >= 10 (step <= eta/10)")
        if len(set(self.deltas)) < 4 or any(not 0 < d < 1 for d in self.deltas):
            raise ConfigError("increments.deltas needs at least 4 distinct values in (0, 1)")
        if self.energy_points < 2 or self.swap_cases < 1 or self.swap_n < 2 or self.telescope_n < 2:
            raise ConfigError("locallaw.energy_points, swap.cases, swap.n and swap.telescope_n must be >= 2 (cases >= 1)")
        if not self.swap_z > 0 or self.eta_power <= 0 or self.eta_min < 0:
            raise ConfigError("swap.eta and locallaw.eta_power must be positive, locallaw.eta_min non-negative")
        for f in fields(self.thresholds):
            v = getattr(self.thresholds, f.name)
            if not v > 0:
                raise ConfigError(f"thresholds.{f.name} must be positive, got {v}")
        if self.thresholds.freq_floor > 1:
            raise ConfigError("thresholds.freq_floor must be <= 1")
        if self.ensemble_b:
            a, b = spec_by_name(self.ensemble_a, 2), spec_by_name(self.ensemble_b, 2)
            if a.beta != b.beta:
                raise ConfigError(f"ensembles '{self.ensemble_a}' and '{self.ensemble_b}' differ in beta")


def _coerce(key: str, raw: Any, default: Any) -> Any:
    try:
        if isinstance(default, tuple):
            items = raw if isinstance(raw, (list, tuple)) else [s for s in str(raw).split(",") if s.strip()]
            return tuple(float(v) for v in items)
        if isinstance(default, bool):
            return raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(f"{raw} is not an integer")
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for '{key}': {raw!r} ({e})") from None


def parse_config_text(text: str) -> Dict[str, str]:
    flat: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line}'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        flat[key] = value
    return flat


def load_config(path: Path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if path.suffix == ".json":
        try:
            flat = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
        if not isinstance(flat, dict):
            raise ConfigError(f"{path}: expected a flat JSON object")
    else:
        flat = parse_config_text(text)
    flat.update(overrides or {})
    return ExperimentConfig.from_flat(flat)


def _format_value(v: Any) -> str:
    if isinstance(v, list):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_config(config: ExperimentConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = config.to_flat()
    if path.suffix == ".json":
        path.write_text(storage.canonical_json(flat), encoding="utf-8")
    else:
        lines = [f"# experiment config, hash {config.config_hash()}"]
        lines += [f"{k} = {_format_value(v)}" for k, v in flat.items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path

# -------------------------
# Report
# -------------------------

@dataclass
class StatResult:
    name: str
    value: float
    threshold: Optional[float] = None
    comparison: str = "<="                     # value <= threshold, or >=
    passed: Optional[bool] = None               # None: informational or skipped
    note: str = ""


@dataclass
class RunReport:
    config: Dict[str, Any]
    config_hash: str
    results: List[StatResult]
    seed_log: List[Tuple[int, int]]
    flagged: List[Tuple[str, int]]              # (stage, replica)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.results)

    def result(self, name: str) -> StatResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        """JSON form, without wall-clock."""
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "results": [asdict(r) for r in self.results],
            "seed_log": [list(s) for s in self.seed_log],
            "flagged": [list(f) for f in self.flagged],
            "passed": self.passed,
        }


def _check(name: str, value: float, threshold: float, comparison: str = "<=", note: str = "") -> StatResult:
    value = float(value)
    ok = value <= threshold if comparison == "<=" else value >= threshold
    return StatResult(name, value, float(threshold), comparison, bool(ok), note)


def _info(name: str, value: float, note: str = "") -> StatResult:
    return StatResult(name, float(value), None, "", None, note)


def _skipped(name: str) -> StatResult:
    return StatResult(name, float("nan"), None, "", None, INSUFFICIENT)


def _degenerate(name: str, threshold: float, comparison: str = "<=") -> StatResult:
    """A thresholded statistic whose standard error is zero cannot pass."""
    return StatResult(name, float("nan"), float(threshold), comparison, False, ZERO_SE)


class _StageEmpty(WignerBridgeError):
    def __init__(self, stage: str):
        super().__init__(f"every replica of stage '{stage}' was flagged")
        self.stage = stage

# -------------------------
# Replica workers (module level so joblib can pickle them)
# -------------------------

def _path_replica(spec: WignerSpec, x: np.ndarray, replica: int, stream: int,
                  window: Tuple[float, float]) -> Optional[Tuple[np.ndarray, float, float, float]]:
    """(P_k, window sum, W_n(u^2), semicircle CDF distance) for one replica; None if flagged."""
    M = sample_wigner(spec, replica, stream)
    try:
        d = spectral.randomize_phases(spectral.decompose(M), spec.seed, replica)
    except DecompositionError as e:
        log.warning("replica %d flagged: %s", replica, e)
        return None
    y = spectral.overlaps(d, x)
    path = spectral.process_path(y, spec.beta)
    wsum = spectral.energy_window_sum(d, y, window[0], window[1], spec.beta)
    w2 = bridgestats.moment_functional(d, x, 2, spec.beta)
    return path.partial_sums, wsum, w2, spectral.semicircle_cdf_distance(d)


def _clt_replica(spec: WignerSpec, x: np.ndarray, replica: int) -> Optional[np.ndarray]:
    M = sample_wigner(spec, replica)
    try:
        d = spectral.decompose(M)
    except DecompositionError as e:
        log.warning("replica %d flagged: %s", replica, e)
        return None
    return np.array([bridgestats.moment_functional(d, x, r, spec.beta) for r in (1, 2, 3)])


def _locallaw_replica(spec: WignerSpec, vectors: Sequence[np.ndarray], replica: int,
                      energies: np.ndarray, eta: float, eta_min: float) -> Optional[Dict[str, float]]:
    M = sample_wigner(spec, replica)
    try:
        d = spectral.decompose(M)
    except DecompositionError as e:
        log.warning("replica %d flagged: %s", replica, e)
        return None
    domain = semicircle.SpectralDomain(eta_min=eta_min)
    _, avg_ratio = resolvent.averaged_local_law(d, energies, eta)
    out = {"averaged": avg_ratio}
    for j, v in enumerate(vectors):
        ratios = [resolvent.local_law_residual(M, semicircle.SpectralPoint(float(E), eta), v, v, domain, d).ratio
                  for E in energies]
        out[f"isotropic_{j}"] = max(ratios)
        out[f"delocalization_{j}"] = resolvent.delocalization_stat(d, v)
    out["rigidity"] = resolvent.rigidity_report(d).max_scaled_deviation
    return out


def _rigidity_replica(spec: WignerSpec, replica: int, interval: Tuple[float, float],
                      c: float) -> Optional[Tuple[float, float, int, float]]:
    M = sample_wigner(spec, replica)
    try:
        d = spectral.decompose(M)
    except DecompositionError as e:
        log.warning("replica %d flagged: %s", replica, e)
        return None
    cr = resolvent.counting_report(d, interval, c)
    return (resolvent.rigidity_report(d).max_scaled_deviation, spectral.semicircle_cdf_distance(d),
            cr.count, float(spectral.multiplicity_audit(d).max_multiplicity))


def _window_replica(spec: WignerSpec, x: np.ndarray, replica: int, s1: float, s2: float,
                    eta: float, quad_step: float) -> Optional[Tuple[float, float]]:
    """(|sharp - smoothed| in process units, |quadrature - eigen-expansion| raw)."""
    M = sample_wigner(spec, replica)
    try:
        d = spectral.decompose(M)
    except DecompositionError as e:
        log.warning("replica %d flagged: %s", replica, e)
        return None
    y = spectral.overlaps(d, x)
    scale = math.sqrt(spec.beta * spec.n / 2.0)
    sharp = spectral.energy_window_sum(d, y, s1, s2, spec.beta)
    contour = resolvent.contour_observable(M, x, s1, s2, eta, quad_step, d=d)
    exact = resolvent.window_representation(d, y, s1, s2, eta)
    return abs(sharp - scale * contour), abs(contour - exact)


def _update_case(spec: WignerSpec, case: int) -> float:
    """Max entry error of the rank-2 update against re-inversion on one random case."""
    M = sample_wigner(spec, case)
    rng = keyed_rng(spec.seed, case, STREAM_SWAP_B, STREAM_ENTRIES)
    a, b = sorted(int(v) for v in rng.integers(0, spec.n, size=2))
    val = spec.diag.sample(1, rng)[0] if a == b else spec.offdiag.sample(1, rng)[0]
    z = semicircle.SpectralPoint(float(rng.uniform(-2.5, 2.5)), float(rng.uniform(0.05, 1.0)))
    pert = swap.Rank2Perturbation(a, b, complex(val), spec.n)
    R = swap.full_resolvent(M, z)
    upd = swap.resolvent_update(R, pert, base=M)
    direct = resolvent.green(replace(M, entries=M.entries + pert.dense()), z)
    return float(np.max(np.abs(upd.resolvent.G - direct.G)))


def _map_replicas(fn: Callable, arg_list: List[tuple], n_jobs: int, progress: bool, desc: str) -> List[Any]:
    it = tqdm(arg_list, desc=desc, disable=not progress, file=sys.stderr)
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for args in it)

# -------------------------
# Experiments
# -------------------------

@dataclass
class _Ctx:
    config: ExperimentConfig
    progress: bool
    results: List[StatResult] = field(default_factory=list)
    flagged: List[Tuple[str, int]] = field(default_factory=list)
    ensembles: Dict[str, bridgestats.PathEnsemble] = field(default_factory=dict)
    attempted: int = 0

    @property
    def th(self) -> Thresholds:
        return self.config.thresholds

    def spec(self, name: str, n: Optional[int] = None) -> WignerSpec:
        return spec_by_name(name, n or self.config.n, self.config.master_seed)

    def vector(self, beta: int, preset: Optional[str] = None) -> Tuple[np.ndarray, str]:
        return make_test_vector(preset or self.config.test_vector, self.config.n, beta, self.config.master_seed)

    def map(self, fn: Callable, arg_list: List[tuple], stage: str) -> List[Any]:
        """Run one stage over its replicas; the replica index of arg_list[r] is r."""
        out = _map_replicas(fn, arg_list, self.config.n_jobs, self.progress, stage)
        self.attempted += len(out)
        for r, res in enumerate(out):
            if res is None:
                self.flagged.append((stage, r))
        return out

    def kept(self, fn: Callable, arg_list: List[tuple], stage: str) -> List[Any]:
        """map() without the flagged replicas; raises _StageEmpty when none survive."""
        kept = [r for r in self.map(fn, arg_list, stage) if r is not None]
        if not kept:
            raise _StageEmpty(stage)
        return kept


def _collect_paths(ctx: _Ctx, spec: WignerSpec, x: np.ndarray, vid: str, stream: int, label: str):
    cfg = ctx.config
    kept = ctx.kept(_path_replica, [(spec, x, r, stream, cfg.window) for r in range(cfg.replicas)], label)
    sums = np.vstack([r[0] for r in kept])
    ens = bridgestats.PathEnsemble(spec.n, spec.beta, vid, sums, np.asarray(cfg.grid))
    ctx.ensembles[label] = ens
    extras = np.array([[r[1], r[2], r[3]] for r in kept])
    return ens, extras


def _bridge_stats(ctx: _Ctx, ens: bridgestats.PathEnsemble, prefix: str = "") -> None:
    th = ctx.th
    R = ens.replicas
    half = ens.at(0.5)
    sup = max(spectral.path_sup_bound(p)[0] for p in ens.paths[: min(R, 50)])
    ctx.results.append(_info(f"{prefix}sup_abs_path", sup, "first 50 replicas; bound 2 sqrt(n)"))
    if R < 2:
        for name in ("var_half_error", "covariance_max_error", "ks_normal"):
            ctx.results.append(_skipped(prefix + name))
        return
    var = bridgestats.variance_with_se(half)
    ctx.results.append(_check(f"{prefix}var_half_error", abs(var.value - 0.25), th.variance_tol))
    ctx.results.append(_info(f"{prefix}var_half_se", var.std_error))
    ctx.results.append(_check(f"{prefix}covariance_max_error", bridgestats.covariance_error(ens), th.covariance_tol))
    lo, hi = ens.at(0.25), ens.at(0.75)
    sym = bridgestats.variance_with_se(lo).value - bridgestats.variance_with_se(hi).value
    ctx.results.append(_info(f"{prefix}var_symmetry_gap", sym, "Var X(1/4) - Var X(3/4)"))
    if R < bridgestats.MIN_KS_SAMPLES:
        ctx.results.append(_skipped(prefix + "ks_normal"))
        return
    D = bridgestats.ks_statistic(half / 0.5, stats.norm.cdf)
    ctx.results.append(_check(f"{prefix}ks_normal", D, th.ks_normal))
    ctx.results.append(_info(f"{prefix}ks_normal_pvalue", bridgestats.ks_pvalue(D, R)))


def _exp_bridge(ctx: _Ctx) -> None:
    spec = ctx.spec(ctx.config.ensemble_a)
    x, vid = ctx.vector(spec.beta)
    ens, extras = _collect_paths(ctx, spec, x, vid, STREAM_ENTRIES, "a")
    _bridge_stats(ctx, ens)
    ctx.results.append(_info("semicircle_cdf_distance_mean", float(np.mean(extras[:, 2]))))


def _exp_universality(ctx: _Ctx) -> None:
    cfg = ctx.config
    spec_a, spec_b = ctx.spec(cfg.ensemble_a), ctx.spec(cfg.ensemble_b)
    x, vid = ctx.vector(spec_a.beta)
    ens_a, _ = _collect_paths(ctx, spec_a, x, vid, STREAM_ENTRIES, "a")
    ens_b, _ = _collect_paths(ctx, spec_b, x, vid, STREAM_SWAP_B, "b")
    _bridge_stats(ctx, ens_a, "a_")
    _bridge_stats(ctx, ens_b, "b_")
    if min(ens_a.replicas, ens_b.replicas) < bridgestats.MIN_KS_SAMPLES:
        ctx.results.append(_skipped("ks_two_sample"))
        return
    D = bridgestats.two_sample_ks(ens_a.at(0.5), ens_b.at(0.5))
    ctx.results.append(_check("ks_two_sample", D, ctx.th.ks_two_sample))
    ctx.results.append(_info("ks_two_sample_pvalue",
                             bridgestats.two_sample_ks_pvalue(D, ens_a.replicas, ens_b.replicas)))
    if min(ens_a.replicas, ens_b.replicas) >= 2:
        gap = np.max(np.abs(bridgestats.empirical_covariance(ens_a) - bridgestats.empirical_covariance(ens_b)))
        ctx.results.append(_info("covariance_ab_max_gap", float(gap)))


def _frequency(ctx: _Ctx, name: str, values: np.ndarray, bound: float) -> None:
    freq = float(np.mean(values <= bound))
    ctx.results.append(_check(f"freq_{name}", freq, ctx.th.freq_floor, ">=", f"bound {bound:.6g}"))
    ctx.results.append(_info(f"max_{name}", float(np.max(values))))


def _exp_locallaw(ctx: _Ctx) -> None:
    cfg, th = ctx.config, ctx.th
    spec = ctx.spec(cfg.ensemble_a)
    n = spec.n
    eta = n ** -cfg.eta_power
    eta_min = cfg.eta_min or 1.0 / n
    energies = np.linspace(-2.5, 2.5, cfg.energy_points)
    x, _ = ctx.vector(spec.beta)
    e1, _ = ctx.vector(spec.beta, "e1")
    kept = ctx.kept(_locallaw_replica, [(spec, (x, e1), r, energies, eta, eta_min) for r in range(cfg.replicas)],
                    "locallaw")
    col = lambda k: np.array([r[k] for r in kept])
    logn = math.log(n)
    _frequency(ctx, "averaged_law", col("averaged"), th.local_law_ratio)
    _frequency(ctx, "isotropic_x", col("isotropic_0"), th.local_law_ratio)
    _frequency(ctx, "isotropic_e1", col("isotropic_1"), th.local_law_ratio)
    deloc = np.maximum(col("delocalization_0"), col("delocalization_1"))
    _frequency(ctx, "delocalization", deloc, logn ** th.delocalization_log_power)
    _frequency(ctx, "rigidity", col("rigidity"), logn ** th.rigidity_log_power)
    ctx.results.append(_info("eta", eta))


def _exp_rigidity(ctx: _Ctx) -> None:
    cfg, th = ctx.config, ctx.th
    spec = ctx.spec(cfg.ensemble_a)
    interval = (cfg.count_window[0], cfg.count_window[1])
    kept = np.array(ctx.kept(_rigidity_replica, [(spec, r, interval, 0.1) for r in range(cfg.replicas)], "rigidity"),
                    dtype=np.float64)
    _frequency(ctx, "rigidity", kept[:, 0], math.log(spec.n) ** th.rigidity_log_power)
    ctx.results.append(_info("semicircle_cdf_distance_mean", float(np.mean(kept[:, 1]))))
    expected = spec.n * float(semicircle.cdf(interval[1]) - semicircle.cdf(interval[0]))
    ctx.results.append(_info("count_mean", float(np.mean(kept[:, 2])), f"semicircle mass x n = {expected:.6g}"))
    ctx.results.append(_info("max_multiplicity", float(np.max(kept[:, 3]))))
    ctx.results.append(_info("spacing_constant", semicircle.spacing_constant(spec.n)))


def _exp_window(ctx: _Ctx) -> None:
    cfg, th = ctx.config, ctx.th
    spec = ctx.spec(cfg.ensemble_a)
    s1, s2 = cfg.window
    eta = resolvent.default_eta(spec.n, s1, s2, cfg.epsilon)
    step = eta / cfg.quad_divisor
    x, _ = ctx.vector(spec.beta)
    kept = np.array(ctx.kept(_window_replica, [(spec, x, r, s1, s2, eta, step) for r in range(cfg.replicas)], "window"))
    ctx.results.append(_check("window_gap_mean", float(np.mean(kept[:, 0])), th.window_gap))
    ctx.results.append(_check("contour_identity_max", float(np.max(kept[:, 1])), th.identity_tol))
    ctx.results.append(_info("eta", eta))


def _exp_swap(ctx: _Ctx) -> None:
    cfg, th = ctx.config, ctx.th
    seed = cfg.master_seed

    small = spec_by_name(cfg.ensemble_b, cfg.swap_n, seed)
    errs = ctx.map(_update_case, [(small, c) for c in range(cfg.swap_cases)], "swap-update")
    ctx.results.append(_check("rank2_update_max_error", float(np.max(errs)), th.update_tol))

    obs = swap.ObservableSpec("m_n", z=complex(0.0, cfg.swap_z))
    tn = cfg.telescope_n
    rep = swap.telescoping_experiment(spec_by_name(cfg.ensemble_a, tn, seed), spec_by_name(cfg.ensemble_b, tn, seed),
                                      obs, "all", seed)
    ctx.results.append(_check("telescoping_identity_error", rep.identity_error, th.update_tol))
    ctx.results.append(_info("telescoping_fallbacks", rep.fallbacks))

    spec_a, spec_b = ctx.spec(cfg.ensemble_a), ctx.spec(cfg.ensemble_b)
    two = rademacher_spec(cfg.n, seed, spec_a.beta)
    four_tot = swap.endpoint_totals(spec_a, spec_b, obs, cfg.replicas, seed)
    two_tot = swap.endpoint_totals(spec_a, two, obs, cfg.replicas, seed)
    four, two_ = abs(float(np.mean(four_tot))), abs(float(np.mean(two_tot)))
    ctx.results.append(_info("four_moment_mean_total", four, "|mean total|"))
    ctx.results.append(_info("two_moment_mean_total", two_, "|mean total|"))
    ctx.results.append(_info("four_moment_mean_abs_total", float(np.mean(np.abs(four_tot))), "mean |total|"))
    ctx.results.append(_info("two_moment_mean_abs_total", float(np.mean(np.abs(two_tot))), "mean |total|"))
    ctx.results.append(StatResult("moment_sensitivity_ordering", two_ - four, 0.0, ">", two_ > four,
                                  "|mean total| of the 2-moment pair exceeds the 4-moment pair"))


def _exp_clt(ctx: _Ctx) -> None:
    cfg, th = ctx.config, ctx.th
    spec = ctx.spec(cfg.ensemble_a)
    x, _ = ctx.vector(spec.beta)
    W = np.array(ctx.kept(_clt_replica, [(spec, x, r) for r in range(cfg.replicas)], "clt"))
    cond = clt_conditions(spec.offdiag)
    ctx.results.append(StatResult("clt_conditions", 1.0 if cond["satisfied"] else 0.0, None, "", None,
                                  "declared-moment conditions of the off-diagonal law"))
    if W.shape[0] < 2:
        for name in ("var_W1_error", "var_W2_error", "cov_W1_W3_z"):
            ctx.results.append(_skipped(name))
        return
    for r, col in ((1, 0), (2, 1)):
        v = bridgestats.variance_with_se(W[:, col])
        target = bridgestats.clt_covariance_target(r, r)
        ctx.results.append(_check(f"var_W{r}_error", abs(v.value - target), th.clt_var_tol))
    cov = bridgestats.covariance_with_se(W[:, 0], W[:, 2])
    ctx.results.append(_info("cov_W1_W3", cov.value))
    if not cov.std_error > 0:
        ctx.results.append(_degenerate("cov_W1_W3_z", th.clt_cov_z))
        return
    z = abs(cov.value - bridgestats.clt_covariance_target(1, 3)) / cov.std_error
    ctx.results.append(_check("cov_W1_W3_z", z, th.clt_cov_z))


def _exp_increments(ctx: _Ctx) -> None:
    cfg, th = ctx.config, ctx.th
    spec = ctx.spec(cfg.ensemble_a)
    x, vid = ctx.vector(spec.beta)
    ens, extras = _collect_paths(ctx, spec, x, vid, STREAM_ENTRIES, "a")
    if ens.replicas < 2:
        ctx.results.append(_skipped("scaling_exponent"))
        ctx.results.append(_skipped("increment_rel_error"))
        return
    slope, _ = bridgestats.scaling_exponent_fit(ens, cfg.deltas, 0.5, cfg.epsilon)
    ctx.results.append(_check("scaling_exponent", slope, th.exponent_floor, ">="))
    m = bridgestats.increment_fourth_moment(ens, 0.375, 0.625, cfg.epsilon)
    target = bridgestats.bridge_increment_fourth_moment(0.375, 0.625)
    ctx.results.append(_check("increment_rel_error", abs(m.value - target) / target, th.increment_rel_tol))
    w = [bridgestats.modulus_of_continuity(p, cfg.modulus_delta) for p in ens.paths]
    ctx.results.append(_info("modulus_of_continuity_mean", float(np.mean(w))))
    s1, s2 = cfg.window
    ey, bound = bridgestats.energy_increment_fourth_moment(extras[:, 0], s1, s2)
    ctx.results.append(_info("energy_increment_fourth_moment", ey.value, f"(s2 - s1)^2 = {bound:.6g}"))


def _exp_necessity(ctx: _Ctx) -> None:
    """
    Var W_n(u^2) at x = e_1 depends on E v^4; uniform x is the control.
    Var X_n(1/2) at e_1 is reported alongside for each ensemble: its
    fourth-cumulant correction vanishes at t = 1/2, so it stays near 1/4 and
    is informational only.
    """
    cfg, th = ctx.config, ctx.th
    spec_a = ctx.spec(cfg.ensemble_a)
    spec_b = ctx.spec(cfg.ensemble_b) if cfg.ensemble_b else rademacher_spec(cfg.n, cfg.master_seed, spec_a.beta)
    for preset in dict.fromkeys(("e1", cfg.test_vector)):
        x, vid = ctx.vector(spec_a.beta, preset)
        ens_a, ea = _collect_paths(ctx, spec_a, x, vid, STREAM_ENTRIES, f"a_{preset}")
        ens_b, eb = _collect_paths(ctx, spec_b, x, vid, STREAM_SWAP_B, f"b_{preset}")
        if min(len(ea), len(eb)) < 2:
            ctx.results.append(_skipped(f"necessity_z_{preset}"))
            continue
        if preset == "e1":
            for side, ens, spec in (("a", ens_a, spec_a), ("b", ens_b, spec_b)):
                v = bridgestats.variance_with_se(ens.at(0.5))
                z_half = abs(v.value - 0.25) / v.std_error if v.std_error > 0 else float("nan")
                ctx.results.append(_info(f"var_half_e1_{side}", v.value, spec.name))
                ctx.results.append(_info(f"var_half_e1_{side}_se", v.std_error))
                ctx.results.append(_info(f"var_half_e1_{side}_z", z_half, "vs 1/4"))
        va, vb = bridgestats.variance_with_se(ea[:, 1]), bridgestats.variance_with_se(eb[:, 1])
        se = math.hypot(va.std_error, vb.std_error)
        if preset == "e1":
            if not se > 0:
                ctx.results.append(_degenerate("necessity_z_e1", th.necessity_z, ">="))
                continue
            ctx.results.append(_check("necessity_z_e1", abs(va.value - vb.value) / se, th.necessity_z, ">="))
        else:
            z = abs(va.value - vb.value) / se if se > 0 else float("nan")
            ctx.results.append(_info(f"necessity_z_{preset}", z, "control"))


_EXPERIMENTS: Dict[str, Callable[[_Ctx], None]] = {
    "bridge": _exp_bridge,
    "universality": _exp_universality,
    "locallaw": _exp_locallaw,
    "rigidity": _exp_rigidity,
    "window": _exp_window,
    "swap": _exp_swap,
    "clt": _exp_clt,
    "increments": _exp_increments,
    "necessity": _exp_necessity,
}

# -------------------------
# Entry point
# -------------------------

def run(config: ExperimentConfig, progress: bool = False) -> RunReport:
    config.validate()
    t0 = time.perf_counter()
    ctx = _Ctx(config, progress)
    log.info("running '%s' (n=%d, replicas=%d, seed=%d)", config.experiment, config.n,
             config.replicas, config.master_seed)
    try:
        _EXPERIMENTS[config.experiment](ctx)
    except _StageEmpty as e:
        log.error("%s", e)
        ctx.results.append(StatResult(f"{e.stage}_replicas_kept", 0.0, 1.0, ">=", False, NO_REPLICAS))
    except DomainError as e:
        raise WignerBridgeError(f"experiment '{config.experiment}' failed: {e}") from e

    if ctx.attempted:
        frac = len(ctx.flagged) / ctx.attempted
        if ctx.flagged:
            log.warning("%d of %d replicas flagged", len(ctx.flagged), ctx.attempted)
        ctx.results.append(_check("flagged_fraction", frac, config.thresholds.failure_budget))

    report = RunReport(
        config=config.to_flat(),
        config_hash=config.config_hash(),
        results=ctx.results,
        seed_log=[(config.master_seed, r) for r in range(config.replicas)],
        flagged=list(ctx.flagged),
        wall_clock=time.perf_counter() - t0,
    )
    if config.out_dir:
        write_artifacts(report, ctx.ensembles, Path(config.out_dir))
    log.info("'%s' finished in %.1fs: %s", config.experiment, report.wall_clock,
             "PASS" if report.passed else "FAIL")
    return report


def write_artifacts(report: RunReport, ensembles: Dict[str, bridgestats.PathEnsemble], out_dir: Path) -> Path:
    for label, ens in ensembles.items():
        sub = out_dir if label == "a" else out_dir / label
        storage.persist_paths(ens, sub, report.seed_log, report.config_hash)
        if ens.replicas >= 2:
            storage.write_covariance(ens, sub)
    return storage.write_report(report.to_dict(), out_dir, {"wall_clock_seconds": report.wall_clock})


def exit_status(report: RunReport) -> int:
    return 0 if report.passed else 1
