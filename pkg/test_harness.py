"""
Tests for experiment configuration, the run harness, artifacts and the CLI.
"""

import json
import math
from pathlib import Path

import pytest

from src import bridgestats, cli, harness, spectral, storage
from src.errors import ConfigError, DecompositionError
from src.harness import ExperimentConfig

CONFIG_DIR = Path(__file__).parent / "configs"


def _cfg(**flat):
    base = {"n": 30, "replicas": 25, "jobs": 1, "seed": 11}
    base.update(flat)
    return ExperimentConfig.from_flat(base)


def _canonical(report):
    return storage.canonical_json(report.to_dict())

# -------------------------
# Configuration
# -------------------------

def test_flat_round_trip_and_hash():
    cfg = _cfg(experiment="universality", **{"ensemble.b": "matched_real", "thresholds.ks_normal": 0.07})
    back = ExperimentConfig.from_flat(cfg.to_flat())
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    assert back.thresholds.ks_normal == 0.07
    assert cfg.config_hash() != _cfg().config_hash()


def test_text_and_json_round_trip(tmp_path):
    cfg = _cfg(grid="0.25, 0.5, 0.75", **{"window.interval": "-1, 0.5"})
    assert cfg.grid == (0.25, 0.5, 0.75)
    assert cfg.window == (-1.0, 0.5)
    for name in ("run.cfg", "run.json"):
        path = harness.save_config(cfg, tmp_path / name)
        loaded = harness.load_config(path)
        assert loaded == cfg
        assert loaded.config_hash() == cfg.config_hash()
    assert cfg.config_hash() in (tmp_path / "run.cfg").read_text().splitlines()[0]


def test_load_config_applies_overrides(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nexperiment = clt\nn = 50   # trailing\nseed = 3\n")
    cfg = harness.load_config(path, {"n": 60})
    assert (cfg.experiment, cfg.n, cfg.master_seed) == ("clt", 60, 3)


@pytest.mark.parametrize("flat", [
    {"bogus": 1},
    {"n": "abc"},
    {"n": "2.5"},
    {"n": 1},
    {"replicas": 0},
    {"seed": -1},
    {"experiment": "unknown"},
    {"experiment": "universality"},
    {"ensemble.b": "gue"},
    {"ensemble.a": "wishart"},
    {"test_vector": "ones"},
    {"grid": "0.5, 0.25"},
    {"grid": "0.0, 0.5"},
    {"window.quad_divisor": 5},
    {"increments.deltas": "0.1, 0.2, 0.3"},
    {"thresholds.freq_floor": 1.5},
    {"thresholds.variance_tol": 0},
])
def test_invalid_config(flat):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_flat(flat)


def test_parse_config_text_errors(tmp_path):
    with pytest.raises(ConfigError):
        harness.parse_config_text("n = 5\nn = 6\n")
    with pytest.raises(ConfigError):
        harness.parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        harness.load_config(bad)

# -------------------------
# Runs
# -------------------------

def test_single_replica_reports_insufficient():
    report = harness.run(_cfg(replicas=1))
    for name in ("var_half_error", "covariance_max_error", "ks_normal"):
        r = report.result(name)
        assert r.passed is None
        assert r.note == harness.INSUFFICIENT
        assert math.isnan(r.value)
    assert report.passed
    assert harness.exit_status(report) == 0


def test_bridge_run_is_deterministic():
    first = harness.run(_cfg())
    again = harness.run(_cfg())
    assert _canonical(first) == _canonical(again)
    assert "wall_clock" not in _canonical(first)
    names = [r.name for r in first.results]
    assert {"var_half_error", "covariance_max_error", "ks_normal", "flagged_fraction"} <= set(names)
    assert first.seed_log == [(11, r) for r in range(25)]
    assert first.flagged == []


def test_worker_count_does_not_change_report():
    one = harness.run(_cfg(jobs=1))
    two = harness.run(_cfg(jobs=2))
    assert _canonical(one) == _canonical(two)


def test_failing_threshold_sets_exit_status():
    report = harness.run(_cfg(**{"thresholds.covariance_tol": 1e-9}))
    assert report.result("covariance_max_error").passed is False
    assert not report.passed
    assert harness.exit_status(report) == 1


def test_artifacts_replay_exactly(tmp_path):
    report = harness.run(_cfg(out=str(tmp_path)))
    ens, side = storage.load_paths(tmp_path)
    assert ens.replicas == 25
    assert side["config_hash"] == report.config_hash
    assert bridgestats.covariance_error(ens) == report.result("covariance_max_error").value
    on_disk = storage.read_report(tmp_path)
    assert on_disk["config_hash"] == report.config_hash
    assert (tmp_path / storage.TIMING_JSON).exists()
    assert (tmp_path / storage.COVARIANCE_CSV).exists()


def test_universality_run_writes_both_ensembles(tmp_path):
    report = harness.run(_cfg(experiment="universality", out=str(tmp_path), **{"ensemble.b": "matched_real"}))
    names = {r.name for r in report.results}
    assert {"a_var_half_error", "b_var_half_error", "ks_two_sample"} <= names
    ens_b, _ = storage.load_paths(tmp_path / "b")
    assert ens_b.replicas == 25


def test_window_run_identity_holds():
    report = harness.run(_cfg(experiment="window", n=100, replicas=3))
    assert report.result("contour_identity_max").passed
    assert report.result("eta").value == pytest.approx(100 ** -0.55)


def test_swap_run_small():
    cfg = _cfg(experiment="swap", n=20, replicas=10,
               **{"ensemble.b": "matched_real", "swap.n": 10, "swap.cases": 5, "swap.telescope_n": 6})
    report = harness.run(cfg)
    assert report.result("rank2_update_max_error").passed
    assert report.result("telescoping_identity_error").passed
    assert report.result("moment_sensitivity_ordering").comparison == ">"
    for pair in ("four", "two"):
        mean_abs = report.result(f"{pair}_moment_mean_abs_total").value
        assert mean_abs >= report.result(f"{pair}_moment_mean_total").value


def test_clt_run_small():
    report = harness.run(_cfg(experiment="clt", n=50))
    names = {r.name for r in report.results}
    assert {"clt_conditions", "var_W1_error", "var_W2_error", "cov_W1_W3_z"} <= names
    assert report.result("clt_conditions").value == 1.0


def test_locallaw_and_rigidity_runs_small():
    report = harness.run(_cfg(experiment="locallaw", n=50, replicas=3, **{"locallaw.energy_points": 5}))
    names = {r.name for r in report.results}
    assert {"freq_averaged_law", "freq_isotropic_x", "freq_isotropic_e1",
            "freq_delocalization", "freq_rigidity"} <= names
    report = harness.run(_cfg(experiment="rigidity", n=50, replicas=5))
    assert report.result("max_multiplicity").value == 1.0
    assert report.result("count_mean").value > 0


def test_increments_run_small():
    report = harness.run(_cfg(experiment="increments", n=100, replicas=30))
    names = {r.name for r in report.results}
    assert {"scaling_exponent", "increment_rel_error", "modulus_of_continuity_mean",
            "energy_increment_fourth_moment"} <= names


def test_necessity_run_small():
    report = harness.run(_cfg(experiment="necessity"))
    names = {r.name for r in report.results}
    assert {"necessity_z_e1", "necessity_z_uniform"} <= names
    assert report.result("necessity_z_uniform").passed is None
    for side in ("a", "b"):
        v = report.result(f"var_half_e1_{side}")
        se = report.result(f"var_half_e1_{side}_se").value
        assert v.passed is None and se > 0
        assert report.result(f"var_half_e1_{side}_z").value == pytest.approx(abs(v.value - 0.25) / se)
    assert report.result("var_half_e1_b").note == "rademacher_real"


def _flag_replicas(monkeypatch, which=lambda replica: True):
    decompose = spectral.decompose

    def flaky(M):
        if which(M.replica):
            raise DecompositionError("forced failure", seed=M.seed, replica=M.replica)
        return decompose(M)

    monkeypatch.setattr(spectral, "decompose", flaky)


@pytest.mark.parametrize("experiment", ["bridge", "locallaw", "rigidity", "window", "clt", "increments"])
def test_every_replica_flagged_gives_failing_report(experiment, monkeypatch):
    _flag_replicas(monkeypatch)
    report = harness.run(_cfg(experiment=experiment, replicas=3, **{"thresholds.failure_budget": 0}))
    empty = [r for r in report.results if r.note == harness.NO_REPLICAS]
    assert len(empty) == 1 and empty[0].passed is False
    assert report.result("flagged_fraction").value == 1.0
    assert [r for _, r in report.flagged] == [0, 1, 2]
    assert harness.exit_status(report) == 1


def test_flagged_replicas_are_keyed_by_stage(monkeypatch):
    _flag_replicas(monkeypatch, lambda replica: replica == 0)
    report = harness.run(_cfg(experiment="necessity"))
    assert report.flagged == [("a_e1", 0), ("b_e1", 0), ("a_uniform", 0), ("b_uniform", 0)]
    assert report.result("flagged_fraction").value == pytest.approx(4 / 100)
    assert report.to_dict()["flagged"][0] == ["a_e1", 0]


def test_clt_zero_standard_error_fails(monkeypatch):
    monkeypatch.setattr(bridgestats, "moment_functional", lambda d, x, r, beta: float(r))
    report = harness.run(_cfg(experiment="clt", n=20, replicas=5))
    r = report.result("cov_W1_W3_z")
    assert r.passed is False
    assert r.note == harness.ZERO_SE
    assert math.isnan(r.value)
    assert harness.exit_status(report) == 1

# -------------------------
# CLI
# -------------------------

def test_cli_semicircle_table(capsys):
    assert cli.main(["semicircle", "--points", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,density,cdf"
    assert len(lines) == 6
    assert lines[3].startswith("0.0,")


def test_cli_locations_and_path(capsys):
    assert cli.main(["semicircle", "--table", "locations", "--n", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "i,gamma" and len(lines) == 5
    assert cli.main(["path", "--n", "8", "--seed", "1"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "k,t,P_k" and len(rows) == 10


def test_cli_spectrum_has_deviation_column(capsys):
    assert cli.main(["spectrum", "--n", "6", "--seed", "1"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "i,lambda,gamma,lambda_minus_gamma"
    assert len(rows) == 7
    for row in rows[1:]:
        _, lam, gam, diff = row.split(",")
        assert float(diff) == float(lam) - float(gam)


def test_cli_sample_audit(capsys):
    assert cli.main(["sample", "--audit", "--audit-size", "20000", "--ensemble", "matched_real"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "law,l,m,declared,empirical,std_error,z"
    assert len(rows) == 1 + 2 * 14
    assert {r.split(",")[0] for r in rows[1:]} == {"offdiag", "diag"}


def test_cli_bridge_test_and_report(tmp_path, capsys):
    argv = ["bridge-test", "--n", "20", "--replicas", "30", "--jobs", "1", "--out", str(tmp_path),
            "--set", "thresholds.variance_tol=1", "--set", "thresholds.covariance_tol=1",
            "--set", "thresholds.ks_normal=1"]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "name,value,threshold,comparison,passed,note"
    assert cli.main(["report", str(tmp_path)]) == 0
    assert "var_half_error" in capsys.readouterr().out


def test_cli_config_errors_exit_2(tmp_path):
    assert cli.main(["run", "--set", "n=1"]) == 2
    assert cli.main(["run", "--set", "novalue"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_shipped_configs_parse():
    paths = sorted(CONFIG_DIR.glob("*.cfg"))
    assert len(paths) == 9
    for p in paths:
        cfg = harness.load_config(p)
        assert cfg.experiment in harness.EXPERIMENTS

# -------------------------
# Acceptance (full replica counts)
# -------------------------

@pytest.mark.slow
@pytest.mark.parametrize("name", [p.stem for p in sorted(CONFIG_DIR.glob("*.cfg"))])
def test_acceptance_config(name, tmp_path):
    cfg = harness.load_config(CONFIG_DIR / f"{name}.cfg", {"out": str(tmp_path)})
    report = harness.run(cfg)
    failed = [r.name for r in report.results if r.passed is False]
    assert report.passed, failed


@pytest.mark.slow
@pytest.mark.parametrize("config", ["universality_real", "universality_complex"])
@pytest.mark.parametrize("vector", ["slab", "decay"])
def test_acceptance_universality_other_vectors(config, vector):
    cfg = harness.load_config(CONFIG_DIR / f"{config}.cfg", {"out": "", "test_vector": vector})
    report = harness.run(cfg)
    assert report.result("ks_two_sample").passed
    assert report.result("a_var_half_error").passed


@pytest.mark.slow
def test_acceptance_run_is_reproducible():
    cfg = harness.load_config(CONFIG_DIR / "bridge_goe.cfg", {"out": ""})
    assert _canonical(harness.run(cfg)) == _canonical(harness.run(cfg))
