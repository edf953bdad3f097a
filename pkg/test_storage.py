"""
Tests for path persistence, integrity checks and report files.
"""

import json

import numpy as np
import pytest

from src import storage
from src.bridgestats import haar_ensemble
from src.errors import ArtifactParseError, IntegrityError


@pytest.fixture
def ensemble():
    return haar_ensemble(8, 1, 3, seed=2)


def _rewrite_csv(out_dir, data: bytes):
    """Replace paths.csv and refresh the sidecar hash so only parsing can fail."""
    (out_dir / storage.PATHS_CSV).write_bytes(data)
    side = json.loads((out_dir / storage.PATHS_SIDECAR).read_text())
    side["csv_sha256"] = storage.sha256_bytes(data)
    (out_dir / storage.PATHS_SIDECAR).write_text(json.dumps(side))


def test_round_trip_is_bit_exact(tmp_path, ensemble):
    storage.persist_paths(ensemble, tmp_path, replica_seeds=[(2, r) for r in range(3)], config_hash="abc")
    back, side = storage.load_paths(tmp_path)
    assert np.array_equal(back.sums, ensemble.sums)
    assert np.array_equal(back.grid, ensemble.grid)
    assert (back.n, back.beta, back.test_vector_id) == (8, 1, "haar")
    assert side["config_hash"] == "abc"
    assert side["replica_seeds"] == [[2, 0], [2, 1], [2, 2]]


def test_csv_layout(ensemble):
    lines = storage.paths_to_csv(ensemble).decode().splitlines()
    assert lines[0] == "replica_id,k,P_k"
    assert len(lines) == 1 + 3 * 9
    assert lines[1] == "0,0,0.0"


def test_tampered_csv_is_refused(tmp_path, ensemble):
    storage.persist_paths(ensemble, tmp_path)
    p = tmp_path / storage.PATHS_CSV
    p.write_bytes(p.read_bytes().replace(b"0,0,0.0", b"0,0,0.5", 1))
    with pytest.raises(IntegrityError):
        storage.load_paths(tmp_path)


def test_truncated_replica_names_row(tmp_path, ensemble):
    storage.persist_paths(ensemble, tmp_path)
    lines = (tmp_path / storage.PATHS_CSV).read_bytes().splitlines(keepends=True)
    _rewrite_csv(tmp_path, b"".join(lines[:-1]))
    with pytest.raises(ArtifactParseError) as exc:
        storage.load_paths(tmp_path)
    assert exc.value.row == len(lines) - 1
    assert "truncated" in str(exc.value)


def test_cut_mid_row_names_row(tmp_path, ensemble):
    storage.persist_paths(ensemble, tmp_path)
    lines = (tmp_path / storage.PATHS_CSV).read_bytes().splitlines(keepends=True)
    cut = b"".join(lines[:12]) + lines[12].split(b",")[0]
    _rewrite_csv(tmp_path, cut)
    with pytest.raises(ArtifactParseError) as exc:
        storage.load_paths(tmp_path)
    assert exc.value.row == 13
    assert "row 13" in str(exc.value)


def test_bad_value_and_header(tmp_path, ensemble):
    storage.persist_paths(ensemble, tmp_path)
    lines = (tmp_path / storage.PATHS_CSV).read_bytes().splitlines(keepends=True)
    lines[4] = b"0,3,not-a-float\n"
    _rewrite_csv(tmp_path, b"".join(lines))
    with pytest.raises(ArtifactParseError) as exc:
        storage.load_paths(tmp_path)
    assert exc.value.row == 5

    lines[0] = b"id,k,value\n"
    _rewrite_csv(tmp_path, b"".join(lines))
    with pytest.raises(ArtifactParseError) as exc:
        storage.load_paths(tmp_path)
    assert exc.value.row == 1


def test_out_of_order_index(tmp_path, ensemble):
    storage.persist_paths(ensemble, tmp_path)
    lines = (tmp_path / storage.PATHS_CSV).read_bytes().splitlines(keepends=True)
    lines[3], lines[4] = lines[4], lines[3]
    _rewrite_csv(tmp_path, b"".join(lines))
    with pytest.raises(ArtifactParseError) as exc:
        storage.load_paths(tmp_path)
    assert exc.value.row == 4


def test_report_sorted_and_timing_separate(tmp_path):
    path = storage.write_report({"b": 1, "a": {"z": 2, "y": 3}}, tmp_path, timing={"wall_clock": 1.5})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert text.index('"y"') < text.index('"z"')
    assert "wall_clock" not in text
    assert json.loads((tmp_path / storage.TIMING_JSON).read_text()) == {"wall_clock": 1.5}
    assert storage.read_report(tmp_path) == {"a": {"y": 3, "z": 2}, "b": 1}

    (tmp_path / "broken.json").write_text('{"a": 1,\n')
    with pytest.raises(ArtifactParseError):
        storage.read_report(tmp_path / "broken.json")


def test_write_covariance(tmp_path, ensemble):
    path = storage.write_covariance(ensemble, tmp_path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,t,empirical,bridge"
    assert len(lines) == 1 + ensemble.grid.size ** 2
    s, t, _, ref = lines[1].split(",")
    assert float(s) == float(t) == 0.1
    assert float(ref) == pytest.approx(0.09)
