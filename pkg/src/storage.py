# src/storage.py
"""
On-disk artifacts.

paths.csv      replica_id,k,P_k   (repr floats, bit-exact round trip)
paths.json     n, beta, test vector id, replica seeds, config hash, csv sha256
report.json    sorted keys, no timing
timing.json    wall-clock per run
covariance.csv s,t,empirical,bridge
"""

from __future__ import annotations
import csv
import hashlib
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bridgestats import DEFAULT_GRID, PathEnsemble, bridge_covariance_matrix, empirical_covariance
from .errors import ArtifactParseError, IntegrityError

log = logging.getLogger(__name__)

PATHS_CSV = "paths.csv"
PATHS_SIDECAR = "paths.json"
REPORT_JSON = "report.json"
TIMING_JSON = "timing.json"
COVARIANCE_CSV = "covariance.csv"

CSV_HEADER = ("replica_id", "k", "P_k")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"

# -------------------------
# Path ensembles
# -------------------------

def paths_to_csv(ens: PathEnsemble, replica_ids: Optional[Sequence[int]] = None) -> bytes:
    ids = list(replica_ids) if replica_ids is not None else list(range(ens.replicas))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rid, row in zip(ids, ens.sums):
        for k, p in enumerate(row):
            w.writerow((rid, k, repr(float(p))))
    return buf.getvalue().encode("utf-8")


def persist_paths(
    ens: PathEnsemble,
    out_dir: Path,
    replica_seeds: Sequence[Tuple[int, int]] = (),
    config_hash: str = "",
    replica_ids: Optional[Sequence[int]] = None,
) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = paths_to_csv(ens, replica_ids)
    csv_path = out_dir / PATHS_CSV
    csv_path.write_bytes(data)

    sidecar = {
        "n": ens.n,
        "beta": ens.beta,
        "test_vector": ens.test_vector_id,
        "replicas": ens.replicas,
        "grid": [float(t) for t in ens.grid],
        "replica_seeds": [list(s) for s in replica_seeds],
        "config_hash": config_hash,
        "csv_sha256": sha256_bytes(data),
    }
    side_path = out_dir / PATHS_SIDECAR
    side_path.write_text(canonical_json(sidecar), encoding="utf-8")
    log.info("wrote %d paths to %s", ens.replicas, csv_path)
    return csv_path, side_path


def _parse_rows(path: Path, text: str, n: int) -> Dict[int, List[float]]:
    rows: Dict[int, List[float]] = {}
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_HEADER:
        raise ArtifactParseError(f"bad header {header!r}", path=str(path), row=1)
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != 3:
            raise ArtifactParseError(f"expected 3 fields, got {len(rec)}", path=str(path), row=lineno)
        try:
            rid, k, p = int(rec[0]), int(rec[1]), float(rec[2])
        except ValueError as e:
            raise ArtifactParseError(f"unparsable value: {e}", path=str(path), row=lineno) from e
        seq = rows.setdefault(rid, [])
        if k != len(seq) or k > n:
            raise ArtifactParseError(f"out-of-order index k={k} for replica {rid}", path=str(path), row=lineno)
        seq.append(p)
    for rid, seq in rows.items():
        if len(seq) != n + 1:
            raise ArtifactParseError(
                f"replica {rid} has {len(seq)} of {n + 1} partial sums (truncated file)",
                path=str(path), row=lineno if rows else 1,
            )
    return rows


def load_paths(out_dir: Path) -> Tuple[PathEnsemble, Dict]:
    """Reload a persisted ensemble; refuses on hash mismatch, names the row on parse errors."""
    out_dir = Path(out_dir)
    side_path = out_dir / PATHS_SIDECAR
    csv_path = out_dir / PATHS_CSV
    try:
        sidecar = json.loads(side_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ArtifactParseError(f"sidecar is not valid JSON: {e.msg}", path=str(side_path), row=e.lineno) from e

    data = csv_path.read_bytes()
    digest = sha256_bytes(data)
    if digest != sidecar.get("csv_sha256"):
        raise IntegrityError(f"{csv_path}: sha256 {digest} does not match sidecar {sidecar.get('csv_sha256')}")

    n = int(sidecar["n"])
    rows = _parse_rows(csv_path, data.decode("utf-8"), n)
    sums = np.array([rows[r] for r in sorted(rows)], dtype=np.float64).reshape(len(rows), n + 1)
    ens = PathEnsemble(n, int(sidecar["beta"]), sidecar.get("test_vector", ""),
                       sums, np.asarray(sidecar.get("grid", DEFAULT_GRID), dtype=np.float64))
    return ens, sidecar

# -------------------------
# Reports
# -------------------------

def write_report(report: Dict, out_dir: Path, timing: Optional[Dict] = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / REPORT_JSON
    path.write_text(canonical_json(report), encoding="utf-8")
    if timing is not None:
        (out_dir / TIMING_JSON).write_text(canonical_json(timing), encoding="utf-8")
    return path


def read_report(path: Path) -> Dict:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_JSON
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ArtifactParseError(f"report is not valid JSON: {e.msg}", path=str(path), row=e.lineno) from e


def write_covariance(ens: PathEnsemble, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emp = empirical_covariance(ens)
    ref = bridge_covariance_matrix(ens.grid)
    path = out_dir / COVARIANCE_CSV
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("s", "t", "empirical", "bridge"))
        for i, s in enumerate(ens.grid):
            for j, t in enumerate(ens.grid):
                w.writerow((repr(float(s)), repr(float(t)), repr(float(emp[i, j])), repr(float(ref[i, j]))))
    return path
