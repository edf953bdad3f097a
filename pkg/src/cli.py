# src/cli.py
"""
Command-line surface.

    python -m src.cli <subcommand> [--config FILE] [--seed N] [--out DIR] [-v]

Tables go to stdout as CSV with a header row; status lines go through logging
on stderr. Exit status: 0 all thresholds pass, 1 statistical failure,
2 configuration or runtime error.
"""

# BLAS threads must be pinned before numpy is first imported.
import os
import sys

if "--within-replica-threads" not in sys.argv:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = "1"

import argparse
import csv
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import harness, semicircle, spectral, storage
from .ensembles import sample_wigner, sampled_moment_audit, spec_by_name
from .errors import WignerBridgeError
from .vectors import make_test_vector

log = logging.getLogger("wigner_bridge")

AUDIT_Z = 5.0                   # sampled-moment audit tolerance in standard errors

# subcommand -> experiment it runs
EXPERIMENT_COMMANDS = {
    "locallaw": "locallaw",
    "rigidity": "rigidity",
    "swap": "swap",
    "bridge-test": "bridge",
    "clt-test": "clt",
    "increments": "increments",
    "window": "window",
    "necessity": "necessity",
}


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, attr in (("seed", "seed"), ("out", "out"), ("n", "n"), ("replicas", "replicas"),
                      ("ensemble.a", "ensemble"), ("ensemble.b", "compare"),
                      ("test_vector", "vector"), ("jobs", "jobs")):
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = v
    for item in args.set or []:
        if "=" not in item:
            raise WignerBridgeError(f"--set expects key=value, got '{item}'")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args: argparse.Namespace, experiment: Optional[str] = None) -> harness.ExperimentConfig:
    ov = _overrides(args)
    if experiment is not None:
        ov["experiment"] = experiment
    if args.config:
        return harness.load_config(Path(args.config), ov)
    return harness.ExperimentConfig.from_flat(ov)

# -------------------------
# Subcommands
# -------------------------

def cmd_sample(args) -> int:
    cfg = _config(args)
    spec = spec_by_name(cfg.ensemble_a, cfg.n, cfg.master_seed)
    w = _writer()
    if args.audit:
        failed = False
        w.writerow(("law", "l", "m", "declared", "empirical", "std_error", "z"))
        for law, dist in (("offdiag", spec.offdiag), ("diag", spec.diag)):
            rows = sampled_moment_audit(dist, args.audit_size, cfg.master_seed)
            for r in rows:
                w.writerow((law, r.l, r.m, repr(r.declared), repr(r.empirical), repr(r.std_error), repr(r.z)))
            worst = max((abs(r.z) for r in rows if math.isfinite(r.z)), default=0.0)
            if worst > AUDIT_Z:
                failed = True
                log.warning("%s law of '%s': sampled moment %.1f standard errors off", law, spec.name, worst)
        return 1 if failed else 0
    M = sample_wigner(spec, args.replica)
    w.writerow(("i", "j", "re", "im"))
    iu, ju = np.triu_indices(M.n)
    for i, j in zip(iu, ju):
        v = complex(M.entries[i, j])
        w.writerow((i + 1, j + 1, repr(v.real), repr(v.imag)))
    return 0


def cmd_spectrum(args) -> int:
    cfg = _config(args)
    d = spectral.decompose(sample_wigner(spec_by_name(cfg.ensemble_a, cfg.n, cfg.master_seed), args.replica))
    gam = semicircle.classical_locations(d.n)
    w = _writer()
    w.writerow(("i", "lambda", "gamma", "lambda_minus_gamma"))
    for i, (lam, g) in enumerate(zip(d.eigenvalues, gam), start=1):
        w.writerow((i, repr(float(lam)), repr(float(g)), repr(float(lam - g))))
    return 0


def cmd_path(args) -> int:
    cfg = _config(args)
    spec = spec_by_name(cfg.ensemble_a, cfg.n, cfg.master_seed)
    x, vid = make_test_vector(cfg.test_vector, cfg.n, spec.beta, cfg.master_seed)
    d = spectral.randomize_phases(spectral.decompose(sample_wigner(spec, args.replica)), cfg.master_seed, args.replica)
    path = spectral.process_path(spectral.overlaps(d, x), spec.beta, vid)
    w = _writer()
    w.writerow(("k", "t", "P_k"))
    for k, p in enumerate(path.partial_sums):
        w.writerow((k, repr(k / path.n), repr(float(p))))
    return 0


def cmd_semicircle(args) -> int:
    w = _writer()
    if args.table == "locations":
        w.writerow(("i", "gamma"))
        for i, g in semicircle.location_table(args.n):
            w.writerow((i, repr(g)))
    else:
        w.writerow(("x", "density", "cdf"))
        for row in semicircle.density_table(np.linspace(-2.5, 2.5, args.points)):
            w.writerow(tuple(repr(float(v)) for v in row))
    return 0


def _print_results(report: Dict[str, Any]) -> None:
    w = _writer()
    w.writerow(("name", "value", "threshold", "comparison", "passed", "note"))
    for r in report["results"]:
        passed = "" if r["passed"] is None else ("pass" if r["passed"] else "FAIL")
        threshold = "" if r["threshold"] is None else repr(r["threshold"])
        w.writerow((r["name"], repr(r["value"]), threshold, r["comparison"], passed, r["note"]))


def cmd_experiment(args, experiment: Optional[str]) -> int:
    cfg = _config(args, experiment)
    if experiment == "bridge" and cfg.ensemble_b:
        cfg = harness.ExperimentConfig.from_flat({**cfg.to_flat(), "experiment": "universality"})
    report = harness.run(cfg, progress=args.verbose)
    _print_results(report.to_dict())
    for r in report.results:
        if r.passed is False:
            log.warning("FAIL %s = %.6g (threshold %s %s)", r.name, r.value, r.comparison, r.threshold)
    return harness.exit_status(report)


def cmd_report(args) -> int:
    src = Path(args.path or args.out or ".")
    report = storage.read_report(src)
    _print_results(report)
    return 0 if report.get("passed") else 1

# -------------------------
# Parser
# -------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file (or .json)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory for artifacts")
    common.add_argument("--n", type=int, help="matrix dimension")
    common.add_argument("--replicas", type=int)
    common.add_argument("--ensemble", help="ensemble A id")
    common.add_argument("--compare", help="ensemble B id")
    common.add_argument("--vector", help="test vector preset")
    common.add_argument("--jobs", type=int, help="joblib workers (-1 = all cores)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--within-replica-threads", action="store_true",
                        help="let BLAS use several threads inside a replica")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wigner-bridge", description="Wigner eigenvector bridge toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("sample", "spectrum", "path"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--replica", type=int, default=0)
        if name == "sample":
            sp.add_argument("--audit", action="store_true",
                            help="print sampled vs declared mixed moments of the entry laws instead of a matrix")
            sp.add_argument("--audit-size", type=int, default=1_000_000)

    sp = sub.add_parser("semicircle", parents=[common])
    sp.add_argument("--table", choices=("density", "locations"), default="density")
    sp.add_argument("--points", type=int, default=101)

    for name in EXPERIMENT_COMMANDS:
        sub.add_parser(name, parents=[common])
    sub.add_parser("run", parents=[common], help="run the experiment named in the config")

    sp = sub.add_parser("report", parents=[common])
    sp.add_argument("path", nargs="?", help="report.json or its directory (default --out)")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "sample":
            return cmd_sample(args)
        if args.command == "spectrum":
            return cmd_spectrum(args)
        if args.command == "path":
            return cmd_path(args)
        if args.command == "semicircle":
            if args.n is None:
                args.n = 100
            return cmd_semicircle(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "run":
            return cmd_experiment(args, None)
        return cmd_experiment(args, EXPERIMENT_COMMANDS[args.command])
    except WignerBridgeError as e:
        log.error("%s", e)
        return 2
    except Exception:
        log.exception("unexpected error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
