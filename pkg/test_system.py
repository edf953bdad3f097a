#!/usr/bin/env python3
"""
Smoke test for the Wigner bridge toolkit

Checks the environment and runs each stage once at toy size, without
Monte Carlo replica counts. Run directly for a readable summary, or via pytest.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


def check_imports():
    """Check that the numerical stack can be imported"""
    print("🧪 Checking imports...")

    try:
        import numpy
        print(f"✅ NumPy: {numpy.__version__}")
    except ImportError as e:
        print(f"❌ NumPy import failed: {e}")
        return False

    try:
        import scipy
        print(f"✅ SciPy: {scipy.__version__}")
    except ImportError as e:
        print(f"❌ SciPy import failed: {e}")
        return False

    try:
        import joblib
        print(f"✅ joblib: {joblib.__version__}")
    except ImportError as e:
        print(f"❌ joblib import failed: {e}")
        return False

    try:
        import tqdm
        print(f"✅ tqdm: {tqdm.__version__}")
    except ImportError as e:
        print(f"❌ tqdm import failed: {e}")
        return False

    return True


def check_project_structure():
    """Check that the package and the acceptance configs are in place"""
    print("\n📁 Checking project structure...")

    root = Path(__file__).parent
    required_files = [
        "src/semicircle.py",
        "src/ensembles.py",
        "src/spectral.py",
        "src/resolvent.py",
        "src/swap.py",
        "src/bridgestats.py",
        "src/harness.py",
        "src/cli.py",
        "requirements.txt",
    ]

    all_good = True
    for file_path in required_files:
        if (root / file_path).exists():
            print(f"✅ {file_path}")
        else:
            print(f"❌ {file_path} - Missing!")
            all_good = False

    configs = sorted((root / "configs").glob("*.cfg"))
    if configs:
        print(f"✅ configs/ ({len(configs)} experiment configs)")
    else:
        print("❌ configs/ - no experiment configs found!")
        all_good = False

    return all_good


def check_pipeline():
    """Sample one matrix, build its path and compare with the bridge endpoints"""
    print("\n📈 Checking sample -> decompose -> path...")

    try:
        sys.path.insert(0, str(Path(__file__).parent))
        from src import spectral
        from src.ensembles import goe_spec, sample_wigner
        from src.vectors import make_test_vector

        M = sample_wigner(goe_spec(50, seed=1))
        d = spectral.decompose(M)
        err = spectral.reconstruction_error(M, d)
        x, vid = make_test_vector("uniform", 50)
        path = spectral.process_path(spectral.overlaps(d, x), 1, vid)
        print(f"✅ reconstruction error {err:.2e}")
        print(f"📐 X_n(1/2) = {path.value(0.5):+.4f}, X_n(1) = {path.value(1.0):+.1e}")
        return err <= 1e-12 and abs(path.value(1.0)) <= 1e-12
    except Exception as e:
        print(f"❌ Pipeline check failed: {e}")
        return False


def check_resolvent():
    """Check the rank-2 update against direct inversion"""
    print("\n🔁 Checking resolvent update...")

    try:
        from src import resolvent, swap
        from src.ensembles import gue_spec, sample_wigner
        from src.semicircle import SpectralPoint

        M = sample_wigner(gue_spec(20, seed=2))
        z = SpectralPoint(0.3, 0.2)
        pert = swap.Rank2Perturbation(2, 7, 0.3 - 0.1j, 20)
        upd = swap.resolvent_update(swap.full_resolvent(M, z), pert, base=M)
        direct = resolvent.green(replace(M, entries=M.entries + pert.dense()), z)
        err = float(np.max(np.abs(upd.resolvent.G - direct.G)))
        print(f"✅ max entry error {err:.2e}")
        return err <= 1e-8
    except Exception as e:
        print(f"❌ Resolvent check failed: {e}")
        return False


def check_harness():
    """Run a tiny bridge experiment through the harness"""
    print("\n🧰 Checking experiment harness...")

    try:
        from src import harness

        cfg = harness.ExperimentConfig.from_flat({"n": 20, "replicas": 5, "jobs": 1})
        report = harness.run(cfg)
        print(f"✅ {len(report.results)} results, config hash {report.config_hash[:12]}")
        return report.result("flagged_fraction").passed is True
    except Exception as e:
        print(f"❌ Harness check failed: {e}")
        return False


CHECKS = [
    ("Import Check", check_imports),
    ("Project Structure", check_project_structure),
    ("Pipeline", check_pipeline),
    ("Resolvent Update", check_resolvent),
    ("Harness", check_harness),
]


def test_smoke():
    for name, check in CHECKS:
        assert check(), name


def main():
    """Run all checks"""
    print("🚀 Wigner Bridge - Smoke Test")
    print("=" * 50)

    results = []

    for name, check in CHECKS:
        try:
            result = check()
            results.append((name, result))
        except Exception as e:
            print(f"❌ {name} failed with exception: {e}")
            results.append((name, False))

    # Summary
    print("\n" + "=" * 50)
    print("📋 Summary:")

    passed = 0
    for name, result in results:
        status = "✅ PASS" if result else "❌ FAIL"
        print(f"   {status} - {name}")
        if result:
            passed += 1

    print(f"\n🎯 Results: {passed}/{len(results)} checks passed")

    if passed == len(results):
        print("\n🎉 All checks passed.")
        print("\nNext steps:")
        print("1. Run one experiment: python -m src.cli bridge-test --n 200 --replicas 500")
        print("2. Run every acceptance config: python run_wigner_bridge.py")
        return 0

    print("\n⚠️  Some checks failed. Please fix the issues before running experiments.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
