#!/usr/bin/env python3
"""
Wigner Bridge Launcher

Runs every acceptance config in configs/ in turn and prints a pass/fail line per run.
Extra arguments (e.g. --jobs 4 -v) are passed through to each run.
"""

import subprocess
import sys
from pathlib import Path


def main():
    configs = sorted(Path("configs").glob("*.cfg"))
    if not Path("src/cli.py").exists() or not configs:
        print("❌ Error: please run this script from the repository root")
        return 2

    failed = 0
    for cfg in configs:
        print(f"🚀 {cfg}")
        proc = subprocess.run([sys.executable, "-m", "src.cli", "run", "--config", str(cfg)] + sys.argv[1:])
        if proc.returncode == 0:
            print(f"✅ {cfg}")
        else:
            failed += 1
            print(f"❌ {cfg} (exit {proc.returncode})")

    print("=" * 40)
    print(f"{len(configs) - failed}/{len(configs)} configs passed")
    return 0 if failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
