#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT
#
# Regenerates the golden runs. Only trials.csv and manifest.json are kept

import sys
import subprocess
import tempfile
import shutil

from pathlib import Path

THIS_DIR = Path(__file__).parent

RUNS = (
    ("uc1-seed42", ["run-uc1", "--trials", "10", "--seed", "42"]),
    ("uc1-randomized-seed42", ["run-uc1", "--trials", "10", "--seed", "42", "--anchor-strategy", "randomized"]),
    ("uc2-seed42", ["run-uc2", "--trials", "10", "--seed", "42"]),
)

KEEP = ("trials.csv", "manifest.json")


def main():
    for name, args in RUNS:
        dest = THIS_DIR / name
        with tempfile.TemporaryDirectory() as tmp:
            subprocess.run(
                ["negosim"] + args + ["--output", tmp],
                check=True,
                stdout=subprocess.DEVNULL,
            )
            dest.mkdir(parents=True, exist_ok=True)
            for f in KEEP:
                shutil.copyfile(Path(tmp) / f, dest / f)
        print(f"Wrote {dest}")


if __name__ == "__main__":
    sys.exit(main())
