#!/usr/bin/env python3
"""Masking-sensitivity demo: accuracy vs number of masked chain events.

Uses the threshold oracle answerer (correct only while at least half of the
gold chain's tokens remain visible), so the degradation trend is visible
without any model backend.
"""

import sys
from pathlib import Path

from chainforge.fixtures import demo_corpus
from chainforge.pipeline import run_masking_sweep, run_upper_bound, write_run_artifacts

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from helpers import threshold_oracle  # noqa: E402


def main():
    corpus = demo_corpus(20)
    oracle = threshold_oracle(corpus)
    upper = run_upper_bound(corpus, oracle)
    print(f"upper bound (unmasked gold chains): {upper.report.accuracy:.4f}")

    sweep = run_masking_sweep(corpus, oracle, levels=[0, 1, 2, 3], seed=7)
    print("k  n   accuracy")
    for point in sweep.points:
        bar = "#" * round(point.accuracy * 40)
        print(f"{point.k}  {point.n:<3} {point.accuracy:.4f}  {bar}")

    out = write_run_artifacts(
        Path("runs") / "demo-masking",
        {"command": "demo-masking", "levels": [0, 1, 2, 3], "seed": 7},
        records=sweep.to_rows(),
        sweep=sweep,
    )
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
