#!/usr/bin/env python3
"""Offline demo of the construction loop over the bundled corpus.

Scripted backends stand in for the generator and verifier, including one
sample that fails parsing twice and one the verifier rejects twice, so the
run artifacts show every stage outcome.  Artifacts land in ./runs/demo-construction.
"""

import json
from pathlib import Path

from chainforge.pipeline import PipelineConfig, construct_chains, write_run_artifacts

import sys

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from helpers import counter_clock, golden_scenario  # noqa: E402


def main():
    samples, generator, verifier = golden_scenario()
    records = construct_chains(
        samples, generator, verifier,
        PipelineConfig(worker_pool_size=1), clock=counter_clock(),
    )
    out = write_run_artifacts(
        Path("runs") / "demo-construction",
        {"command": "demo-construction", "n_samples": len(samples)},
        records=(r.to_dict() for r in records),
    )
    for record in records:
        status = "exhausted" if record.exhausted else "chain"
        print(f"{record.sample_id}: {len(record.attempts)} attempts -> {status}")
    print(f"artifacts in {out}")
    print(json.dumps(records[0].to_dict()["attempts"][0], indent=2)[:400])


if __name__ == "__main__":
    main()
