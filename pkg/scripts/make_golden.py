#!/usr/bin/env python3
"""Regenerate the committed golden record files.

Run after any intentional change to record schemas or the construction
loop, then review the diff by eye before committing.
"""

import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from chainforge.cli import main as cli_main
from chainforge.pipeline import PipelineConfig, construct_chains

from helpers import counter_clock, golden_scenario  # noqa: E402
from test_cli import CORPUS, write_cli_env  # noqa: E402


def golden_records(target: Path):
    samples, generator, verifier = golden_scenario()
    records = construct_chains(
        samples, generator, verifier,
        PipelineConfig(worker_pool_size=1), clock=counter_clock(),
    )
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    print(f"wrote {len(records)} records -> {target}")


def golden_cli_records(target: Path):
    tmp = Path(tempfile.mkdtemp(prefix="chainforge-golden-"))
    config = write_cli_env(tmp)
    out_dir = tmp / "run"
    code = cli_main(
        ["--config", str(config), "generate", "--in", str(CORPUS),
         "--out-dir", str(out_dir), "--deterministic"]
    )
    if code != 0:
        raise SystemExit(f"generate exited {code}")
    target.write_text(
        (out_dir / "records.jsonl").read_text(encoding="utf-8"), encoding="utf-8"
    )
    print(f"wrote CLI golden -> {target}")


def main():
    data = ROOT / "tests" / "data"
    golden_records(data / "golden_records.jsonl")
    golden_cli_records(data / "golden_cli_records.jsonl")


if __name__ == "__main__":
    main()
