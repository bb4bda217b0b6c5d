#!/usr/bin/env python3
"""Regenerate the committed demo corpus at tests/data/corpus20.jsonl."""

from pathlib import Path

from chainforge.datastore import write_augmented
from chainforge.fixtures import demo_corpus

ROOT = Path(__file__).resolve().parent.parent


def main():
    target = ROOT / "tests" / "data" / "corpus20.jsonl"
    summary = write_augmented(target, demo_corpus(20))
    print(f"wrote {summary.written} samples -> {summary.path}")


if __name__ == "__main__":
    main()
