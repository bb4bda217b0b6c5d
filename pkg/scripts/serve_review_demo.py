#!/usr/bin/env python3
"""Live review demo: scripted pipeline + review service on one queue.

Starts the review service (serving the built UI from frontend/dist when
present) and a background construction run over the bundled corpus with the
human stage enabled, so items keep arriving in the queue as you decide them.
Rejecting an item makes the same sample reappear with attempt_no + 1.

Usage: python scripts/serve_review_demo.py [--port 8651]
"""

import argparse
import sys
import threading
import time
from pathlib import Path

from chainforge.backends import ScriptedBackend, keyed_script
from chainforge.chain import serialize_chain
from chainforge.datastore import QueueLog
from chainforge.fixtures import demo_corpus
from chainforge.perturb import PerturbStrategy, perturb
from chainforge.pipeline import PipelineConfig, QueueHumanStage, construct_chains
from chainforge.service import ReviewService, serve_review

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from helpers import accepting_verifier  # noqa: E402


def demo_generator(corpus):
    """First attempt offers a shuffled (incoherent) chain, later attempts the
    gold one — so rejections visibly improve the queue."""
    mapping = {}
    for sample in corpus:
        shuffled = perturb(
            sample.gold_chain, PerturbStrategy.CHAIN_SHUFFLE, seed=13
        ).result
        mapping[sample.question] = [
            serialize_chain(shuffled),
            serialize_chain(sample.gold_chain),
        ]
    return ScriptedBackend(script=keyed_script(mapping))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, default=8651)
    args = parser.parse_args()

    run_dir = Path("runs") / "demo-review"
    run_dir.mkdir(parents=True, exist_ok=True)
    log = QueueLog(run_dir / "queue.jsonl")

    ui_dir = Path(__file__).resolve().parent.parent / "frontend" / "dist"
    service = ReviewService(log)
    server = serve_review(
        service, port=args.port, ui_dir=ui_dir if ui_dir.exists() else None
    )
    threading.Thread(target=server.serve_forever, daemon=True).start()
    where = f"http://127.0.0.1:{args.port}"
    print(f"review service on {where}" + (" (UI at /)" if ui_dir.exists() else ""))

    corpus = demo_corpus(20)
    human = QueueHumanStage(log, poll_interval=0.5)

    def pipeline():
        records = construct_chains(
            corpus, demo_generator(corpus), accepting_verifier(),
            PipelineConfig(worker_pool_size=4, max_attempts=3), human=human,
        )
        done = sum(1 for r in records if not r.exhausted)
        print(f"pipeline finished: {done}/{len(records)} chains approved")

    threading.Thread(target=pipeline, daemon=True).start()

    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.shutdown()
        server.server_close()


if __name__ == "__main__":
    main()
