"""Shared fixtures: scripted pipeline scenarios and random-chain generators."""

from __future__ import annotations

import random

from chainforge.backends import ScriptedBackend, keyed_script
from chainforge.chain import CausalChain, serialize_chain
from chainforge.fixtures import demo_corpus, demo_sample

WORDS = (
    "dog", "cat", "door", "ball", "glass", "child", "wind", "rope", "shelf",
    "water", "dropped", "opened", "rolled", "broke", "ran", "slipped",
    "jumped", "spilled", "pushed", "barked", "loudly", "quickly", "suddenly",
)


def random_event(rng: random.Random) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(2, 6)))


def random_chain(rng: random.Random, min_events=2, max_events=8) -> CausalChain:
    n = rng.randint(min_events, max_events)
    return CausalChain([random_event(rng) for _ in range(n)])


def happy_generator(corpus=None):
    """Scripted generator returning each sample's gold chain on the first try."""
    corpus = corpus if corpus is not None else demo_corpus()
    mapping = {s.question: serialize_chain(s.gold_chain) for s in corpus}
    return ScriptedBackend(script=keyed_script(mapping))


def accepting_verifier():
    return ScriptedBackend(default="ACCEPT")


def rejecting_verifier(reason="chain does not explain the answer"):
    return ScriptedBackend(default=f"REJECT: {reason}")


def golden_scenario():
    """The committed-golden construction run: three samples with distinct
    paths (malformed twice then valid; first-try accept; rejected twice then
    accepted)."""
    samples = [demo_sample(0), demo_sample(1), demo_sample(2)]
    gen_map = {
        samples[0].question: [
            "this is not a chain",
            "still free prose, no brackets",
            serialize_chain(samples[0].gold_chain),
        ],
        samples[1].question: serialize_chain(samples[1].gold_chain),
        samples[2].question: serialize_chain(samples[2].gold_chain),
    }
    ver_map = {
        samples[0].question: "ACCEPT",
        samples[1].question: "ACCEPT",
        samples[2].question: [
            "REJECT: second event is unsupported",
            "REJECT: chain skips the actual cause",
            "ACCEPT",
        ],
    }
    generator = ScriptedBackend(script=keyed_script(gen_map))
    verifier = ScriptedBackend(script=keyed_script(ver_map))
    return samples, generator, verifier


def counter_clock():
    state = {"t": -1.0}

    def clock() -> float:
        state["t"] += 1.0
        return state["t"]

    return clock


def threshold_oracle(corpus, threshold=0.5):
    """Answerer whose correctness needs >= threshold of gold-chain tokens
    visible in the chain it is shown."""
    from chainforge.oracles import ThresholdAnswererBackend

    return ThresholdAnswererBackend(
        {
            s.question: (serialize_chain(s.gold_chain), s.options.gold_text)
            for s in corpus
        },
        threshold=threshold,
    )
