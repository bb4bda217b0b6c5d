"""Acceptance suite: every criterion at its stated tolerance, one
pass/fail line each (run with ``pytest tests/test_acceptance.py -s``)."""

import json
import random
import time
from contextlib import contextmanager

import pytest

from chainforge.backends import (
    BackendConfig,
    BackendRole,
    HttpBackend,
    ModelCircularityError,
    check_distinct_models,
    extract_option_letter,
)
from chainforge.chain import (
    CausalChain,
    ChainParseError,
    chain_equal,
    parse_chain,
    serialize_chain,
)
from chainforge.datastore import load_samples, replay_queue, write_augmented
from chainforge.fixtures import demo_corpus
from chainforge.metrics import (
    RuleJudge,
    bleu_n,
    cauco_score,
    meteor_lite,
    rouge_l,
)
from chainforge.oracles import OverlapAnswererBackend
from chainforge.perturb import (
    PerturbStrategy,
    StrategyNotApplicable,
    generate_negatives,
    perturb,
)
from chainforge.pipeline import (
    PipelineConfig,
    construct_chain_for_sample,
    construct_chains,
    run_masking_sweep,
    run_upper_bound,
)
from chainforge.validate import validate_chain

import test_backends as backend_fixtures
import test_datastore as datastore_fixtures
from helpers import (
    counter_clock,
    golden_scenario,
    happy_generator,
    random_chain,
    rejecting_verifier,
    threshold_oracle,
)
from oracles import bleu_oracle, build_meteor_pair, meteor_formula, rouge_oracle
from test_backends import LETTER_FIXTURES, ok_body, stub_server
from test_validate import ELEVEN_EVENTS, FIXTURES as VALIDATION_FIXTURES


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS")


def test_chain_grammar_round_trip_and_fuzz_totality():
    with criterion("chain-grammar"):
        started = time.monotonic()
        rng = random.Random(101)
        for _ in range(1_000):
            chain = random_chain(rng, min_events=1, max_events=10)
            assert chain_equal(parse_chain(serialize_chain(chain)), chain)

        alphabet = "[]->→ \t\nabz(){}.\"'\\0éπ"
        for _ in range(100_000):
            raw = "".join(
                rng.choice(alphabet) for _ in range(rng.randrange(0, 40))
            )
            try:
                result = parse_chain(raw)
                assert isinstance(result, CausalChain)
            except ChainParseError as err:
                assert 0 <= err.position <= len(raw)
        elapsed = time.monotonic() - started
        assert elapsed < 10.0, f"grammar suite took {elapsed:.2f}s"


def test_validation_fixture_set_and_length_cap():
    with criterion("validation-rules"):
        valid = [f for f in VALIDATION_FIXTURES if not f[1]]
        invalid = [f for f in VALIDATION_FIXTURES if f[1]]
        assert len(valid) == 10 and len(invalid) == 20
        for raw, expected in VALIDATION_FIXTURES:
            assert sorted(validate_chain(raw).rule_ids()) == sorted(expected)
        assert validate_chain(ELEVEN_EVENTS).rule_ids() == ["length.max"]


def test_metrics_oracle_equivalence():
    with criterion("metrics-oracles"):
        started = time.monotonic()
        rng = random.Random(42)
        vocab = ["a", "b", "c", "d", "e", "f", "g", "h"]
        for _ in range(200):
            candidate = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
            reference = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
            for n in range(1, 5):
                assert abs(
                    bleu_n(candidate, reference, n)
                    - bleu_oracle(candidate, reference, n)
                ) < 1e-9
            assert abs(
                rouge_l(candidate, reference) - rouge_oracle(candidate, reference)
            ) < 1e-9
        identical = ["p", "q", "r", "s", "t"]
        for n in range(1, 5):
            assert bleu_n(identical, identical, n) == 1.0
        assert rouge_l(identical, identical) == 1.0

        for t in range(50):
            n_chunks = 1 + t % 4
            sizes = [1 + (t + j) % 3 for j in range(n_chunks)]
            candidate, reference, m, chunks = build_meteor_pair(n_chunks, sizes, t)
            expected = meteor_formula(m, chunks, len(candidate), len(reference))
            assert abs(meteor_lite(candidate, reference) - expected) < 1e-9
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"metrics suite took {elapsed:.2f}s"


def test_perturbation_invariants_all_strategies():
    with criterion("perturbation-invariants"):
        started = time.monotonic()
        from test_perturb import LEX, random_actor_chain

        for strategy in PerturbStrategy:
            rng = random.Random(hash(strategy.value) & 0xFFFF)
            applied = 0
            for seed in range(100):
                if strategy is PerturbStrategy.ACTOR_SWAP:
                    chain, lexicons = random_actor_chain(rng), LEX
                else:
                    chain = random_chain(rng, min_events=2, max_events=7)
                    lexicons = LEX
                try:
                    result = perturb(chain, strategy, seed=seed, lexicons=lexicons)
                except StrategyNotApplicable:
                    continue
                applied += 1
                assert not chain_equal(result.result, chain)
                if strategy is PerturbStrategy.ORDER_REVERSAL:
                    assert chain_equal(
                        perturb(result.result, strategy, seed=seed).result, chain
                    )
                if strategy is PerturbStrategy.EVENT_REMOVAL:
                    assert len(result.result.events) == len(chain.events) - 1
                else:
                    assert len(result.result.events) == len(chain.events)
                if strategy in (
                    PerturbStrategy.EVENT_NEGATION,
                    PerturbStrategy.SEMANTIC_MODIFICATION,
                ):
                    assert (
                        sum(a != b for a, b in zip(chain.events, result.result.events))
                        == 1
                    )
                if strategy is PerturbStrategy.CHAIN_SHUFFLE:
                    assert sorted(result.result.events) == sorted(chain.events)
                repeat = perturb(chain, strategy, seed=seed, lexicons=lexicons)
                assert serialize_chain(repeat.result) == serialize_chain(result.result)
            assert applied >= 50, (strategy, applied)
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"perturbation suite took {elapsed:.2f}s"


def test_cauco_harness_fixture_corpus():
    with criterion("cauco-harness"):
        positives = [s.gold_chain for s in demo_corpus()[:10]]
        negatives = [
            generate_negatives(chain, 1, seed=i)[0].result
            for i, chain in enumerate(positives)
        ]
        judge = RuleJudge(negatives)
        assert cauco_score(positives + negatives, judge).score == 0.5
        assert cauco_score(positives, judge).score == 1.0
        assert cauco_score(negatives, judge).score == 0.0


def test_construction_loop_statuses_exhaustion_and_golden(data_dir):
    with criterion("construction-loop"):
        samples, generator, verifier = golden_scenario()
        record = construct_chain_for_sample(
            samples[0], generator, verifier, clock=counter_clock()
        )
        assert len(record.attempts) == 3
        for attempt in record.attempts[:2]:
            assert not attempt.parse_ok
            assert attempt.validation.rule_ids() == ["structure.parse"]
            assert attempt.verifier.status == "skipped"
            assert attempt.human.status == "skipped"
        assert record.attempts[2].verifier.status == "accept"
        assert not record.exhausted

        exhausted = construct_chain_for_sample(
            demo_corpus()[5],
            happy_generator(),
            rejecting_verifier(),
            PipelineConfig(max_attempts=2),
            clock=counter_clock(),
        )
        assert exhausted.exhausted and len(exhausted.attempts) == 2

        samples, generator, verifier = golden_scenario()
        records = construct_chains(
            samples, generator, verifier,
            PipelineConfig(worker_pool_size=1), clock=counter_clock(),
        )
        produced = "".join(
            json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records
        )
        golden = (data_dir / "golden_records.jsonl").read_text(encoding="utf-8")
        assert produced == golden


def test_upper_bound_wiring_reaches_perfect_accuracy():
    with criterion("upper-bound"):
        result = run_upper_bound(demo_corpus(20), OverlapAnswererBackend())
        assert result.report.accuracy == 1.0
        assert result.report.n_samples == 20


def test_masking_sweep_monotone_degradation():
    with criterion("masking-sweep"):
        corpus = demo_corpus(20)
        oracle = threshold_oracle(corpus)
        upper = run_upper_bound(corpus, oracle).report.accuracy
        for seed in range(10):
            sweep = run_masking_sweep(corpus, oracle, [0, 1, 2, 3], seed=seed)
            accuracies = [p.accuracy for p in sweep.points]
            assert accuracies[0] == upper == 1.0
            assert all(
                later <= earlier + 1e-12
                for earlier, later in zip(accuracies, accuracies[1:])
            ), (seed, accuracies)


def test_datastore_round_trip_replay_and_atomicity(tmp_path, monkeypatch):
    with criterion("datastore"):
        corpus = datastore_fixtures.synthetic_corpus(500)
        path = tmp_path / "corpus.jsonl"
        write_augmented(path, corpus)
        loaded = load_samples(path)
        assert not loaded.errors and loaded.samples == corpus

        rng = random.Random(77)
        actions = ("approve", "edit", "reject")
        for trial in range(1_000):
            events, shadow, next_id = [], {}, 0
            for ts in range(rng.randint(1, 10)):
                pending = [k for k, v in shadow.items() if v == "pending"]
                if rng.random() < 0.5 or not pending:
                    item_id = f"t{trial}i{next_id}"
                    next_id += 1
                    events.append(
                        {"ts": ts, "kind": "enqueued",
                         "payload": {"item_id": item_id, "sample_id": "s",
                                     "attempt_no": 1, "chain": "[a b] -> [c d]"}}
                    )
                    shadow[item_id] = "pending"
                else:
                    item_id = rng.choice(pending)
                    action = rng.choice(actions)
                    payload = {"item_id": item_id, "action": action, "reviewer": "r"}
                    if action == "edit":
                        payload["chain"] = "[x y] -> [z w]"
                    if action == "reject":
                        payload["reason"] = "because"
                    events.append({"ts": ts, "kind": "decided", "payload": payload})
                    shadow[item_id] = {
                        "approve": "approved", "edit": "edited", "reject": "rejected",
                    }[action]
            log = tmp_path / "replay.jsonl"
            datastore_fixtures.write_events(log, events)
            state = replay_queue(log)
            assert {k: v.state for k, v in state.items.items()} == shadow

        import chainforge.datastore as ds

        target = tmp_path / "crash.jsonl"

        def boom(fd):
            raise OSError("simulated crash")

        monkeypatch.setattr(ds.os, "fsync", boom)
        with pytest.raises(OSError):
            write_augmented(target, demo_corpus(5))
        monkeypatch.undo()
        assert not target.exists()
        assert not list(tmp_path.glob(".crash.jsonl.tmp.*"))


def test_backend_client_retries_strict_mode_and_letter_grammar():
    with criterion("backend-client"):
        script = [(429, None), (429, None), (200, ok_body("True"))]
        with stub_server(script) as (url, received):
            backend = HttpBackend(
                BackendConfig(
                    endpoint_url=url, timeout_ms=2000,
                    max_retries=3, backoff_base_ms=1,
                ),
                BackendRole.JUDGE,
            )
            response = backend.complete(backend_fixtures.make_request())
        assert response.text == "True"
        assert len(received) == 3

        with pytest.raises(ModelCircularityError):
            check_distinct_models(
                BackendConfig(model_name="same-model"),
                BackendConfig(model_name="same-model"),
                strict=True,
            )

        assert len(LETTER_FIXTURES) == 20
        for text, expected in LETTER_FIXTURES:
            assert extract_option_letter(text, 5) == expected
