import random

import hypothesis.strategies as st
import pytest
from hypothesis import given

from chainforge.chain import CausalChain
from chainforge.metrics import (
    CoherenceVerdict,
    JudgeError,
    JudgeUnavailable,
    LengthMismatch,
    MetricInputError,
    MetricReport,
    RuleJudge,
    ScriptedJudge,
    accuracy,
    bleu_n,
    cauco_score,
    meteor_lite,
    normalize_verdict,
    rouge_l,
    tokenize,
)
from chainforge.perturb import generate_negatives
from chainforge.fixtures import demo_corpus

from oracles import (
    bleu_oracle,
    build_meteor_pair,
    lcs_exhaustive,
    lcs_oracle,
    meteor_formula,
    rouge_oracle,
)

VOCAB = ["a", "b", "c", "d", "e", "f", "g", "h"]


def random_tokens(rng, max_len=12, min_len=1):
    return [rng.choice(VOCAB) for _ in range(rng.randint(min_len, max_len))]


class TestTokenizer:
    def test_casefold_and_punctuation(self):
        assert tokenize("The CAT, sat!") == ["the", "cat", "sat"]

    def test_no_empty_tokens(self):
        assert tokenize("... --- !!!") == []

    def test_unicode_whitespace_split(self):
        assert tokenize("a b\tc") == ["a", "b", "c"]


class TestBleu:
    def test_identity_is_exactly_one(self):
        tokens = tokenize("the cat sat on the mat")
        for n in range(1, 5):
            assert bleu_n(tokens, tokens, n) == 1.0

    def test_frozen_unigram_example(self):
        candidate = tokenize("the cat sat")
        reference = tokenize("the cat ran")
        assert bleu_n(candidate, reference, 1) == pytest.approx(2 / 3, abs=1e-12)

    def test_disjoint_smoothed_positive(self):
        candidate = ["w", "x", "y", "z"]
        reference = ["p", "q", "r", "s"]
        for n in range(1, 5):
            value = bleu_n(candidate, reference, n)
            assert 0.0 < value < 0.5
            assert value == pytest.approx(bleu_oracle(candidate, reference, n), abs=1e-12)

    def test_candidate_too_short_for_order_scores_zero(self):
        assert bleu_n(["a", "b"], ["a", "b"], 4) == 0.0

    def test_empty_inputs_raise(self):
        with pytest.raises(MetricInputError):
            bleu_n([], ["a"], 1)
        with pytest.raises(MetricInputError):
            bleu_n(["a"], [], 1)

    def test_oracle_equivalence_200_random_pairs(self):
        rng = random.Random(42)
        for _ in range(200):
            candidate = random_tokens(rng)
            reference = random_tokens(rng)
            for n in range(1, 5):
                assert bleu_n(candidate, reference, n) == pytest.approx(
                    bleu_oracle(candidate, reference, n), abs=1e-9
                )

    def test_not_symmetric(self):
        candidate = tokenize("the cat")
        reference = tokenize("the cat sat on the mat")
        assert bleu_n(candidate, reference, 1) != bleu_n(reference, candidate, 1)


class TestRougeL:
    def test_identity(self):
        tokens = tokenize("a b c d")
        assert rouge_l(tokens, tokens) == 1.0

    def test_frozen_example(self):
        assert rouge_l("a b c".split(), "a x c".split()) == pytest.approx(2 / 3, abs=1e-12)
        # cross-check the oracle itself by exhaustive subsequence enumeration
        assert lcs_oracle("a b c".split(), "a x c".split()) == 2
        assert lcs_exhaustive("a b c".split(), "a x c".split()) == 2

    def test_disjoint_zero(self):
        assert rouge_l(["a", "b"], ["x", "y"]) == 0.0

    def test_oracle_equivalence_200_random_pairs(self):
        rng = random.Random(43)
        for _ in range(200):
            candidate = random_tokens(rng)
            reference = random_tokens(rng)
            assert rouge_l(candidate, reference) == pytest.approx(
                rouge_oracle(candidate, reference), abs=1e-9
            )

    def test_lcs_matches_exhaustive_at_small_size(self):
        rng = random.Random(44)
        for _ in range(60):
            a = random_tokens(rng, max_len=7)
            b = random_tokens(rng, max_len=7)
            assert lcs_oracle(a, b) == lcs_exhaustive(a, b)


class TestMeteorLite:
    def test_identity_three_tokens(self):
        tokens = ["a", "b", "c"]
        expected = 1 - 0.5 * (1 / 3) ** 3
        assert meteor_lite(tokens, tokens) == pytest.approx(expected, abs=1e-12)
        assert round(meteor_lite(tokens, tokens), 4) == 0.9815

    def test_zero_matches(self):
        assert meteor_lite(["a", "b"], ["x", "y"]) == 0.0

    def test_single_shared_token_different_positions(self):
        candidate = ["a", "k", "l"]
        reference = ["m", "n", "a"]
        # m=1, chunks=1, P=R=1/3 -> F=1/3, penalty=0.5 -> 1/6
        assert meteor_lite(candidate, reference) == pytest.approx(1 / 6, abs=1e-12)
        assert meteor_lite(candidate, reference) == pytest.approx(
            meteor_formula(1, 1, 3, 3), abs=1e-12
        )

    def test_50_hand_built_pairs_match_direct_formula(self):
        built = 0
        for t in range(50):
            n_chunks = 1 + t % 4
            sizes = [1 + (t + j) % 3 for j in range(n_chunks)]
            candidate, reference, m, chunks = build_meteor_pair(n_chunks, sizes, t)
            expected = meteor_formula(m, chunks, len(candidate), len(reference))
            assert meteor_lite(candidate, reference) == pytest.approx(expected, abs=1e-9)
            built += 1
        assert built == 50


@given(
    st.lists(st.sampled_from(VOCAB), min_size=1, max_size=12),
    st.lists(st.sampled_from(VOCAB), min_size=1, max_size=12),
)
def test_all_metrics_within_unit_interval(candidate, reference):
    for n in range(1, 5):
        assert 0.0 <= bleu_n(candidate, reference, n) <= 1.0
    assert 0.0 <= rouge_l(candidate, reference) <= 1.0
    assert 0.0 <= meteor_lite(candidate, reference) <= 1.0


class TestAccuracy:
    def test_identity(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_one_of_four_wrong(self):
        assert accuracy([0, 1, 2, 3], [0, 1, 2, 0]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            accuracy([1], [1, 2])


class TestVerdictNormalization:
    @pytest.mark.parametrize("raw", ["true", "True", "TRUE", "  true  "])
    def test_true_variants(self, raw):
        assert normalize_verdict(raw) is True

    @pytest.mark.parametrize("raw", ["false", " FALSE "])
    def test_false_variants(self, raw):
        assert normalize_verdict(raw) is False

    @pytest.mark.parametrize("raw", ["maybe", "yes", "", "truthy"])
    def test_abnormal_raises(self, raw):
        with pytest.raises(JudgeError):
            normalize_verdict(raw)


def cauco_fixture():
    positives = [s.gold_chain for s in demo_corpus()[:10]]
    negatives = [
        generate_negatives(chain, 1, seed=i)[0].result
        for i, chain in enumerate(positives)
    ]
    return positives, negatives


class TestCauco:
    def test_constant_true_judge_scores_one(self):
        chains = [CausalChain(["a b", "c d"]), CausalChain(["e f", "g h"])]
        result = cauco_score(chains, ScriptedJudge(lambda c: True))
        assert result.score == 1.0
        assert result.coverage == 1.0

    def test_fixture_corpus_half_coherent(self):
        positives, negatives = cauco_fixture()
        judge = RuleJudge(negatives)
        mixed = cauco_score(positives + negatives, judge)
        assert mixed.score == 0.5
        assert cauco_score(positives, judge).score == 1.0
        assert cauco_score(negatives, judge).score == 0.0

    def test_judge_errors_excluded_from_denominator(self):
        chains = [CausalChain([f"event {i} ok", "next ok"]) for i in range(4)]
        bad = chains[1]

        class FlakyJudge:
            def judge(self, chain):
                if chain is bad:
                    raise JudgeError("abnormal output")
                return CoherenceVerdict(True)

        result = cauco_score(chains, FlakyJudge())
        assert result.excluded == 1
        assert result.score == 1.0
        assert result.coverage == 0.75
        assert result.judgements[1].verdict is None

    def test_unavailable_reduces_coverage(self):
        chains = [CausalChain(["a b", "c d"]), CausalChain(["e f", "g h"])]

        class DownJudge:
            def judge(self, chain):
                raise JudgeUnavailable("connection refused")

        result = cauco_score(chains, DownJudge())
        assert result.score is None
        assert result.coverage == 0.0
        assert result.excluded == 0

    def test_order_preserved(self):
        chains = [CausalChain([f"event number {i}", "tail event"]) for i in range(8)]
        flagged = {id(chains[2]), id(chains[5])}

        class PickyJudge:
            def judge(self, chain):
                return CoherenceVerdict(id(chain) not in flagged)

        result = cauco_score(chains, PickyJudge(), max_inflight=3)
        values = [j.verdict.value for j in result.judgements]
        assert values == [True, True, False, True, True, False, True, True]

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            cauco_score([], ScriptedJudge(lambda c: True))


class TestMetricReport:
    def test_json_field_names(self):
        report = MetricReport(
            bleu=(0.1, 0.2, 0.3, 0.4),
            rouge_l=0.5,
            meteor_lite=0.6,
            cauco=0.7,
            accuracy=0.8,
            n_samples=2,
            per_sample=[{"id": "a"}, {"id": "b"}],
        )
        data = report.to_json_dict()
        assert set(data) == {
            "b1", "b2", "b3", "b4", "rougeL", "meteorLite",
            "cauco", "accuracy", "spice", "nSamples", "perSample",
        }
        assert data["spice"] is None  # reserved for an external plug-in
        assert data["nSamples"] == 2

    def test_from_per_sample_averages(self):
        report = MetricReport.from_per_sample(
            [
                {"b1": 1.0, "b2": 0.5, "b3": 0.0, "b4": 0.0, "rougeL": 1.0, "meteorLite": 0.5},
                {"b1": 0.0, "b2": 0.5, "b3": 0.0, "b4": 0.0, "rougeL": 0.0, "meteorLite": 0.5},
            ]
        )
        assert report.bleu[0] == 0.5
        assert report.rouge_l == 0.5
        assert report.meteor_lite == 0.5
        assert report.n_samples == 2

    def test_render_table(self):
        table = MetricReport(accuracy=1.0, n_samples=3).render_table()
        assert "accuracy" in table and "1.0000" in table
