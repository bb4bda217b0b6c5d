"""Captioning metrics plus the causal-coherence (CauCo) corpus score.

One shared tokenizer feeds every metric so scores are comparable: case-fold,
split on Unicode whitespace, strip leading/trailing ASCII punctuation per
token.  METEOR is implemented as the exact-match stage only ("METEOR-lite",
F-mean 10PR/(R+9P), penalty 0.5*(chunks/m)^3); scores are NOT comparable to
full METEOR with stemming/synonym stages.  BLEU uses add-one smoothing on
zero-count orders because chains are short.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .chain import CausalChain, serialize_chain

_PUNCT = string.punctuation

ROUGE_BETA = 1.2


class MetricInputError(ValueError):
    """Empty candidate or reference; the score is undefined."""


def tokenize(text: str) -> list[str]:
    """The single shared tokenizer behind every metric in this module."""
    out = []
    for tok in text.casefold().split():
        tok = tok.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def tokenize_chain(chain: CausalChain) -> list[str]:
    return tokenize(" ".join(chain.events))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> float:
    """Geometric mean of clipped 1..n-gram precisions times brevity penalty.

    Smoothing: a zero clipped count at an order the candidate is long enough
    to populate scores (0+1)/(total+1); a candidate too short to form any
    n-gram at some order scores 0 outright.
    """
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    if not candidate:
        raise MetricInputError("empty candidate")
    if not reference:
        raise MetricInputError("empty reference")

    log_sum = 0.0
    for order in range(1, n + 1):
        total = len(candidate) - order + 1
        if total <= 0:
            return 0.0
        cand_counts = _ngrams(candidate, order)
        ref_counts = _ngrams(reference, order)
        clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        if clipped == 0:
            precision = 1.0 / (total + 1)
        else:
            precision = clipped / total
        log_sum += math.log(precision)
    bp = min(1.0, math.exp(1.0 - len(reference) / len(candidate)))
    return bp * math.exp(log_sum / n)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """LCS F-measure with beta = 1.2; 0.0 when the LCS is empty."""
    if not candidate:
        raise MetricInputError("empty candidate")
    if not reference:
        raise MetricInputError("empty reference")
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    beta_sq = ROUGE_BETA**2
    return ((1 + beta_sq) * p * r) / (r + beta_sq * p)


def _greedy_alignment(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """In-order exact-match alignment: each candidate token takes the earliest
    unmatched identical reference token.  Yields the maximum match count."""
    taken = [False] * len(reference)
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        positions.setdefault(tok, []).append(j)
    pairs = []
    for i, tok in enumerate(candidate):
        for j in positions.get(tok, ()):
            if not taken[j]:
                taken[j] = True
                pairs.append((i, j))
                break
    return pairs


def meteor_lite(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Exact-match METEOR stage: F_mean 10PR/(R+9P) with chunk penalty."""
    if not candidate:
        raise MetricInputError("empty candidate")
    if not reference:
        raise MetricInputError("empty reference")
    pairs = _greedy_alignment(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    chunks = 1
    for (ci, ri), (cj, rj) in zip(pairs, pairs[1:]):
        if not (cj == ci + 1 and rj == ri + 1):
            chunks += 1
    p = m / len(candidate)
    r = m / len(reference)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1 - penalty)


class LengthMismatch(ValueError):
    pass


def accuracy(predictions: Sequence[int], gold: Sequence[int]) -> float:
    """Fraction of exact option-index matches."""
    if len(predictions) != len(gold):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(gold)} gold labels"
        )
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(predictions, gold)) / len(gold)


# --- CauCo -----------------------------------------------------------------

class JudgeError(Exception):
    """The judge's output could not be normalized to True/False."""


class JudgeUnavailable(Exception):
    """The judge backend is unreachable after its retry policy."""


@dataclass(frozen=True)
class CoherenceVerdict:
    value: bool
    rationale: str | None = None


class CoherenceJudge(Protocol):
    def judge(self, chain: CausalChain) -> CoherenceVerdict: ...


def normalize_verdict(text: str) -> bool:
    """Accept any case/whitespace variant of true/false; anything else errors."""
    norm = text.strip().casefold()
    if norm == "true":
        return True
    if norm == "false":
        return False
    raise JudgeError(f"verdict not in {{True, False}}: {text!r}")


@dataclass(frozen=True)
class ChainJudgement:
    chain: CausalChain
    verdict: CoherenceVerdict | None
    error: str | None = None


@dataclass(frozen=True)
class CaucoResult:
    score: float | None
    judgements: tuple[ChainJudgement, ...]
    excluded: int
    coverage: float

    @property
    def verdicts(self) -> list[CoherenceVerdict | None]:
        return [j.verdict for j in self.judgements]


def cauco_score(
    chains: Sequence[CausalChain],
    judge: CoherenceJudge,
    max_inflight: int = 4,
) -> CaucoResult:
    """Fraction of chains the judge deems causally coherent.

    Chains whose judgement fails even after the judge's retry are excluded
    from the denominator and counted; unreachable-backend chains reduce the
    coverage fraction instead.  The judgement list preserves input order.
    """
    if not chains:
        raise ValueError("cauco_score needs at least one chain")

    def one(chain: CausalChain) -> ChainJudgement:
        try:
            return ChainJudgement(chain, judge.judge(chain))
        except JudgeError as err:
            return ChainJudgement(chain, None, error=f"judge_error: {err}")
        except JudgeUnavailable as err:
            return ChainJudgement(chain, None, error=f"judge_unavailable: {err}")

    with ThreadPoolExecutor(max_workers=max(1, max_inflight)) as pool:
        judgements = tuple(pool.map(one, chains))

    trues = sum(1 for j in judgements if j.verdict is not None and j.verdict.value)
    falses = sum(1 for j in judgements if j.verdict is not None and not j.verdict.value)
    excluded = sum(1 for j in judgements if j.error is not None and j.error.startswith("judge_error"))
    judged = trues + falses
    score = trues / judged if judged else None
    return CaucoResult(
        score=score,
        judgements=judgements,
        excluded=excluded,
        coverage=judged / len(chains),
    )


class ScriptedJudge:
    """CoherenceJudge over a plain predicate; the offline stand-in."""

    def __init__(self, predicate: Callable[[CausalChain], bool]):
        self._predicate = predicate

    def judge(self, chain: CausalChain) -> CoherenceVerdict:
        return CoherenceVerdict(bool(self._predicate(chain)))


class RuleJudge:
    """Flags any chain whose canonical form is in the known-negative set."""

    def __init__(self, negatives: Sequence[CausalChain | str]):
        self._negatives = {
            serialize_chain(c) if isinstance(c, CausalChain) else c
            for c in negatives
        }

    def judge(self, chain: CausalChain) -> CoherenceVerdict:
        coherent = serialize_chain(chain) not in self._negatives
        return CoherenceVerdict(coherent)


# --- corpus report ----------------------------------------------------------

@dataclass
class MetricReport:
    """Per-corpus scores with a per-sample breakdown.

    ``spice`` is reserved for an external plug-in and always serializes as
    null.  JSON field names are a fixed public contract.
    """

    bleu: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    rouge_l: float = 0.0
    meteor_lite: float = 0.0
    cauco: float | None = None
    accuracy: float | None = None
    n_samples: int = 0
    per_sample: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "b1": self.bleu[0],
            "b2": self.bleu[1],
            "b3": self.bleu[2],
            "b4": self.bleu[3],
            "rougeL": self.rouge_l,
            "meteorLite": self.meteor_lite,
            "cauco": self.cauco,
            "accuracy": self.accuracy,
            "spice": None,
            "nSamples": self.n_samples,
            "perSample": self.per_sample,
        }

    @classmethod
    def from_per_sample(
        cls,
        per_sample: list[dict],
        cauco: float | None = None,
        accuracy_value: float | None = None,
    ) -> "MetricReport":
        n = len(per_sample)

        def mean(key: str) -> float:
            return sum(s.get(key, 0.0) for s in per_sample) / n if n else 0.0

        return cls(
            bleu=(mean("b1"), mean("b2"), mean("b3"), mean("b4")),
            rouge_l=mean("rougeL"),
            meteor_lite=mean("meteorLite"),
            cauco=cauco,
            accuracy=accuracy_value,
            n_samples=n,
            per_sample=per_sample,
        )

    def render_table(self) -> str:
        rows = [
            ("samples", str(self.n_samples)),
            ("BLEU-1", f"{self.bleu[0]:.4f}"),
            ("BLEU-2", f"{self.bleu[1]:.4f}"),
            ("BLEU-3", f"{self.bleu[2]:.4f}"),
            ("BLEU-4", f"{self.bleu[3]:.4f}"),
            ("ROUGE-L", f"{self.rouge_l:.4f}"),
            ("METEOR-lite", f"{self.meteor_lite:.4f}"),
        ]
        if self.cauco is not None:
            rows.append(("CauCo", f"{self.cauco:.4f}"))
        if self.accuracy is not None:
            rows.append(("accuracy", f"{self.accuracy:.4f}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:>8}" for k, v in rows)


def score_pair(candidate_text: str, reference_text: str) -> dict:
    """All text metrics for one candidate/reference pair, zero-flagged on
    empty input."""
    candidate = tokenize(candidate_text)
    reference = tokenize(reference_text)
    try:
        return {
            "b1": bleu_n(candidate, reference, 1),
            "b2": bleu_n(candidate, reference, 2),
            "b3": bleu_n(candidate, reference, 3),
            "b4": bleu_n(candidate, reference, 4),
            "rougeL": rouge_l(candidate, reference),
            "meteorLite": meteor_lite(candidate, reference),
        }
    except MetricInputError as err:
        return {
            "b1": 0.0, "b2": 0.0, "b3": 0.0, "b4": 0.0,
            "rougeL": 0.0, "meteorLite": 0.0,
            "flags": [f"empty_input: {err}"],
        }
