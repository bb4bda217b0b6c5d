"""Deterministic stand-in backends for desk-scale experiment runs.

These let every experiment harness run offline: an answerer that picks the
option with maximal token overlap against the chain, a threshold answerer
whose correctness degrades predictably as chain tokens are masked out, and
an extractor that echoes a per-question fixture chain.
"""

from __future__ import annotations

import re
from typing import Mapping

from .backends import (
    BackendRole,
    ModelRequest,
    ModelResponse,
    ScriptMiss,
    option_letter,
)
from .metrics import tokenize

_OPTION_LINE_RE = re.compile(r"^([A-Z])\.\s(.*)$")


def parse_options_block(text: str) -> list[str]:
    options = []
    for line in text.splitlines():
        m = _OPTION_LINE_RE.match(line.strip())
        if m:
            options.append(m.group(2))
    return options


class OverlapAnswererBackend:
    """Selects the option sharing the most tokens with the chain it was shown.

    Ties break toward the lowest option index, so fixtures whose gold option
    has strictly maximal overlap are answered exactly.
    """

    def complete(self, request: ModelRequest) -> ModelResponse:
        if request.role is not BackendRole.ANSWERER:
            raise ScriptMiss("overlap oracle only plays the answerer role")
        chain_tokens = set(tokenize(request.block_text("chain") or ""))
        options = parse_options_block(request.block_text("options") or "")
        if not options:
            raise ScriptMiss("no options block to answer over")
        overlaps = [
            len(chain_tokens & set(tokenize(option))) for option in options
        ]
        best = max(range(len(options)), key=lambda i: (overlaps[i], -i))
        return ModelResponse(text=option_letter(best))


class ThresholdAnswererBackend:
    """Answers correctly iff enough of the gold chain's tokens are still
    visible in the (possibly masked) chain it receives.

    ``gold_by_question`` maps question text to the canonical gold chain
    string and the gold option text.  Below the visibility threshold the
    oracle deterministically picks a wrong option, so per-sample correctness
    is monotone in the number of masked events.
    """

    def __init__(
        self,
        gold_by_question: Mapping[str, tuple[str, str]],
        threshold: float = 0.5,
    ):
        self.gold_by_question = dict(gold_by_question)
        self.threshold = threshold

    def complete(self, request: ModelRequest) -> ModelResponse:
        if request.role is not BackendRole.ANSWERER:
            raise ScriptMiss("threshold oracle only plays the answerer role")
        question = request.block_text("question") or ""
        if question not in self.gold_by_question:
            raise ScriptMiss(f"no gold entry for question {question!r}")
        gold_chain_text, gold_option = self.gold_by_question[question]
        gold_tokens = set(tokenize(gold_chain_text))
        visible = set(tokenize(request.block_text("chain") or ""))
        fraction = len(gold_tokens & visible) / len(gold_tokens) if gold_tokens else 0.0

        options = parse_options_block(request.block_text("options") or "")
        if gold_option not in options:
            raise ScriptMiss("gold option text not among the offered options")
        gold_idx = options.index(gold_option)
        if fraction >= self.threshold:
            return ModelResponse(text=option_letter(gold_idx))
        return ModelResponse(text=option_letter((gold_idx + 1) % len(options)))


class EchoExtractorBackend:
    """Returns a fixture chain per question; optionally a fallback for
    unmapped questions."""

    def __init__(self, chain_by_question: Mapping[str, str], default: str | None = None):
        self.chain_by_question = dict(chain_by_question)
        self.default = default

    def complete(self, request: ModelRequest) -> ModelResponse:
        if request.role is not BackendRole.EXTRACTOR:
            raise ScriptMiss("echo extractor only plays the extractor role")
        question = request.block_text("question") or ""
        text = self.chain_by_question.get(question, self.default)
        if text is None:
            raise ScriptMiss(f"no fixture chain for question {question!r}")
        return ModelResponse(text=text)
