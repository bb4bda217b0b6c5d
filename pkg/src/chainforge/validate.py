"""Programmatic quality checks for generated chains.

Rules are identified by stable string ids (the public contract for
downstream tooling):

    structure.parse                  input does not parse as a chain
    length.min / length.max          event count outside [min_events, max_events]
    event.max_chars                  a single event exceeds max_event_chars
    completeness.fragment            event has fewer than two tokens
    completeness.adjacent_duplicate  two adjacent events are byte-identical
    relevance.answer_disjoint        chain shares no content token with the answer

All violated rules are reported, not just the first; a parse failure is the
one exception since no further rule can run without a chain.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chain import CausalChain, ChainParseError, parse_chain
from .stopwords import STOPWORDS

PASS = "pass"
FAIL = "fail"


@dataclass(frozen=True)
class Violation:
    rule_id: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    chain: CausalChain | None = None

    @property
    def verdict(self) -> str:
        return PASS if not self.violations else FAIL

    @property
    def ok(self) -> bool:
        return not self.violations

    def rule_ids(self) -> list[str]:
        return [v.rule_id for v in self.violations]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "violations": [
                {"rule_id": v.rule_id, "detail": v.detail} for v in self.violations
            ],
        }


@dataclass(frozen=True)
class ValidationConfig:
    max_events: int = 10
    min_events: int = 2
    max_event_chars: int = 300
    require_terminal_relevance: bool = False

    def __post_init__(self):
        if self.min_events < 1 or self.max_events < 1 or self.max_event_chars < 1:
            raise ValueError("validation bounds must be >= 1")
        if self.min_events > self.max_events:
            raise ValueError("min_events must not exceed max_events")


def validate_chain(raw: str, config: ValidationConfig = ValidationConfig()) -> ValidationReport:
    """Run the structure / length / completeness checks over a raw chain string.

    Deterministic: identical (raw, config) always yields the identical report.
    Failures are data, never exceptions.
    """
    try:
        chain = parse_chain(raw)
    except ChainParseError as err:
        return ValidationReport(
            violations=(Violation("structure.parse", str(err)),)
        )

    violations: list[Violation] = []
    n = len(chain.events)
    if n < config.min_events:
        violations.append(
            Violation("length.min", f"{n} events, minimum is {config.min_events}")
        )
    if n > config.max_events:
        violations.append(
            Violation("length.max", f"{n} events, maximum is {config.max_events}")
        )
    for idx, ev in enumerate(chain.events):
        if len(ev) > config.max_event_chars:
            violations.append(
                Violation(
                    "event.max_chars",
                    f"event {idx} is {len(ev)} chars, maximum is {config.max_event_chars}",
                )
            )
        if len(ev.split()) < 2:
            violations.append(
                Violation(
                    "completeness.fragment",
                    f"event {idx} ({ev!r}) has fewer than two tokens",
                )
            )
    for idx in range(n - 1):
        if chain.events[idx] == chain.events[idx + 1]:
            violations.append(
                Violation(
                    "completeness.adjacent_duplicate",
                    f"events {idx} and {idx + 1} are identical ({chain.events[idx]!r})",
                )
            )
    return ValidationReport(violations=tuple(violations), chain=chain)


def content_tokens(text: str) -> set[str]:
    """Case-folded whitespace tokens minus stopwords and punctuation shells."""
    out = set()
    for tok in text.split():
        tok = tok.strip(".,;:!?()'\"").casefold()
        if tok and tok not in STOPWORDS:
            out.add(tok)
    return out


def validate_against_qa(
    chain: CausalChain,
    question: str,
    answer: str,
    config: ValidationConfig = ValidationConfig(),
) -> ValidationReport:
    """Cheap lexical-overlap screen run before the cross-model verification.

    The chain must share at least one content token with the answer text;
    with ``require_terminal_relevance`` only the final event is screened.
    The question is accepted for interface symmetry but the screen keys on
    the answer only.
    """
    del question
    if config.require_terminal_relevance:
        chain_text = chain.events[-1]
    else:
        chain_text = " ".join(chain.events)
    shared = content_tokens(chain_text) & content_tokens(answer)
    if not shared:
        return ValidationReport(
            violations=(
                Violation(
                    "relevance.answer_disjoint",
                    "chain shares no content token with the answer",
                ),
            ),
            chain=chain,
        )
    return ValidationReport(chain=chain)
