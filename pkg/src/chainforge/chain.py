"""Causal chain data model and the bracketed-arrow text format.

A chain is an ordered sequence of event descriptions; order is meaningful
(each event is read as a cause/antecedent of the next).  The textual format
is ``[event] -> [event] -> ...`` with either the ASCII ``->`` or the Unicode
``→`` arrow accepted on input; serialization always emits the ASCII form so
files and diffs stay encoding-stable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

ASCII_ARROW = "->"
UNICODE_ARROW = "→"

_FORBIDDEN_EVENT_CHARS = ("[", "]", "\n", "\r")


class ParseErrorKind(enum.Enum):
    EMPTY_INPUT = "EmptyInput"
    UNBALANCED_BRACKET = "UnbalancedBracket"
    EMPTY_EVENT = "EmptyEvent"
    MISSING_DELIMITER = "MissingDelimiter"
    ILLEGAL_CHARACTER = "IllegalCharacter"


class ChainParseError(ValueError):
    """Raised when an input string does not match the chain grammar.

    ``position`` is a 0-based character offset into the original input and
    never exceeds its length.
    """

    def __init__(self, kind: ParseErrorKind, position: int, message: str):
        super().__init__(f"{kind.value} at {position}: {message}")
        self.kind = kind
        self.position = position
        self.message = message


@dataclass(frozen=True)
class CausalChain:
    """An ordered, immutable sequence of event texts.

    Event texts are trimmed at the edges on construction; internal whitespace
    runs are preserved verbatim.  Events may not contain square brackets,
    newlines, or arrow glyphs, so every chain serializes to a string that
    parses back to the same chain.
    """

    events: tuple[str, ...] = field(default_factory=tuple)

    def __init__(self, events):
        cleaned = []
        for ev in events:
            text = ev.strip()
            if not text:
                raise ValueError("event text must be non-empty after trimming")
            for ch in _FORBIDDEN_EVENT_CHARS:
                if ch in text:
                    raise ValueError(
                        f"event text may not contain {ch!r}: {text!r}"
                    )
            if ASCII_ARROW in text or UNICODE_ARROW in text:
                raise ValueError(
                    f"event text may not contain an arrow glyph: {text!r}"
                )
            cleaned.append(text)
        if not cleaned:
            raise ValueError("a chain must contain at least one event")
        object.__setattr__(self, "events", tuple(cleaned))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


def serialize_chain(chain: CausalChain) -> str:
    """Canonical form: ``[A] -> [B]`` — ASCII arrow, single spaces."""
    return " -> ".join(f"[{ev}]" for ev in chain.events)


def chain_equal(a: CausalChain, b: CausalChain) -> bool:
    """True iff same length and pairwise byte-equal event texts."""
    return a.events == b.events


def parse_chain(text: str) -> CausalChain:
    """Parse ``[Event A] -> [Event B]`` (or with ``→``) into a CausalChain.

    Grammar: ``chain := event (sep event)*``, ``event := '[' text ']'`` where
    ``text`` contains no brackets, newlines, or arrow glyphs,
    ``sep := ws ('→'|'->') ws``.  Whitespace around the whole chain and at
    event edges is trimmed.

    Raises ChainParseError; never returns a zero-event chain.  Total over
    arbitrary input strings: any string yields either a chain or an error.
    """
    n = len(text)
    if not text.strip():
        raise ChainParseError(ParseErrorKind.EMPTY_INPUT, 0, "blank input")

    events: list[str] = []
    i = 0
    while True:
        # --- expect one bracketed event ---
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            # only reachable after a separator promised another event
            raise ChainParseError(
                ParseErrorKind.EMPTY_EVENT, n, "separator with no event after it"
            )
        if text[i] == "]":
            raise ChainParseError(
                ParseErrorKind.UNBALANCED_BRACKET, i, "stray ']' with no opening '['"
            )
        if text[i] != "[":
            raise ChainParseError(
                ParseErrorKind.ILLEGAL_CHARACTER,
                i,
                f"expected '[' to open an event, found {text[i]!r}",
            )
        open_pos = i
        i += 1
        start = i
        while i < n and text[i] not in "[]":
            if text[i] in "\n\r":
                raise ChainParseError(
                    ParseErrorKind.ILLEGAL_CHARACTER, i, "newline inside an event"
                )
            if text[i] == UNICODE_ARROW or text.startswith(ASCII_ARROW, i):
                raise ChainParseError(
                    ParseErrorKind.ILLEGAL_CHARACTER,
                    i,
                    "arrow glyph inside an event",
                )
            i += 1
        if i >= n:
            raise ChainParseError(
                ParseErrorKind.UNBALANCED_BRACKET, open_pos, "'[' is never closed"
            )
        if text[i] == "[":
            raise ChainParseError(
                ParseErrorKind.UNBALANCED_BRACKET, i, "nested '[' inside an event"
            )
        event_text = text[start:i].strip()
        if not event_text:
            raise ChainParseError(
                ParseErrorKind.EMPTY_EVENT, open_pos, "event is empty"
            )
        events.append(event_text)
        i += 1  # past ']'

        # --- expect a separator or end of input ---
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            return CausalChain(events)
        if text[i] == UNICODE_ARROW:
            i += 1
            continue
        if text.startswith(ASCII_ARROW, i):
            i += 2
            continue
        if text[i] == "[":
            raise ChainParseError(
                ParseErrorKind.MISSING_DELIMITER,
                i,
                "two events must be joined by '->'",
            )
        if text[i] == "]":
            raise ChainParseError(
                ParseErrorKind.UNBALANCED_BRACKET, i, "stray ']' between events"
            )
        raise ChainParseError(
            ParseErrorKind.MISSING_DELIMITER,
            i,
            f"expected '->' or end of input, found {text[i]!r}",
        )
