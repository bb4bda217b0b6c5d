import random

import hypothesis.strategies as st
import pytest
from hypothesis import given

from chainforge.chain import (
    CausalChain,
    ChainParseError,
    ParseErrorKind,
    chain_equal,
    parse_chain,
    serialize_chain,
)

event_texts = (
    st.text(
        alphabet=st.characters(blacklist_characters="[]\n\r", blacklist_categories=("Cs",)),
        min_size=1,
        max_size=24,
    )
    .map(str.strip)
    .filter(lambda s: s and "->" not in s and "→" not in s)
)

chains = st.lists(event_texts, min_size=1, max_size=8).map(CausalChain)


class TestParse:
    def test_unicode_arrow(self):
        chain = parse_chain("[He slipped] → [He fell]")
        assert chain.events == ("He slipped", "He fell")

    def test_ascii_arrow_irregular_spacing(self):
        chain = parse_chain("[A] -> [B] ->[C]")
        assert chain.events == ("A", "B", "C")

    def test_missing_delimiter_position(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("[He slipped] [He fell]")
        assert exc.value.kind is ParseErrorKind.MISSING_DELIMITER
        assert exc.value.position == 13

    def test_blank_input(self):
        for raw in ("", "   ", "\t\n"):
            with pytest.raises(ChainParseError) as exc:
                parse_chain(raw)
            assert exc.value.kind is ParseErrorKind.EMPTY_INPUT

    def test_empty_event(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("[A] -> []")
        assert exc.value.kind is ParseErrorKind.EMPTY_EVENT

    def test_whitespace_only_event(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("[   ]")
        assert exc.value.kind is ParseErrorKind.EMPTY_EVENT

    def test_unclosed_bracket(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("[A] -> [B")
        assert exc.value.kind is ParseErrorKind.UNBALANCED_BRACKET

    def test_stray_close_bracket(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("] oops")
        assert exc.value.kind is ParseErrorKind.UNBALANCED_BRACKET

    def test_nested_bracket(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("[a [b] c]")
        assert exc.value.kind is ParseErrorKind.UNBALANCED_BRACKET

    def test_newline_inside_event(self):
        with pytest.raises(ChainParseError) as exc:
            parse_chain("[a\nb]")
        assert exc.value.kind is ParseErrorKind.ILLEGAL_CHARACTER

    def test_arrow_inside_event_rejected(self):
        for raw in ("[a -> b]", "[a → b]"):
            with pytest.raises(ChainParseError) as exc:
                parse_chain(raw)
            assert exc.value.kind is ParseErrorKind.ILLEGAL_CHARACTER

    def test_trailing_separator(self):
        with pytest.raises(ChainParseError):
            parse_chain("[A] ->")

    def test_inner_whitespace_preserved(self):
        chain = parse_chain("[He  ran   fast]")
        assert chain.events == ("He  ran   fast",)


class TestSerialize:
    def test_two_events(self):
        assert serialize_chain(CausalChain(["A", "B"])) == "[A] -> [B]"

    def test_single_event_no_separator(self):
        assert serialize_chain(CausalChain(["X happened"])) == "[X happened]"


class TestChainEqual:
    def test_equal(self):
        assert chain_equal(CausalChain(["A", "B"]), CausalChain(["A", "B"]))

    def test_order_significant(self):
        assert not chain_equal(CausalChain(["A", "B"]), CausalChain(["B", "A"]))

    def test_trimming_is_construction(self):
        assert chain_equal(CausalChain(["A "]), CausalChain(["A"]))


class TestTypeInvariants:
    def test_empty_chain_unrepresentable(self):
        with pytest.raises(ValueError):
            CausalChain([])

    def test_empty_event_rejected(self):
        with pytest.raises(ValueError):
            CausalChain(["ok", "  "])

    def test_bracket_rejected(self):
        with pytest.raises(ValueError):
            CausalChain(["a [b"])

    def test_arrow_rejected(self):
        with pytest.raises(ValueError):
            CausalChain(["a -> b"])


@given(chains)
def test_round_trip(chain):
    assert chain_equal(parse_chain(serialize_chain(chain)), chain)


@given(chains)
def test_arrow_equivalence(chain):
    unicode_form = serialize_chain(chain).replace("->", "→")
    assert chain_equal(parse_chain(unicode_form), chain)


FUZZ_ALPHABET = "[]->→ \t\nabz(){}.\"'\\0éπ"


def fuzz_string(rng: random.Random) -> str:
    return "".join(rng.choice(FUZZ_ALPHABET) for _ in range(rng.randint(0, 40)))


def test_parse_total_on_fuzzed_input():
    rng = random.Random(1234)
    for _ in range(10_000):
        raw = fuzz_string(rng)
        try:
            chain = parse_chain(raw)
            assert isinstance(chain, CausalChain)
            assert len(chain.events) >= 1
        except ChainParseError as err:
            assert 0 <= err.position <= len(raw)


@given(st.text(max_size=60))
def test_parse_total_on_arbitrary_text(raw):
    try:
        parse_chain(raw)
    except ChainParseError as err:
        assert 0 <= err.position <= len(raw)
