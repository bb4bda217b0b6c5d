"""Six deterministic perturbation strategies for negative-sample chains.

Every strategy is seeded and lexicon-driven (no model in the loop) so that
negative corpora are exactly reproducible.  A strategy whose precondition
does not hold for a given chain raises StrategyNotApplicable; callers fall
back to another strategy.
"""

from __future__ import annotations

import enum
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .chain import CausalChain, chain_equal

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

AUXILIARIES = ("is", "are", "was", "were", "has", "have", "had", "can", "will", "does", "did")

NEGATION_PREFIX = "it is not the case that "

_SWAP_PLACEHOLDER = "\x00actor\x00"


class PerturbStrategy(enum.Enum):
    ACTOR_SWAP = "ActorSwap"
    EVENT_NEGATION = "EventNegation"
    EVENT_REMOVAL = "EventRemoval"
    ORDER_REVERSAL = "OrderReversal"
    SEMANTIC_MODIFICATION = "SemanticModification"
    CHAIN_SHUFFLE = "ChainShuffle"


class StrategyNotApplicable(Exception):
    """The strategy's precondition fails on this chain/lexicon pair."""


class NoApplicableStrategy(Exception):
    """No strategy at all applies to this chain/lexicon pair."""


@dataclass(frozen=True)
class Lexicons:
    """Actor surface strings and an antonym substitution map.

    The antonym map must be irreflexive (a word never maps to itself);
    actor entries must be non-empty.
    """

    actors: tuple[str, ...] = ()
    antonyms: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for a in self.actors:
            if not a.strip():
                raise ValueError("actor entries must be non-empty")
        for word, repl in self.antonyms.items():
            if word.casefold() == repl.casefold():
                raise ValueError(f"antonym map must be irreflexive: {word!r}")


def load_actors(path: str | Path) -> tuple[str, ...]:
    """One actor per line; blank lines and #-comments ignored."""
    actors = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            actors.append(line)
    return tuple(actors)


def load_antonyms(path: str | Path) -> dict[str, str]:
    """One ``word<TAB>replacement`` pair per line."""
    antonyms = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ValueError(f"{path}:{ln}: expected 'word<TAB>replacement'")
        antonyms[parts[0].strip()] = parts[1].strip()
    return antonyms


@dataclass(frozen=True)
class PerturbedChain:
    original: CausalChain
    result: CausalChain
    strategy: PerturbStrategy
    seed: int
    details: str

    def __post_init__(self):
        if chain_equal(self.original, self.result):
            raise ValueError("a perturbed chain must differ from its original")


def _word_pattern(word: str) -> re.Pattern:
    return re.compile(rf"(?<!\w){re.escape(word)}(?!\w)")


def _actors_present(chain: CausalChain, lexicons: Lexicons) -> list[str]:
    text = " ".join(chain.events)
    present = []
    for actor in dict.fromkeys(lexicons.actors):
        if _word_pattern(actor).search(text):
            present.append(actor)
    return present


def _antonym_hit(event: str, antonyms: dict[str, str]) -> tuple[int, int, str] | None:
    """Leftmost whitespace token (case-folded, whole-token) found in the map."""
    folded = {w.casefold(): r for w, r in antonyms.items()}
    for m in re.finditer(r"\S+", event):
        repl = folded.get(m.group().casefold())
        if repl is not None:
            return m.start(), m.end(), repl
    return None


def _actor_swap(chain, rng, lexicons):
    present = _actors_present(chain, lexicons)
    if len(present) < 2:
        raise StrategyNotApplicable("ActorSwap needs >= 2 distinct actors in the chain")
    first, second = rng.sample(present, 2)
    pat_first, pat_second = _word_pattern(first), _word_pattern(second)
    swapped = []
    for ev in chain.events:
        ev = pat_first.sub(_SWAP_PLACEHOLDER, ev)
        ev = pat_second.sub(first, ev)
        ev = ev.replace(_SWAP_PLACEHOLDER, second)
        swapped.append(ev)
    return CausalChain(swapped), f"swapped actors {first!r} <-> {second!r}"


def _event_negation(chain, rng, lexicons):
    del lexicons
    idx = rng.randrange(len(chain.events))
    event = chain.events[idx]
    m = re.search(
        r"(?<!\w)(" + "|".join(AUXILIARIES) + r")(?!\w)", event, re.IGNORECASE
    )
    if m:
        negated = event[: m.end()] + " not" + event[m.end():]
        detail = f"inserted 'not' after {m.group()!r} in event {idx}"
    else:
        negated = NEGATION_PREFIX + event
        detail = f"prefixed event {idx} with negation template"
    events = list(chain.events)
    events[idx] = negated
    return CausalChain(events), detail


def _event_removal(chain, rng, lexicons):
    del lexicons
    if len(chain.events) < 3:
        raise StrategyNotApplicable("EventRemoval needs >= 3 events")
    idx = rng.randrange(1, len(chain.events) - 1)
    events = list(chain.events)
    removed = events.pop(idx)
    return CausalChain(events), f"removed event {idx} ({removed!r})"


def _order_reversal(chain, rng, lexicons):
    del rng, lexicons
    reversed_events = list(reversed(chain.events))
    if reversed_events == list(chain.events):
        raise StrategyNotApplicable("reversal leaves this chain unchanged")
    return CausalChain(reversed_events), "reversed event order"


def _semantic_modification(chain, rng, lexicons):
    if not lexicons.antonyms:
        raise StrategyNotApplicable("SemanticModification needs an antonym lexicon")
    order = list(range(len(chain.events)))
    rng.shuffle(order)
    for idx in order:
        hit = _antonym_hit(chain.events[idx], lexicons.antonyms)
        if hit is None:
            continue
        start, end, repl = hit
        event = chain.events[idx]
        events = list(chain.events)
        events[idx] = event[:start] + repl + event[end:]
        return CausalChain(events), (
            f"replaced {event[start:end]!r} with {repl!r} in event {idx}"
        )
    raise StrategyNotApplicable("no event contains an antonym-lexicon word")


_SHUFFLE_ATTEMPTS = 64


def _chain_shuffle(chain, rng, lexicons):
    del lexicons
    if len(chain.events) < 2:
        raise StrategyNotApplicable("ChainShuffle needs >= 2 events")
    events = list(chain.events)
    for _ in range(_SHUFFLE_ATTEMPTS):
        perm = list(range(len(events)))
        rng.shuffle(perm)
        shuffled = [events[i] for i in perm]
        if shuffled != events:
            return CausalChain(shuffled), f"applied permutation {perm}"
    raise StrategyNotApplicable("no permutation changes this chain")


_IMPLS = {
    PerturbStrategy.ACTOR_SWAP: _actor_swap,
    PerturbStrategy.EVENT_NEGATION: _event_negation,
    PerturbStrategy.EVENT_REMOVAL: _event_removal,
    PerturbStrategy.ORDER_REVERSAL: _order_reversal,
    PerturbStrategy.SEMANTIC_MODIFICATION: _semantic_modification,
    PerturbStrategy.CHAIN_SHUFFLE: _chain_shuffle,
}


def perturb(
    chain: CausalChain,
    strategy: PerturbStrategy,
    seed: int,
    lexicons: Lexicons = Lexicons(),
) -> PerturbedChain:
    """Apply one strategy; deterministic given (chain, strategy, seed, lexicons)."""
    rng = random.Random(seed & _MASK64)
    result, details = _IMPLS[strategy](chain, rng, lexicons)
    return PerturbedChain(
        original=chain, result=result, strategy=strategy, seed=seed & _MASK64,
        details=details,
    )


def applicable_strategies(
    chain: CausalChain, lexicons: Lexicons = Lexicons()
) -> tuple[PerturbStrategy, ...]:
    """The strategies whose preconditions hold for this chain/lexicon pair.

    EventNegation is always applicable (the template prefix guarantees
    totality); reversal and shuffle additionally require that some
    reordering actually changes the chain.
    """
    out = [PerturbStrategy.EVENT_NEGATION]
    if len(_actors_present(chain, lexicons)) >= 2:
        out.append(PerturbStrategy.ACTOR_SWAP)
    if len(chain.events) >= 3:
        out.append(PerturbStrategy.EVENT_REMOVAL)
    if list(reversed(chain.events)) != list(chain.events):
        out.append(PerturbStrategy.ORDER_REVERSAL)
    if lexicons.antonyms and any(
        _antonym_hit(ev, lexicons.antonyms) for ev in chain.events
    ):
        out.append(PerturbStrategy.SEMANTIC_MODIFICATION)
    if len(chain.events) >= 2 and len(set(chain.events)) >= 2:
        out.append(PerturbStrategy.CHAIN_SHUFFLE)
    return tuple(sorted(out, key=lambda s: s.value))


def _mix(seed: int, n: int) -> int:
    """splitmix64 finalizer: independent sub-seed for the n-th draw."""
    z = (seed + n * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


_RETRIES_PER_DRAW = 16


def generate_negatives(
    chain: CausalChain,
    count: int,
    seed: int,
    lexicons: Lexicons = Lexicons(),
) -> list[PerturbedChain]:
    """Draw ``count`` negatives, strategies chosen uniformly among applicable ones.

    Result chains are pairwise distinct; redraws are bounded, so fewer than
    ``count`` negatives can come back (logged as a shortfall).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    applicable = applicable_strategies(chain, lexicons)
    if not applicable:
        raise NoApplicableStrategy("no perturbation strategy applies to this chain")

    negatives: list[PerturbedChain] = []
    seen: list[CausalChain] = []
    draw = 0
    for _ in range(count):
        produced = None
        for _retry in range(_RETRIES_PER_DRAW):
            sub = _mix(seed & _MASK64, draw)
            draw += 1
            strategy = random.Random(sub).choice(applicable)
            try:
                candidate = perturb(chain, strategy, _mix(sub, 1), lexicons)
            except StrategyNotApplicable:
                continue
            if any(chain_equal(candidate.result, prev) for prev in seen):
                continue
            produced = candidate
            break
        if produced is None:
            logger.warning(
                "negative-sample shortfall: produced %d of %d requested",
                len(negatives), count,
            )
            break
        negatives.append(produced)
        seen.append(produced.result)
    return negatives
