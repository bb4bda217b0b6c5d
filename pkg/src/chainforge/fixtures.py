"""Synthetic demo corpus for offline runs and tests.

Twenty samples, each with a four-event gold chain whose final event is the
gold answer verbatim, five answer options, and distractor options built from
a vocabulary disjoint from every chain — so an answerer that scores token
overlap provably selects the gold option.
"""

from __future__ import annotations

from .backends import VideoRef
from .chain import CausalChain
from .datastore import AnswerOptions, Sample

SUBJECTS = (
    "farmer", "diver", "pilot", "barista", "welder", "nurse", "skater",
    "monk", "clerk", "chef", "miner", "tailor", "drummer", "juggler",
    "archer", "sailor", "painter", "mason", "courier", "botanist",
)
OBJECTS = (
    "lantern", "kettle", "ladder", "anchor", "easel", "snare", "quiver",
    "brick", "parcel", "fern", "pickaxe", "bobbin", "cymbal", "pin",
    "bow", "compass", "canvas", "trowel", "satchel", "orchid",
)
PLACES = (
    "orchard", "reef", "hangar", "cafe", "foundry", "ward", "rink",
    "abbey", "archive", "kitchen", "shaft", "atelier", "studio", "plaza",
    "range", "harbor", "gallery", "quarry", "depot", "greenhouse",
)
HAZARDS = (
    "root", "coral", "hose", "cord", "slag", "gurney", "pebble", "step",
    "crate", "peel", "rail", "spool", "cable", "hoop", "stone", "cleat",
    "frame", "rubble", "curb", "vine",
)
SURFACES = (
    "flagstones", "tiles", "tarmac", "counter", "anvil", "linoleum",
    "ice", "slate", "shelving", "stovetop", "bedrock", "parquet", "riser",
    "paving", "gravel", "deck", "floorboards", "cobbles", "ramp", "planter",
)

# distractor vocabulary is disjoint from every chain above
DISTRACTORS = (
    "rain flooded several cellars overnight",
    "birds migrated south before winter",
    "taxes rose sharply last quarter",
    "music echoed past midnight",
    "wolves howled near distant ridges",
    "prices doubled during festival week",
    "engines stalled amid heavy fog",
    "crowds cheered when fireworks began",
)

DATASETS = ("nextqa", "causalvidqa", "causalchaos")


def demo_sample(i: int) -> Sample:
    subj = SUBJECTS[i % len(SUBJECTS)]
    obj = OBJECTS[i % len(OBJECTS)]
    place = PLACES[i % len(PLACES)]
    hazard = HAZARDS[i % len(HAZARDS)]
    surface = SURFACES[i % len(SURFACES)]
    answer = f"the {obj} smashed onto the {surface}"
    chain = CausalChain(
        [
            f"the {subj} carried the {obj} through the {place}",
            f"the {subj} tripped over a {hazard}",
            f"the {obj} slipped from shaking hands",
            answer,
        ]
    )
    gold_index = i % 5
    options = [DISTRACTORS[(i + j) % len(DISTRACTORS)] for j in range(4)]
    options.insert(gold_index, answer)
    sid = f"s{i:02d}"
    return Sample(
        id=sid,
        dataset=DATASETS[i % len(DATASETS)],
        split="test",
        video=VideoRef(uri=f"vid://demo/{sid}"),
        question=f"why did the {obj} smash in the {place}",
        gold_answer=answer,
        options=AnswerOptions(options=tuple(options), gold_index=gold_index),
        gold_chain=chain,
        video_surrogate=(
            f"a {subj} crosses the {place} carrying a {obj}, trips over a "
            f"{hazard}, and the {obj} shatters"
        ),
    )


def demo_corpus(n: int = 20) -> list[Sample]:
    return [demo_sample(i) for i in range(n)]
