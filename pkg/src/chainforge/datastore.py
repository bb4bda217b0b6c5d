"""Dataset files, the review-queue event log, and corpus statistics.

Corpora are JSONL, one sample per line, UTF-8 with LF newlines.  Field names
are a fixed contract: ``id, dataset, split, video, video_surrogate?,
question, answer, options[], gold_index, gold_chain?``; ``gold_chain`` holds
the canonical bracketed-arrow string.  The review queue is an append-only
JSONL event log (``{ts, kind, payload}``); queue state is a pure fold over
the events, so any prefix replays to a valid state.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Iterable, Sequence

try:
    import fcntl
except ImportError:  # non-POSIX; appends are then unserialized
    fcntl = None

from .backends import VideoRef
from .chain import CausalChain, ChainParseError, parse_chain, serialize_chain
from .validate import ValidationConfig, ValidationReport, validate_chain

SPLITS = ("train", "val", "test")

KNOWN_DATASETS = ("nextqa", "causalvidqa", "causalchaos")


class SampleSchemaError(ValueError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field_name = field_name
        self.reason = reason


@dataclass(frozen=True)
class AnswerOptions:
    options: tuple[str, ...]
    gold_index: int

    def __post_init__(self):
        if not 2 <= len(self.options) <= 26:
            raise SampleSchemaError("options", "need between 2 and 26 options")
        if any(not o for o in self.options):
            raise SampleSchemaError("options", "options must be non-empty")
        if len(set(self.options)) != len(self.options):
            raise SampleSchemaError("options", "options must be pairwise distinct")
        if not 0 <= self.gold_index < len(self.options):
            raise SampleSchemaError("gold_index", "gold_index out of range")

    @property
    def gold_text(self) -> str:
        return self.options[self.gold_index]


@dataclass(frozen=True)
class Sample:
    id: str
    dataset: str
    split: str
    video: VideoRef
    question: str
    gold_answer: str
    options: AnswerOptions | None = None
    gold_chain: CausalChain | None = None
    video_surrogate: str | None = None

    def __post_init__(self):
        if not self.id:
            raise SampleSchemaError("id", "must be non-empty")
        if not self.dataset:
            raise SampleSchemaError("dataset", "must be non-empty")
        if self.split not in SPLITS:
            raise SampleSchemaError("split", f"must be one of {SPLITS}")
        if not self.question.strip():
            raise SampleSchemaError("question", "must be non-empty")
        if not self.gold_answer.strip():
            raise SampleSchemaError("answer", "must be non-empty")
        if self.options is not None:
            matches = [o for o in self.options.options if o == self.gold_answer]
            if len(matches) != 1 or self.options.gold_text != self.gold_answer:
                raise SampleSchemaError(
                    "answer", "gold answer must equal exactly one option"
                )


def sample_from_json(obj: dict) -> Sample:
    if not isinstance(obj, dict):
        raise SampleSchemaError("record", "not a JSON object")

    def need(name: str) -> object:
        if name not in obj:
            raise SampleSchemaError(name, "missing")
        return obj[name]

    video_raw = need("video")
    if isinstance(video_raw, str):
        video = VideoRef(uri=video_raw)
    elif isinstance(video_raw, dict) and "uri" in video_raw:
        video = VideoRef(
            uri=video_raw["uri"], duration_s=video_raw.get("duration_s")
        )
    else:
        raise SampleSchemaError("video", "must be a uri string or {uri, duration_s}")

    options = None
    if obj.get("options") is not None:
        if "gold_index" not in obj:
            raise SampleSchemaError("gold_index", "missing alongside options")
        options = AnswerOptions(
            options=tuple(str(o) for o in obj["options"]),
            gold_index=int(obj["gold_index"]),
        )

    gold_chain = None
    if obj.get("gold_chain") is not None:
        try:
            gold_chain = parse_chain(str(obj["gold_chain"]))
        except ChainParseError as err:
            raise SampleSchemaError("gold_chain", str(err)) from err

    return Sample(
        id=str(need("id")),
        dataset=str(need("dataset")),
        split=str(need("split")),
        video=video,
        question=str(need("question")),
        gold_answer=str(need("answer")),
        options=options,
        gold_chain=gold_chain,
        video_surrogate=(
            None if obj.get("video_surrogate") is None else str(obj["video_surrogate"])
        ),
    )


def sample_to_json(sample: Sample) -> dict:
    """Stable field order; the chain is stored in canonical form."""
    out: dict = {
        "id": sample.id,
        "dataset": sample.dataset,
        "split": sample.split,
    }
    if sample.video.duration_s is None:
        out["video"] = sample.video.uri
    else:
        out["video"] = {"uri": sample.video.uri, "duration_s": sample.video.duration_s}
    if sample.video_surrogate is not None:
        out["video_surrogate"] = sample.video_surrogate
    out["question"] = sample.question
    out["answer"] = sample.gold_answer
    if sample.options is not None:
        out["options"] = list(sample.options.options)
        out["gold_index"] = sample.options.gold_index
    if sample.gold_chain is not None:
        out["gold_chain"] = serialize_chain(sample.gold_chain)
    return out


@dataclass(frozen=True)
class SchemaViolation:
    line: int
    field: str
    reason: str


@dataclass
class LoadResult:
    samples: list[Sample] = field(default_factory=list)
    errors: list[SchemaViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def load_samples(path: str | Path, expected_dataset: str | None = None) -> LoadResult:
    """Load a JSONL corpus, validating every record.

    Bad lines never abort the load: each yields a SchemaViolation with its
    line number while the remaining lines keep loading.
    """
    result = LoadResult()
    seen_ids: set[str] = set()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise FileNotFoundError(f"cannot read corpus {path}: {err}") from err
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            result.errors.append(SchemaViolation(line_no, "json", str(err)))
            continue
        try:
            sample = sample_from_json(obj)
        except SampleSchemaError as err:
            result.errors.append(SchemaViolation(line_no, err.field_name, err.reason))
            continue
        if expected_dataset is not None and sample.dataset != expected_dataset:
            result.errors.append(
                SchemaViolation(
                    line_no, "dataset",
                    f"expected {expected_dataset!r}, found {sample.dataset!r}",
                )
            )
            continue
        if sample.id in seen_ids:
            result.errors.append(
                SchemaViolation(line_no, "id.duplicate", f"duplicate id {sample.id!r}")
            )
            continue
        seen_ids.add(sample.id)
        result.samples.append(sample)
    return result


class InvalidAugmentedChain(ValueError):
    def __init__(self, sample_id: str, report: ValidationReport):
        rules = ", ".join(report.rule_ids()) or "missing chain"
        super().__init__(f"sample {sample_id!r}: chain refused ({rules})")
        self.sample_id = sample_id
        self.report = report


@dataclass(frozen=True)
class WriteSummary:
    path: str
    written: int


def write_augmented(
    path: str | Path,
    samples: Iterable[Sample],
    config: ValidationConfig = ValidationConfig(),
) -> WriteSummary:
    """Write a chain-augmented corpus atomically (temp file + rename).

    Every record must carry a chain that passes validate_chain; the first
    refusal aborts before anything reaches the target path.  A crash mid-write
    leaves the target untouched.
    """
    materialized = list(samples)
    for sample in materialized:
        if sample.gold_chain is None:
            raise InvalidAugmentedChain(sample.id, ValidationReport(violations=()))
        report = validate_chain(serialize_chain(sample.gold_chain), config)
        if not report.ok:
            raise InvalidAugmentedChain(sample.id, report)

    target = Path(path)
    tmp = target.with_name(f".{target.name}.tmp.{os.getpid()}.{uuid.uuid4().hex[:8]}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for sample in materialized:
                fh.write(json.dumps(sample_to_json(sample), ensure_ascii=False))
                fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            tmp.unlink()
    return WriteSummary(path=str(target), written=len(materialized))


# --- review-queue event log ---------------------------------------------------

ENQUEUED = "enqueued"
DECIDED = "decided"

PENDING = "pending"
APPROVED = "approved"
EDITED = "edited"
REJECTED = "rejected"

_ACTION_TO_STATE = {"approve": APPROVED, "edit": EDITED, "reject": REJECTED}


@dataclass
class ItemRecord:
    item_id: str
    sample_id: str
    attempt_no: int
    chain: str
    context: dict = field(default_factory=dict)
    state: str = PENDING
    enqueue_order: int = 0
    enqueued_at: float = 0.0
    decided_by: str | None = None
    decided_at: float | None = None
    decided_chain: str | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "sample_id": self.sample_id,
            "attempt_no": self.attempt_no,
            "chain": self.chain,
            "context": self.context,
            "state": self.state,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
            "decided_chain": self.decided_chain,
            "reason": self.reason,
        }


@dataclass
class QueueState:
    items: dict[str, ItemRecord] = field(default_factory=dict)
    anomalies: list[str] = field(default_factory=list)
    truncated_at: int | None = None
    _next_order: int = 0

    def pending_items(self) -> list[ItemRecord]:
        return sorted(
            (it for it in self.items.values() if it.state == PENDING),
            key=lambda it: it.enqueue_order,
        )

    def counts(self) -> dict[str, int]:
        counts = {PENDING: 0, APPROVED: 0, EDITED: 0, REJECTED: 0}
        for it in self.items.values():
            counts[it.state] += 1
        return counts

    def apply(self, event: dict) -> None:
        kind = event.get("kind")
        payload = event.get("payload") or {}
        if kind == ENQUEUED:
            item_id = payload.get("item_id")
            if not item_id:
                self.anomalies.append("enqueued event without item_id")
                return
            if item_id in self.items:
                self.anomalies.append(f"duplicate enqueue for {item_id}")
                return
            self.items[item_id] = ItemRecord(
                item_id=item_id,
                sample_id=payload.get("sample_id", ""),
                attempt_no=int(payload.get("attempt_no", 1)),
                chain=payload.get("chain", ""),
                context=payload.get("context") or {},
                enqueue_order=self._next_order,
                enqueued_at=float(event.get("ts", 0.0)),
            )
            self._next_order += 1
        elif kind == DECIDED:
            item_id = payload.get("item_id")
            item = self.items.get(item_id)
            if item is None:
                self.anomalies.append(f"decision for unknown item {item_id}")
                return
            if item.state != PENDING:
                self.anomalies.append(f"decision for non-pending item {item_id}")
                return
            action = payload.get("action")
            state = _ACTION_TO_STATE.get(action)
            if state is None:
                self.anomalies.append(f"unknown action {action!r} for {item_id}")
                return
            item.state = state
            item.decided_by = payload.get("reviewer")
            item.decided_at = float(event.get("ts", 0.0))
            item.decided_chain = payload.get("chain")
            item.reason = payload.get("reason")
        else:
            self.anomalies.append(f"unknown event kind {kind!r}")


def replay_queue(path: str | Path) -> QueueState:
    """Fold the event log into queue state.

    A corrupt (non-JSON) line stops the replay at the last valid line and
    records the truncation point; everything before it still counts.
    """
    state = QueueState()
    log = Path(path)
    if not log.exists():
        return state
    with open(log, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                state.truncated_at = line_no
                break
            state.apply(event)
    return state


class QueueLog:
    """Append-only writer for the review-queue event log.

    Appends serialize through an advisory lock file next to the log, so
    concurrent writers (pipeline enqueues, service decisions) never
    interleave bytes.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.lock_path = self.path.with_name(self.path.name + ".lock")

    def append(self, kind: str, payload: dict, ts: float) -> dict:
        event = {"ts": ts, "kind": kind, "payload": payload}
        line = json.dumps(event, ensure_ascii=False) + "\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.lock_path, "a+") as lock_fh:
            if fcntl is not None:
                fcntl.flock(lock_fh.fileno(), fcntl.LOCK_EX)
            try:
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
            finally:
                if fcntl is not None:
                    fcntl.flock(lock_fh.fileno(), fcntl.LOCK_UN)
        return event

    def enqueue(self, item: dict, ts: float) -> dict:
        return self.append(ENQUEUED, item, ts)

    def decide(self, item_id: str, action: str, reviewer: str, ts: float,
               chain: str | None = None, reason: str | None = None) -> dict:
        payload = {"item_id": item_id, "action": action, "reviewer": reviewer}
        if chain is not None:
            payload["chain"] = chain
        if reason is not None:
            payload["reason"] = reason
        return self.append(DECIDED, payload, ts)


# --- corpus statistics ----------------------------------------------------------

def corpus_stats(samples: Sequence[Sample]) -> dict:
    """Counts per dataset/split plus the chain-length histogram."""
    by_dataset: dict[str, int] = {}
    by_split: dict[str, int] = {}
    lengths: list[int] = []
    for sample in samples:
        by_dataset[sample.dataset] = by_dataset.get(sample.dataset, 0) + 1
        by_split[sample.split] = by_split.get(sample.split, 0) + 1
        if sample.gold_chain is not None:
            lengths.append(len(sample.gold_chain.events))

    histogram = {str(k): 0 for k in range(1, 11)}
    histogram[">10"] = 0
    for n in lengths:
        histogram[str(n) if n <= 10 else ">10"] += 1

    return {
        "n_samples": len(samples),
        "by_dataset": by_dataset,
        "by_split": by_split,
        "n_with_chain": len(lengths),
        "chain_length_histogram": histogram,
        "mean_events": (sum(lengths) / len(lengths)) if lengths else 0.0,
        "median_events": (median(lengths)) if lengths else 0.0,
    }
