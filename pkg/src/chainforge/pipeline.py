"""Orchestration: the chain-construction loop, two-stage QA inference, and
the experiment harnesses (upper bound, masking sweep, chain-quality eval).

Construction runs generate -> programmatic validation -> cross-model
verification -> human verification, regenerating on any failure up to
``max_attempts`` (exhaustion is an explicit terminal state, never an endless
loop).  Every attempt is recorded with per-stage outcomes so runs are
auditable after the fact.
"""

from __future__ import annotations

import csv
import enum
import json
import random
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .backends import (
    AnswerParseError,
    Backend,
    BackendError,
    ChainFormatError,
    VerifierParseError,
    answer,
    extract_chain,
    generate_chain,
    verify_chain,
)
from .chain import CausalChain, serialize_chain
from .datastore import QueueLog, Sample, replay_queue
from .metrics import (
    CoherenceJudge,
    MetricReport,
    accuracy as accuracy_metric,
    cauco_score,
    score_pair,
)
from .validate import (
    ValidationConfig,
    ValidationReport,
    validate_against_qa,
    validate_chain,
)

Clock = Callable[[], float]

MASK_TOKEN = "MASKED"

# verifier stage statuses
ACCEPT = "accept"
REJECT = "reject"
SKIPPED = "skipped"

# human stage statuses
H_APPROVED = "approved"
H_EDITED = "edited"
H_REJECTED = "rejected"
H_SKIPPED = "skipped"


@dataclass(frozen=True)
class StageStatus:
    status: str
    reason: str | None = None
    chain: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"status": self.status}
        if self.reason is not None:
            out["reason"] = self.reason
        if self.chain is not None:
            out["chain"] = self.chain
        return out


@dataclass(frozen=True)
class ConstructionAttempt:
    attempt_no: int
    raw_output: str
    parse_ok: bool
    validation: ValidationReport
    verifier: StageStatus
    human: StageStatus
    started_at: float
    finished_at: float

    def to_dict(self) -> dict:
        return {
            "attempt_no": self.attempt_no,
            "raw_output": self.raw_output,
            "parse_ok": self.parse_ok,
            "validation": self.validation.to_dict(),
            "verifier": self.verifier.to_dict(),
            "human": self.human.to_dict(),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


@dataclass(frozen=True)
class ConstructionRecord:
    sample_id: str
    attempts: tuple[ConstructionAttempt, ...]
    final_chain: CausalChain | None
    max_attempts: int
    error: str | None = None

    @property
    def exhausted(self) -> bool:
        return self.final_chain is None

    def to_dict(self) -> dict:
        if self.final_chain is not None:
            final = {"status": "chain", "chain": serialize_chain(self.final_chain)}
        else:
            final = {"status": "exhausted"}
            if self.error:
                final["error"] = self.error
        return {
            "sample_id": self.sample_id,
            "max_attempts": self.max_attempts,
            "final": final,
            "attempts": [a.to_dict() for a in self.attempts],
        }


@dataclass(frozen=True)
class ReviewRequest:
    """What the human stage gets to see for one candidate chain."""

    sample_id: str
    attempt_no: int
    chain: CausalChain
    question: str
    gold_answer: str
    video_uri: str
    video_surrogate: str | None
    prior_reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class HumanOutcome:
    status: str  # approved | edited | rejected | skipped
    chain: CausalChain | None = None
    reason: str | None = None


class HumanStage(Protocol):
    def decide(self, request: ReviewRequest) -> HumanOutcome: ...


class DisabledHumanStage:
    """Human verification switched off; recorded as a policy skip."""

    reason = "disabled"

    def decide(self, request: ReviewRequest) -> HumanOutcome:
        del request
        return HumanOutcome(status=H_SKIPPED, reason=self.reason)


class AutoApproveHumanStage(DisabledHumanStage):
    """Headless runs: the stage exists but approves by policy.  Records the
    skip so runs stay honest about which checks actually ran."""

    reason = "auto_approve"


class ScriptedHumanStage:
    """Test double: per-sample decision sequences."""

    def __init__(self, outcomes: dict[str, Sequence[HumanOutcome]]):
        self._outcomes = {k: list(v) for k, v in outcomes.items()}

    def decide(self, request: ReviewRequest) -> HumanOutcome:
        queue = self._outcomes.get(request.sample_id)
        if not queue:
            return HumanOutcome(status=H_APPROVED)
        return queue.pop(0) if len(queue) > 1 else queue[0]


class QueueHumanStage:
    """Parks candidate chains in the review queue and resumes on decision.

    Decisions come from whichever reviewer process appends to the same event
    log (normally the review service); this stage tails the log.
    """

    def __init__(
        self,
        queue_log: QueueLog,
        poll_interval: float = 0.2,
        timeout_s: float | None = None,
        clock: Clock = time.time,
    ):
        self.queue_log = queue_log
        self.poll_interval = poll_interval
        self.timeout_s = timeout_s
        self.clock = clock

    def decide(self, request: ReviewRequest) -> HumanOutcome:
        item_id = f"{request.sample_id}-a{request.attempt_no}-{uuid.uuid4().hex[:8]}"
        self.queue_log.enqueue(
            {
                "item_id": item_id,
                "sample_id": request.sample_id,
                "attempt_no": request.attempt_no,
                "chain": serialize_chain(request.chain),
                "context": {
                    "question": request.question,
                    "gold_answer": request.gold_answer,
                    "video_uri": request.video_uri,
                    "video_surrogate": request.video_surrogate,
                    "prior_reasons": list(request.prior_reasons),
                },
            },
            ts=self.clock(),
        )
        deadline = None if self.timeout_s is None else time.monotonic() + self.timeout_s
        while True:
            state = replay_queue(self.queue_log.path)
            item = state.items.get(item_id)
            if item is not None and item.state != "pending":
                if item.state == "approved":
                    return HumanOutcome(status=H_APPROVED)
                if item.state == "edited":
                    from .chain import parse_chain

                    return HumanOutcome(
                        status=H_EDITED, chain=parse_chain(item.decided_chain or "")
                    )
                return HumanOutcome(status=H_REJECTED, reason=item.reason)
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError(f"no review decision for {item_id}")
            time.sleep(self.poll_interval)


@dataclass(frozen=True)
class PipelineConfig:
    max_attempts: int = 5
    worker_pool_size: int = 4
    validation: ValidationConfig = ValidationConfig()
    template_dir: str | None = None

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.worker_pool_size < 1:
            raise ValueError("worker_pool_size must be >= 1")


def _merge_reports(a: ValidationReport, b: ValidationReport) -> ValidationReport:
    return ValidationReport(violations=a.violations + b.violations, chain=a.chain)


def construct_chain_for_sample(
    sample: Sample,
    generator: Backend,
    verifier: Backend,
    config: PipelineConfig = PipelineConfig(),
    human: HumanStage | None = None,
    clock: Clock = time.time,
) -> ConstructionRecord:
    """Run the full generate/validate/verify/review loop for one sample."""
    human = human or DisabledHumanStage()
    attempts: list[ConstructionAttempt] = []
    feedback: list[str] = []

    for attempt_no in range(1, config.max_attempts + 1):
        started = clock()
        try:
            raw = generate_chain(
                generator,
                sample.question,
                sample.gold_answer,
                feedback=feedback,
                template_dir=config.template_dir,
            ).text
        except BackendError as err:
            return ConstructionRecord(
                sample_id=sample.id,
                attempts=tuple(attempts),
                final_chain=None,
                max_attempts=config.max_attempts,
                error=f"generator: {err}",
            )

        report = validate_chain(raw, config.validation)
        parse_ok = report.chain is not None
        if parse_ok and report.ok:
            report = _merge_reports(
                report,
                validate_against_qa(
                    report.chain, sample.question, sample.gold_answer,
                    config.validation,
                ),
            )
        if not report.ok:
            reason = "parse_failed" if not parse_ok else "validation_failed"
            attempts.append(
                ConstructionAttempt(
                    attempt_no=attempt_no,
                    raw_output=raw,
                    parse_ok=parse_ok,
                    validation=report,
                    verifier=StageStatus(SKIPPED, reason=reason),
                    human=StageStatus(H_SKIPPED, reason=reason),
                    started_at=started,
                    finished_at=clock(),
                )
            )
            continue

        chain = report.chain
        assert chain is not None
        try:
            decision = verify_chain(
                verifier, sample.question, sample.gold_answer, chain,
                template_dir=config.template_dir,
            )
        except VerifierParseError as err:
            decision = None
            verifier_status = StageStatus(REJECT, reason=f"verifier unparseable: {err}")
        except BackendError as err:
            attempts.append(
                ConstructionAttempt(
                    attempt_no=attempt_no,
                    raw_output=raw,
                    parse_ok=True,
                    validation=report,
                    verifier=StageStatus(SKIPPED, reason="backend_error"),
                    human=StageStatus(H_SKIPPED, reason="backend_error"),
                    started_at=started,
                    finished_at=clock(),
                )
            )
            return ConstructionRecord(
                sample_id=sample.id,
                attempts=tuple(attempts),
                final_chain=None,
                max_attempts=config.max_attempts,
                error=f"verifier: {err}",
            )
        else:
            if decision.accepted:
                verifier_status = StageStatus(ACCEPT)
            else:
                verifier_status = StageStatus(REJECT, reason=decision.reason)

        if verifier_status.status == REJECT:
            if verifier_status.reason:
                feedback.append(verifier_status.reason)
            attempts.append(
                ConstructionAttempt(
                    attempt_no=attempt_no,
                    raw_output=raw,
                    parse_ok=True,
                    validation=report,
                    verifier=verifier_status,
                    human=StageStatus(H_SKIPPED, reason="verifier_rejected"),
                    started_at=started,
                    finished_at=clock(),
                )
            )
            continue

        outcome = human.decide(
            ReviewRequest(
                sample_id=sample.id,
                attempt_no=attempt_no,
                chain=chain,
                question=sample.question,
                gold_answer=sample.gold_answer,
                video_uri=sample.video.uri,
                video_surrogate=sample.video_surrogate,
                prior_reasons=tuple(feedback),
            )
        )
        human_status = StageStatus(
            outcome.status,
            reason=outcome.reason,
            chain=serialize_chain(outcome.chain) if outcome.chain else None,
        )
        attempts.append(
            ConstructionAttempt(
                attempt_no=attempt_no,
                raw_output=raw,
                parse_ok=True,
                validation=report,
                verifier=verifier_status,
                human=human_status,
                started_at=started,
                finished_at=clock(),
            )
        )
        if outcome.status in (H_APPROVED, H_SKIPPED):
            return ConstructionRecord(
                sample_id=sample.id,
                attempts=tuple(attempts),
                final_chain=chain,
                max_attempts=config.max_attempts,
            )
        if outcome.status == H_EDITED:
            return ConstructionRecord(
                sample_id=sample.id,
                attempts=tuple(attempts),
                final_chain=outcome.chain,
                max_attempts=config.max_attempts,
            )
        # rejected -> regenerate with the reason in the prompt
        if outcome.reason:
            feedback.append(outcome.reason)

    return ConstructionRecord(
        sample_id=sample.id,
        attempts=tuple(attempts),
        final_chain=None,
        max_attempts=config.max_attempts,
    )


def construct_chains(
    samples: Sequence[Sample],
    generator: Backend,
    verifier: Backend,
    config: PipelineConfig = PipelineConfig(),
    human: HumanStage | None = None,
    clock: Clock = time.time,
) -> list[ConstructionRecord]:
    """Construction loop over a corpus; results come back in input order
    regardless of worker interleaving."""
    if config.worker_pool_size == 1:
        return [
            construct_chain_for_sample(s, generator, verifier, config, human, clock)
            for s in samples
        ]
    with ThreadPoolExecutor(max_workers=config.worker_pool_size) as pool:
        return list(
            pool.map(
                lambda s: construct_chain_for_sample(
                    s, generator, verifier, config, human, clock
                ),
                samples,
            )
        )


# --- two-stage QA ---------------------------------------------------------------

@dataclass(frozen=True)
class TwoStageResult:
    sample_id: str
    chain: CausalChain
    selected: int

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "chain": serialize_chain(self.chain),
            "selected": self.selected,
        }


def two_stage_answer(
    sample: Sample,
    extractor: Backend,
    answerer: Backend,
    template_dir: str | None = None,
) -> TwoStageResult:
    """Extract a chain from (video, question), then answer from the chain.

    The intermediate chain always travels with the answer; failures carry the
    sample id and partial trace for debugging.
    """
    if sample.options is None:
        raise ValueError(f"sample {sample.id} has no answer options")
    try:
        chain = extract_chain(
            extractor,
            sample.question,
            video=sample.video,
            surrogate=sample.video_surrogate,
            template_dir=template_dir,
        )
    except ChainFormatError as err:
        err.sample_id = sample.id
        raise
    try:
        selected = answer(
            answerer, sample.question, chain, sample.options.options,
            template_dir=template_dir,
        )
    except AnswerParseError as err:
        err.sample_id = sample.id
        err.chain = serialize_chain(chain)
        raise
    return TwoStageResult(sample_id=sample.id, chain=chain, selected=selected)


# --- masking -----------------------------------------------------------------

class KTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class MaskedChain:
    base: CausalChain
    masked_indices: frozenset[int]
    rendered: CausalChain


def mask_chain(chain: CausalChain, k: int, seed: int) -> MaskedChain:
    """Replace k seeded-random events with the MASKED token.

    For a fixed seed the masked index sets are nested across k (the seeded
    permutation's first k positions), so increasing k only ever hides more.
    """
    n = len(chain.events)
    if k < 0 or k >= n:
        raise KTooLarge(f"k must satisfy 0 <= k < {n}, got {k}")
    if k == 0:
        return MaskedChain(base=chain, masked_indices=frozenset(), rendered=chain)
    perm = random.Random(seed).sample(range(n), n)
    masked = frozenset(perm[:k])
    rendered = CausalChain(
        [MASK_TOKEN if i in masked else ev for i, ev in enumerate(chain.events)]
    )
    return MaskedChain(base=chain, masked_indices=masked, rendered=rendered)


# --- experiment harnesses ------------------------------------------------------

class ExperimentKind(enum.Enum):
    UPPER_BOUND = "upper_bound"
    MASKING_SWEEP = "masking_sweep"
    TWO_STAGE_QA = "two_stage_qa"
    CHAIN_QUALITY_EVAL = "chain_quality_eval"


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    dataset_path: str
    split: str | None = None
    masking_levels: tuple[int, ...] = ()
    seed: int = 0
    backend_names: dict = field(default_factory=dict)

    def __post_init__(self):
        levels = self.masking_levels
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("masking levels must be strictly increasing")
        if any(k < 0 for k in levels):
            raise ValueError("masking levels must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "dataset_path": self.dataset_path,
            "split": self.split,
            "masking_levels": list(self.masking_levels),
            "seed": self.seed,
            "backends": dict(self.backend_names),
        }


@dataclass
class UpperBoundResult:
    report: MetricReport
    excluded: list[tuple[str, str]] = field(default_factory=list)


def run_upper_bound(
    samples: Sequence[Sample],
    answerer: Backend,
    template_dir: str | None = None,
) -> UpperBoundResult:
    """Answer every sample from its ground-truth chain; the accuracy bound."""
    excluded: list[tuple[str, str]] = []
    per_sample: list[dict] = []
    predictions: list[int] = []
    gold: list[int] = []
    for sample in samples:
        if sample.gold_chain is None:
            excluded.append((sample.id, "missing_gold_chain"))
            continue
        if sample.options is None:
            excluded.append((sample.id, "missing_options"))
            continue
        entry: dict = {"id": sample.id, "gold": sample.options.gold_index}
        try:
            selected = answer(
                answerer, sample.question, sample.gold_chain,
                sample.options.options, template_dir=template_dir,
            )
        except BackendError as err:
            entry["flags"] = [f"answer_failed: {err}"]
            entry["selected"] = None
            entry["correct"] = False
            predictions.append(-1)
        else:
            entry["selected"] = selected
            entry["correct"] = selected == sample.options.gold_index
            predictions.append(selected)
        gold.append(sample.options.gold_index)
        per_sample.append(entry)
    report = MetricReport.from_per_sample(
        per_sample,
        accuracy_value=accuracy_metric(predictions, gold) if gold else None,
    )
    return UpperBoundResult(report=report, excluded=excluded)


@dataclass(frozen=True)
class SweepPoint:
    k: int
    n: int
    accuracy: float
    skipped: int = 0


@dataclass
class SweepResult:
    points: list[SweepPoint] = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        return [
            {"k": p.k, "n": p.n, "accuracy": p.accuracy} for p in self.points
        ]


def run_masking_sweep(
    samples: Sequence[Sample],
    answerer: Backend,
    levels: Sequence[int],
    seed: int,
    template_dir: str | None = None,
) -> SweepResult:
    """Accuracy as k gold-chain events are masked out, one point per level.

    Per-sample masks derive from ``seed XOR ordinal`` so adding samples never
    perturbs earlier samples' masks; chains shorter than a level are skipped
    at that level and counted.
    """
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("masking levels must be strictly increasing")
    usable = [s for s in samples if s.gold_chain is not None and s.options is not None]
    result = SweepResult()
    for k in levels:
        predictions: list[int] = []
        gold: list[int] = []
        skipped = 0
        for ordinal, sample in enumerate(usable):
            chain = sample.gold_chain
            assert chain is not None and sample.options is not None
            if k >= len(chain.events):
                skipped += 1
                continue
            masked = mask_chain(chain, k, seed ^ ordinal)
            try:
                selected = answer(
                    answerer, sample.question, masked.rendered,
                    sample.options.options, template_dir=template_dir,
                )
            except BackendError:
                selected = -1
            predictions.append(selected)
            gold.append(sample.options.gold_index)
        acc = accuracy_metric(predictions, gold) if gold else 0.0
        result.points.append(
            SweepPoint(k=k, n=len(gold), accuracy=acc, skipped=skipped)
        )
    return result


def run_chain_quality_eval(
    samples: Sequence[Sample],
    extractor: Backend,
    judge: CoherenceJudge | None = None,
    template_dir: str | None = None,
) -> MetricReport:
    """Extract a chain per sample and score it against the gold chain.

    Extractor failures score zero with a flag — never silently dropped.
    """
    per_sample: list[dict] = []
    extracted: list[CausalChain] = []
    for sample in samples:
        if sample.gold_chain is None:
            continue
        gold_text = " ".join(sample.gold_chain.events)
        try:
            candidate = extract_chain(
                extractor,
                sample.question,
                video=sample.video,
                surrogate=sample.video_surrogate,
                template_dir=template_dir,
            )
        except BackendError as err:
            per_sample.append(
                {
                    "id": sample.id,
                    "b1": 0.0, "b2": 0.0, "b3": 0.0, "b4": 0.0,
                    "rougeL": 0.0, "meteorLite": 0.0,
                    "flags": [f"extract_failed: {err}"],
                }
            )
            continue
        scores = score_pair(" ".join(candidate.events), gold_text)
        scores["id"] = sample.id
        scores["chain"] = serialize_chain(candidate)
        per_sample.append(scores)
        extracted.append(candidate)

    cauco = None
    if judge is not None and extracted:
        cauco = cauco_score(extracted, judge).score
    return MetricReport.from_per_sample(per_sample, cauco=cauco)


@dataclass
class TwoStageRunResult:
    report: MetricReport
    records: list[dict] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)


def run_two_stage(
    samples: Sequence[Sample],
    extractor: Backend,
    answerer: Backend,
    template_dir: str | None = None,
) -> TwoStageRunResult:
    """Full inference over a split: extract, answer, and score accuracy.

    Every record carries the exact chain the answerer saw.
    """
    records: list[dict] = []
    excluded: list[tuple[str, str]] = []
    predictions: list[int] = []
    gold: list[int] = []
    per_sample: list[dict] = []
    for sample in samples:
        if sample.options is None:
            excluded.append((sample.id, "missing_options"))
            continue
        try:
            result = two_stage_answer(sample, extractor, answerer, template_dir)
        except BackendError as err:
            entry = {
                "sample_id": sample.id,
                "chain": getattr(err, "chain", None),
                "selected": None,
                "gold": sample.options.gold_index,
                "correct": False,
                "flags": [f"{type(err).__name__}: {err}"],
            }
            records.append(entry)
            per_sample.append(entry)
            predictions.append(-1)
            gold.append(sample.options.gold_index)
            continue
        entry = result.to_dict()
        entry["gold"] = sample.options.gold_index
        entry["correct"] = result.selected == sample.options.gold_index
        records.append(entry)
        per_sample.append(entry)
        predictions.append(result.selected)
        gold.append(sample.options.gold_index)
    report = MetricReport.from_per_sample(
        per_sample,
        accuracy_value=accuracy_metric(predictions, gold) if gold else None,
    )
    return TwoStageRunResult(report=report, records=records, excluded=excluded)


def sample_audit(samples: Sequence[Sample], n: int, seed: int) -> list[Sample]:
    """Seeded random audit subset, mirroring an author-style spot check."""
    if n >= len(samples):
        return list(samples)
    return random.Random(seed).sample(list(samples), n)


# --- run artifacts ----------------------------------------------------------------

def write_run_artifacts(
    run_dir: str | Path,
    run_info: dict,
    records: Iterable[dict] = (),
    report: MetricReport | None = None,
    sweep: SweepResult | None = None,
) -> Path:
    """One directory per invocation: run.json, records.jsonl, report.json,
    and sweep.csv when a sweep ran."""
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(
        json.dumps(run_info, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    with open(out / "records.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
    if report is not None:
        (out / "report.json").write_text(
            json.dumps(report.to_json_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    if sweep is not None:
        with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["k", "n", "accuracy"])
            writer.writeheader()
            for row in sweep.to_rows():
                writer.writerow(row)
    return out
