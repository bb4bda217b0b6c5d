"""Operator surface: one subcommand per pipeline capability.

Exit codes are a contract: 0 success, 1 per-record failures (with a
summary), 2 configuration or usage errors (no side effects).
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from pathlib import Path

from .backends import BackendJudge, BackendRole, ModelCircularityError
from .chain import serialize_chain
from .config import ConfigError, GlobalConfig, load_config
from .datastore import QueueLog, corpus_stats, load_samples, sample_to_json
from .perturb import (
    Lexicons,
    NoApplicableStrategy,
    generate_negatives,
    load_actors,
    load_antonyms,
)
from .pipeline import (
    AutoApproveHumanStage,
    DisabledHumanStage,
    PipelineConfig,
    QueueHumanStage,
    construct_chains,
    run_chain_quality_eval,
    run_masking_sweep,
    run_two_stage,
    run_upper_bound,
    sample_audit,
    write_run_artifacts,
)
from .service import ReviewService, ServiceAlreadyRunning, serve_review
from .validate import validate_against_qa, validate_chain

DEFAULT_CONFIG = "./chainforge.toml"


class UsageError(Exception):
    pass


def _parse_levels(raw: str) -> list[int]:
    try:
        levels = [int(x) for x in raw.split(",") if x.strip() != ""]
    except ValueError as err:
        raise UsageError(f"--levels: {err}") from err
    if not levels:
        raise UsageError("--levels: at least one level required")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise UsageError("--levels: levels must be strictly increasing")
    if levels[0] < 0:
        raise UsageError("--levels: levels must be >= 0")
    return levels


def _load_config(args) -> GlobalConfig:
    path = Path(args.config)
    if path.exists():
        return load_config(path)
    if args.config != DEFAULT_CONFIG:
        raise ConfigError(f"--config: no such file {args.config!r}")
    return GlobalConfig()


def _load_corpus(args, expected_dataset=None):
    result = load_samples(args.infile, expected_dataset)
    samples = result.samples
    if getattr(args, "split", None):
        samples = [s for s in samples if s.split == args.split]
    return samples, result.errors


def _clock(args):
    if getattr(args, "deterministic", False):
        counter = itertools.count()
        return lambda: float(next(counter))
    return time.time


def _seed(args) -> int:
    return getattr(args, "seed", 0) or 0


def _out_dir(args, cfg: GlobalConfig, command: str) -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir)
    stamp = "run" if getattr(args, "deterministic", False) else str(int(time.time()))
    return Path(cfg.paths.runs_dir) / f"{command}-{stamp}"


def _print_schema_errors(errors) -> None:
    for err in errors:
        print(f"  line {err.line}: {err.field}: {err.reason}", file=sys.stderr)


def _run_info(command: str, args, cfg: GlobalConfig, extra: dict | None = None) -> dict:
    info = {
        "command": command,
        "infile": getattr(args, "infile", None),
        "split": getattr(args, "split", None),
        "seed": _seed(args),
        "deterministic": bool(getattr(args, "deterministic", False)),
        "backends": {
            role: {"kind": b.kind, "model": b.config.model_name}
            for role, b in cfg.backends.items()
        },
        "validation": {
            "max_events": cfg.validation.max_events,
            "min_events": cfg.validation.min_events,
            "max_event_chars": cfg.validation.max_event_chars,
        },
        "pipeline": {
            "max_attempts": cfg.pipeline.max_attempts,
            "worker_pool_size": cfg.pipeline.worker_pool_size,
            "human_stage_enabled": cfg.pipeline.human_enabled,
            "human_auto_approve": cfg.pipeline.auto_approve,
        },
    }
    if extra:
        info.update(extra)
    return info


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    cfg.check_circularity()
    generator = cfg.build_backend(BackendRole.GENERATOR)
    verifier = cfg.build_backend(BackendRole.VERIFIER)
    samples, errors = _load_corpus(args)
    clock = _clock(args)

    if cfg.pipeline.human_enabled and not cfg.pipeline.auto_approve:
        human = QueueHumanStage(QueueLog(cfg.paths.queue_log), clock=clock)
    elif cfg.pipeline.human_enabled:
        human = AutoApproveHumanStage()
    else:
        human = DisabledHumanStage()

    # a deterministic run needs a single worker so the injected clock ticks
    # in sample order
    pool_size = 1 if args.deterministic else cfg.pipeline.worker_pool_size
    pipe_cfg = PipelineConfig(
        max_attempts=cfg.pipeline.max_attempts,
        worker_pool_size=pool_size,
        validation=cfg.validation,
    )
    records = construct_chains(samples, generator, verifier, pipe_cfg, human, clock)
    constructed = sum(1 for r in records if not r.exhausted)
    exhausted = len(records) - constructed
    out = write_run_artifacts(
        _out_dir(args, cfg, "generate"),
        _run_info("generate", args, cfg),
        records=(r.to_dict() for r in records),
    )
    summary = {
        "constructed": constructed,
        "exhausted": exhausted,
        "schemaErrors": len(errors),
        "totalAttempts": sum(len(r.attempts) for r in records),
    }
    (out / "report.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    print(f"{constructed} constructed, {exhausted} exhausted -> {out}")
    _print_schema_errors(errors)
    return 0 if exhausted == 0 and not errors else 1


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    result = load_samples(args.infile)
    passed = 0
    failed = 0
    for err in result.errors:
        failed += 1
    _print_schema_errors(result.errors)
    for sample in result.samples:
        if sample.gold_chain is None:
            passed += 1
            continue
        report = validate_chain(serialize_chain(sample.gold_chain), cfg.validation)
        if report.ok:
            report = validate_against_qa(
                sample.gold_chain, sample.question, sample.gold_answer, cfg.validation
            )
        if report.ok:
            passed += 1
        else:
            failed += 1
            rules = ",".join(report.rule_ids())
            print(f"  {sample.id}: {rules}", file=sys.stderr)
    print(f"{passed} passed, {failed} failed")
    return 0 if failed == 0 else 1


def cmd_perturb(args) -> int:
    _load_config(args)  # config not needed beyond validity check
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    lexicons = Lexicons(
        actors=load_actors(args.actors) if args.actors else (),
        antonyms=load_antonyms(args.antonyms) if args.antonyms else {},
    )
    failures = len(errors)
    written = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            if sample.gold_chain is None:
                continue
            try:
                negatives = generate_negatives(
                    sample.gold_chain, args.count, _seed(args), lexicons
                )
            except NoApplicableStrategy as err:
                print(f"  {sample.id}: {err}", file=sys.stderr)
                failures += 1
                continue
            if len(negatives) < args.count:
                print(
                    f"  {sample.id}: shortfall {len(negatives)}/{args.count}",
                    file=sys.stderr,
                )
                failures += 1
            for neg in negatives:
                fh.write(
                    json.dumps(
                        {
                            "sample_id": sample.id,
                            "label": False,
                            "strategy": neg.strategy.value,
                            "seed": neg.seed,
                            "chain": serialize_chain(neg.result),
                            "original": serialize_chain(neg.original),
                            "details": neg.details,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                written += 1
    print(f"{written} negatives -> {args.out}")
    return 0 if failures == 0 else 1


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    extractor = cfg.build_backend(BackendRole.EXTRACTOR)
    judge = None
    if BackendRole.JUDGE.value in cfg.backends:
        judge = BackendJudge(cfg.build_backend(BackendRole.JUDGE))
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    report = run_chain_quality_eval(samples, extractor, judge)
    out = write_run_artifacts(
        _out_dir(args, cfg, "evaluate"),
        _run_info("evaluate", args, cfg),
        records=report.per_sample,
        report=report,
    )
    print(report.render_table())
    print(f"-> {out}")
    flagged = sum(1 for s in report.per_sample if s.get("flags"))
    return 0 if flagged == 0 and not errors else 1


def cmd_qa(args) -> int:
    cfg = _load_config(args)
    extractor = cfg.build_backend(BackendRole.EXTRACTOR)
    answerer = cfg.build_backend(BackendRole.ANSWERER)
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    result = run_two_stage(samples, extractor, answerer)
    out = write_run_artifacts(
        _out_dir(args, cfg, "qa"),
        _run_info("qa", args, cfg, {"excluded": result.excluded}),
        records=result.records,
        report=result.report,
    )
    print(result.report.render_table())
    print(f"-> {out}")
    flagged = sum(1 for s in result.records if s.get("flags"))
    return 0 if flagged == 0 and not result.excluded and not errors else 1


def cmd_upper_bound(args) -> int:
    cfg = _load_config(args)
    answerer = cfg.build_backend(BackendRole.ANSWERER)
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    result = run_upper_bound(samples, answerer)
    out = write_run_artifacts(
        _out_dir(args, cfg, "upper-bound"),
        _run_info("upper-bound", args, cfg, {"excluded": result.excluded}),
        records=result.report.per_sample,
        report=result.report,
    )
    print(result.report.render_table())
    if result.excluded:
        print(f"{len(result.excluded)} samples excluded", file=sys.stderr)
    print(f"-> {out}")
    return 0 if not result.excluded and not errors else 1


def cmd_mask_sweep(args) -> int:
    levels = _parse_levels(args.levels)
    cfg = _load_config(args)
    answerer = cfg.build_backend(BackendRole.ANSWERER)
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    sweep = run_masking_sweep(samples, answerer, levels, _seed(args))
    out = write_run_artifacts(
        _out_dir(args, cfg, "mask-sweep"),
        _run_info("mask-sweep", args, cfg, {"levels": levels}),
        records=sweep.to_rows(),
        sweep=sweep,
    )
    for point in sweep.points:
        print(f"k={point.k}  n={point.n}  accuracy={point.accuracy:.4f}")
    print(f"-> {out}")
    return 0 if not errors else 1


def cmd_stats(args) -> int:
    _load_config(args)
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    print(json.dumps(corpus_stats(samples), indent=2))
    return 0 if not errors else 1


def cmd_sample_audit(args) -> int:
    _load_config(args)
    samples, errors = _load_corpus(args)
    _print_schema_errors(errors)
    subset = sample_audit(samples, args.n, _seed(args))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for sample in subset:
            fh.write(json.dumps(sample_to_json(sample), ensure_ascii=False) + "\n")
    print(f"{len(subset)} samples -> {args.out}")
    return 0 if not errors else 1


def cmd_review_serve(args) -> int:
    cfg = _load_config(args)
    queue_path = args.queue_log or cfg.paths.queue_log
    service = ReviewService(QueueLog(queue_path), validation=cfg.validation)
    try:
        server = serve_review(
            service, port=args.port, host=args.host, ui_dir=args.ui_dir
        )
    except ServiceAlreadyRunning as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    host, port = server.server_address[:2]
    print(f"review service on http://{host}:{port} (queue log: {queue_path})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainforge",
        description="Causal-chain construction, perturbation, scoring and QA harnesses",
    )
    parser.add_argument("--config", default=DEFAULT_CONFIG, help="config file path")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_corpus(p, split=True):
        p.add_argument("--in", dest="infile", required=True, help="corpus JSONL")
        if split:
            p.add_argument("--split", default=None, help="filter to one split")

    p = sub.add_parser("generate", help="construct chains over a corpus")
    add_corpus(p)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="batch-validate a corpus")
    add_corpus(p, split=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("perturb", help="emit negative-sample chains")
    add_corpus(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--actors", default=None, help="actor lexicon file")
    p.add_argument("--antonyms", default=None, help="antonym lexicon file")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("evaluate", help="chain-quality evaluation run")
    add_corpus(p)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("qa", help="two-stage QA inference over a corpus")
    add_corpus(p)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("upper-bound", help="answer from ground-truth chains")
    add_corpus(p)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_upper_bound)

    p = sub.add_parser("mask-sweep", help="accuracy vs masked chain events")
    add_corpus(p)
    p.add_argument("--levels", required=True, help="comma-separated, increasing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_mask_sweep)

    p = sub.add_parser("stats", help="corpus statistics")
    add_corpus(p, split=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample-audit", help="export a seeded audit subset")
    add_corpus(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_audit)

    review = sub.add_parser("review", help="review-queue service")
    review_sub = review.add_subparsers(dest="review_command", required=True)
    p = review_sub.add_parser("serve", help="run the review HTTP service")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--queue-log", default=None)
    p.add_argument("--ui-dir", default=None, help="serve a built UI from this dir")
    p.set_defaults(func=cmd_review_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ConfigError, ModelCircularityError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
