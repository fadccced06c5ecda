"""Command-line interface.

Stages can run one-shot (`run`) or chained file-by-file (ingest -> extract ->
detect -> postprocess -> enrich); both paths share the same stage functions,
so chained outputs are byte-identical to a one-shot run over the same input.

Exit codes: 0 success, 1 validation error (bad input data or config),
2 I/O or service failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable

from . import __version__
from . import pipeline as pl
from .events import (
    EventParseError,
    EventValidationError,
    event_to_json,
    parse_event,
    read_events,
)
from .evaluate import (
    DEFAULT_SWEEP_THRESHOLDS,
    Detection,
    evaluate,
    read_labels,
    sweep_thresholds,
    write_sweep_csv,
)
from .llm import LlmError
from .postprocess import parse_precision_rules, postprocess
from .store import SnapshotError, TopicStore
from .synth import default_spec, generate_synthetic_stream, load_spec
from .topics import TopicRejected

logger = logging.getLogger(__name__)

USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file mirroring the run manifest")
    parser.add_argument("--workers", type=int, help="stage-internal parallelism")
    parser.add_argument("--match-window", type=int,
                        help="matching slack (hours) used by evaluation")

    det = parser.add_argument_group("detection")
    det.add_argument("--agg-hours", type=int, help="trailing aggregation window T")
    det.add_argument("--windows", help="comma-separated baseline windows, e.g. 6,12,24,72")
    det.add_argument("--lambda", dest="decay_lambda", type=float,
                     help="window weight decay rate")
    det.add_argument("--min-uu", type=int, help="unique-user floor M")
    det.add_argument("--score-threshold", type=float)
    det.add_argument("--baseline-floor", type=float)
    det.add_argument("--lift-cap", type=float)
    det.add_argument("--retention-hours", type=int)

    ext = parser.add_argument_group("extraction")
    ext.add_argument("--extractor", choices=pl.EXTRACTOR_MODES)
    ext.add_argument("--topic-dict", help="phrase dictionary for the mock extractor")
    ext.add_argument("--extract-prompt", help="prompt template file for llm extraction")
    ext.add_argument("--max-topics-per-post", type=int)

    post = parser.add_argument_group("postprocess")
    post.add_argument("--sensitive-mode", choices=pl.FILTER_MODES)
    post.add_argument("--generic-mode", choices=pl.FILTER_MODES)
    post.add_argument("--blocklist", help="sensitive term/phrase list file")
    post.add_argument("--generic-list", help="generic term list file")
    post.add_argument("--consolidator", dest="consolidator_mode", choices=pl.FILTER_MODES)
    post.add_argument("--consolidate-prompt", help="prompt template file for consolidation")
    post.add_argument("--consolidate-jaccard", type=float)
    post.add_argument("--per-category-thresholds",
                      help="JSON file of per-category precision rules")

    enr = parser.add_argument_group("enrichment")
    enr.add_argument("--describer", dest="describer_mode", choices=pl.TEXT_MODES)
    enr.add_argument("--synthesizer", dest="synthesizer_mode", choices=pl.TEXT_MODES)
    enr.add_argument("--reps-per-trend", type=int)
    enr.add_argument("--category-keywords", help="JSON keyword->category map")

    llm = parser.add_argument_group("llm")
    llm.add_argument("--llm-backend", choices=("http", "replay"))
    llm.add_argument("--llm-fixtures", help="replay fixture file")
    llm.add_argument("--llm-record", help="record live responses to this fixture file")
    llm.add_argument("--llm-timeout-ms", type=int)
    llm.add_argument("--llm-concurrency", type=int)


def _add_tick_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--at-hour", type=int, help="single detection tick (hour index)")
    parser.add_argument("--every-hours", type=int,
                        help="detection cadence over the observed hour range")
    parser.add_argument("--from-hour", type=int, help="first tick for --every-hours")
    parser.add_argument("--to-hour", type=int, help="last tick for --every-hours")


def _parse_float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _config_from_args(args: argparse.Namespace) -> pl.PipelineConfig:
    file_values = pl.load_config_file(args.config) if getattr(args, "config", None) else {}

    detection: dict = {}
    for key in ("agg_hours", "decay_lambda", "min_uu", "score_threshold",
                "baseline_floor", "lift_cap"):
        value = getattr(args, key, None)
        if value is not None:
            detection[key] = value
    windows = getattr(args, "windows", None)
    if windows is not None:
        detection["windows"] = tuple(int(n) for n in windows.split(","))

    llm: dict = {}
    for flag, key in (("llm_backend", "backend"), ("llm_fixtures", "fixtures"),
                      ("llm_record", "record"), ("llm_timeout_ms", "timeout_ms"),
                      ("llm_concurrency", "concurrency")):
        value = getattr(args, flag, None)
        if value is not None:
            llm[key] = value

    overrides: dict = {}
    for key in ("extractor", "max_topics_per_post", "topic_dict", "extract_prompt",
                "sensitive_mode", "generic_mode", "consolidator_mode", "blocklist",
                "generic_list", "consolidate_prompt", "consolidate_jaccard",
                "describer_mode", "synthesizer_mode", "reps_per_trend",
                "category_keywords", "retention_hours", "match_window", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    rules_path = getattr(args, "per_category_thresholds", None)
    if rules_path is not None:
        with open(rules_path, encoding="utf-8") as fp:
            overrides["per_category_thresholds"] = json.load(fp)
    if detection:
        overrides["detection"] = detection
    if llm:
        overrides["llm"] = llm
    return pl.build_config(file_values, overrides)


def _write_lines(path: str, lines: Iterable[str]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fp:
        for line in lines:
            fp.write(line + "\n")
            count += 1
    return count


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    ok = bad = 0
    with open(args.input, encoding="utf-8") as src, \
            open(args.output, "w", encoding="utf-8") as dst:
        for line_no, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                event = parse_event(line, line_no)
            except (EventParseError, EventValidationError):
                if not args.skip_invalid:
                    raise
                bad += 1
                continue
            dst.write(event_to_json(event) + "\n")
            ok += 1
    print(f"ingested={ok} skipped={bad}")
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    client = pl.build_llm_client(config)
    extractor = pl.make_extractor(config, client)
    with open(args.input, encoding="utf-8") as fp:
        events = list(read_events(fp))
    extracted = pl.extract_posts(
        events, extractor, config.max_topics_per_post, config.workers
    )
    count = _write_lines(args.output, (pl.extracted_to_json(p) for p in extracted))
    print(f"posts={count}")
    return 0


def _store_from_topics_file(path: str, config: pl.PipelineConfig) -> TopicStore:
    with open(path, encoding="utf-8") as fp:
        return pl.build_store(pl.read_extracted(fp), config.retention_hours)


def cmd_detect(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    store = _store_from_topics_file(args.topics, config)
    hours = pl.resolve_detection_hours(
        store, args.at_hour, args.every_hours, args.from_hour, args.to_hour
    )
    candidates = pl.detect_at_hours(store, config.detection, hours)
    _write_lines(args.output, (pl.candidate_to_json(c) for c in candidates))
    if args.snapshot_path:
        store.save_snapshot_file(args.snapshot_path)
    print(f"ticks={len(hours)} candidates={len(candidates)}")
    return 0


def cmd_postprocess(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    client = pl.build_llm_client(config)
    store = _store_from_topics_file(args.topics, config)
    with open(args.candidates, encoding="utf-8") as fp:
        candidates = list(pl.read_candidates(fp))
    sensitive, generic = pl.make_filters(config, client)
    consolidator = pl.make_consolidator(config, client, store)
    rules = parse_precision_rules(config.per_category_thresholds)
    result = postprocess(
        candidates, sensitive, generic, config.detection, consolidator, rules
    )
    _write_lines(args.output, (pl.trend_to_json(t) for t in result.trends))
    if args.verdicts:
        _write_lines(args.verdicts, (pl.verdict_to_json(v) for v in result.removed))
    print(f"candidates={len(candidates)} removed={len(result.removed)} "
          f"trends={len(result.trends)}")
    return 0


def cmd_enrich(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    client = pl.build_llm_client(config)
    store = _store_from_topics_file(args.topics, config)
    with open(args.trends, encoding="utf-8") as fp:
        trends = list(pl.read_trends(fp))
    with open(args.events, encoding="utf-8") as fp:
        events = list(read_events(fp))
    with open(args.topics, encoding="utf-8") as fp:
        topics_by_post = {p.post_id: p.topics for p in pl.read_extracted(fp)}
    posts = [(event, topics_by_post.get(event.post_id, [])) for event in events]
    describer, synthesizer = pl.make_enrichers(config, client)
    enriched = [
        pl.enrich_trend(
            trend, posts, store, config.detection.agg_hours,
            describer, synthesizer, config.reps_per_trend,
        )
        for trend in trends
    ]
    _write_lines(args.output, (pl.enriched_to_json(t) for t in enriched))
    print(f"trends={len(enriched)}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = pl.run_pipeline(
        args.input, config, args.at_hour, args.every_hours,
        args.from_hour, args.to_hour,
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_lines(str(outdir / "topics.jsonl"),
                 (pl.extracted_to_json(p) for p in result.extracted))
    _write_lines(str(outdir / "candidates.jsonl"),
                 (pl.candidate_to_json(c) for c in result.candidates))
    _write_lines(str(outdir / "verdicts.jsonl"),
                 (pl.verdict_to_json(v) for v in result.post.removed))
    _write_lines(str(outdir / "consolidated.jsonl"),
                 (pl.trend_to_json(t) for t in result.post.trends))
    _write_lines(str(outdir / "trends.jsonl"),
                 (pl.enriched_to_json(t) for t in result.enriched))
    if args.snapshot_path:
        result.store.save_snapshot_file(args.snapshot_path)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fp:
        json.dump(result.manifest, fp, indent=2, ensure_ascii=False)
        fp.write("\n")
    counts = result.manifest["counts"]
    print(f"events={counts['events']} candidates={counts['candidates']} "
          f"trends={counts['enriched_trends']}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.spec:
        spec = load_spec(args.spec)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    else:
        spec = default_spec(args.seed if args.seed is not None else 0)
    with open(args.out, "w", encoding="utf-8") as events_fp:
        if args.labels:
            with open(args.labels, "w", encoding="utf-8") as labels_fp:
                n_events, n_labels = generate_synthetic_stream(spec, events_fp, labels_fp)
        else:
            n_events, n_labels = generate_synthetic_stream(spec, events_fp, None)
    print(f"events={n_events} labels={n_labels}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    with open(args.detections, encoding="utf-8") as fp:
        detections = pl.read_detections(fp)
    with open(args.labels, encoding="utf-8") as fp:
        labels = read_labels(fp)
    report = evaluate(detections, labels, args.match_window)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fp:
            fp.write(payload + "\n")
    else:
        print(payload)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    with open(args.candidates, encoding="utf-8") as fp:
        candidates = list(pl.read_candidates(fp))
    with open(args.labels, encoding="utf-8") as fp:
        labels = read_labels(fp)
    thresholds = (
        _parse_float_list(args.thresholds)
        if args.thresholds
        else list(DEFAULT_SWEEP_THRESHOLDS)
    )
    rules = parse_precision_rules(config.per_category_thresholds)
    rows = sweep_thresholds(
        candidates, labels, thresholds, config.detection, rules, config.match_window
    )
    with open(args.output, "w", encoding="utf-8", newline="") as fp:
        write_sweep_csv(rows, fp)
    if not args.no_figure:
        from .report import render_sweep_figure

        figure_path = args.figure or str(Path(args.output).with_suffix(".png"))
        render_sweep_figure(rows, figure_path)
    print(f"thresholds={len(rows)} candidates={len(candidates)}")
    return 0


# ----------------------------------------------------------------------
# parser assembly
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trendscope",
                     description="Trend detection over short-video post streams")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO instead of WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate and canonicalize an events file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--skip-invalid", action="store_true",
                   help="drop invalid lines instead of failing")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("extract", help="extract topics per post")
    p.add_argument("--input", required=True, help="events JSONL")
    p.add_argument("--output", required=True, help="topics JSONL")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("detect", help="score topics at detection ticks")
    p.add_argument("--topics", required=True, help="topics JSONL from extract")
    p.add_argument("--output", required=True, help="candidates JSONL")
    p.add_argument("--snapshot-path", help="save the store snapshot here")
    _add_config_flags(p)
    _add_tick_flags(p)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("postprocess", help="filter, threshold, and consolidate candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--topics", required=True, help="topics JSONL (rebuilds the store)")
    p.add_argument("--output", required=True, help="consolidated trends JSONL")
    p.add_argument("--verdicts", help="write filter removal verdicts here")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_postprocess)

    p = sub.add_parser("enrich", help="produce the final seven-field trend records")
    p.add_argument("--trends", required=True, help="consolidated trends JSONL")
    p.add_argument("--events", required=True, help="original events JSONL")
    p.add_argument("--topics", required=True, help="topics JSONL")
    p.add_argument("--output", required=True, help="enriched trends JSONL")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_enrich)

    p = sub.add_parser("run", help="full pipeline over one events file")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--snapshot-path", help="save the store snapshot here")
    _add_config_flags(p)
    _add_tick_flags(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("synth", help="generate a seeded synthetic stream")
    p.add_argument("--out", required=True, help="events JSONL to write")
    p.add_argument("--labels", help="burst labels JSONL to write")
    p.add_argument("--spec", help="synthetic spec JSON file")
    p.add_argument("--seed", type=int, help="override the seed from --spec")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("eval", help="score detections against burst labels")
    p.add_argument("--detections", required=True,
                   help="candidates, consolidated, or enriched JSONL")
    p.add_argument("--labels", required=True)
    p.add_argument("--match-window", type=int, default=6)
    p.add_argument("--output", help="write the report JSON here (default stdout)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="precision/coverage across score thresholds")
    p.add_argument("--candidates", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--output", required=True, help="CSV to write")
    p.add_argument("--thresholds", help="comma-separated thresholds")
    p.add_argument("--figure", help="figure path (default: CSV path with .png)")
    p.add_argument("--no-figure", action="store_true")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except LlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EventParseError, EventValidationError, TopicRejected, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
