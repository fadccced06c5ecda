"""Stage orchestration and the intermediate file formats.

Each stage (ingest, extract, detect, postprocess, enrich) is a pure function
over in-memory values plus a serializer; the single-shot run and the
stage-by-stage CLI both go through the same functions, which is what makes
chained stage outputs byte-identical to a one-shot run.
"""
from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Sequence, TextIO

from . import enrich as enrich_mod
from . import llm as llm_mod
from .burst import DetectionConfig, LiftProfile, TrendCandidate, detect
from .enrich import EnrichedTrend, enrich_trend
from .events import PostEvent, read_events
from .evaluate import Detection
from .postprocess import (
    ConsolidatedTrend,
    FilterVerdict,
    LlmConsolidator,
    LlmGenericFilter,
    LlmSensitiveFilter,
    PostprocessResult,
    PrecisionRule,
    RulesConsolidator,
    RulesGenericFilter,
    RulesSensitiveFilter,
    parse_precision_rules,
    postprocess,
)
from .store import TopicStore
from .topics import (
    DEFAULT_MAX_TOPICS,
    LlmExtractor,
    MockExtractor,
    PassthroughExtractor,
    TopicExtractor,
    extract_topics,
    load_phrase_list,
    unify_signals,
)

EXTRACTOR_MODES = ("passthrough", "mock", "llm")
FILTER_MODES = ("rules", "llm")
TEXT_MODES = ("template", "llm")


@dataclass
class PipelineConfig:
    """Every knob of a pipeline run; the config file mirrors this shape."""

    detection: DetectionConfig = field(default_factory=DetectionConfig)
    extractor: str = "mock"
    max_topics_per_post: int = DEFAULT_MAX_TOPICS
    topic_dict: str | None = None
    extract_prompt: str | None = None
    sensitive_mode: str = "rules"
    generic_mode: str = "rules"
    consolidator_mode: str = "rules"
    describer_mode: str = "template"
    synthesizer_mode: str = "template"
    blocklist: str | None = None
    generic_list: str | None = None
    consolidate_prompt: str | None = None
    consolidate_jaccard: float = 0.6
    reps_per_trend: int = enrich_mod.DEFAULT_REPS_PER_TREND
    category_keywords: str | None = None
    retention_hours: int = 336
    match_window: int = 6
    workers: int = 1
    per_category_thresholds: dict = field(default_factory=dict)
    llm: llm_mod.LlmSettings = field(default_factory=llm_mod.LlmSettings)

    def __post_init__(self) -> None:
        if self.extractor not in EXTRACTOR_MODES:
            raise ValueError(f"extractor must be one of {EXTRACTOR_MODES}")
        for name, value in (
            ("sensitive_mode", self.sensitive_mode),
            ("generic_mode", self.generic_mode),
            ("consolidator_mode", self.consolidator_mode),
        ):
            if value not in FILTER_MODES:
                raise ValueError(f"{name} must be one of {FILTER_MODES}")
        for name, value in (
            ("describer_mode", self.describer_mode),
            ("synthesizer_mode", self.synthesizer_mode),
        ):
            if value not in TEXT_MODES:
                raise ValueError(f"{name} must be one of {TEXT_MODES}")
        if self.max_topics_per_post < 1:
            raise ValueError("max_topics_per_post must be >= 1")
        if self.reps_per_trend < 1:
            raise ValueError("reps_per_trend must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.match_window < 0:
            raise ValueError("match_window must be >= 0")
        # the widest baseline reads back 2*max(N) hours, which must still be
        # inside the retention horizon at query time
        if self.retention_hours <= 2 * max(self.detection.windows):
            raise ValueError(
                "retention_hours must exceed twice the widest detection window"
            )

    def needs_llm(self) -> bool:
        return (
            self.extractor == "llm"
            or self.sensitive_mode == "llm"
            or self.generic_mode == "llm"
            or self.consolidator_mode == "llm"
            or self.describer_mode == "llm"
            or self.synthesizer_mode == "llm"
        )


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fp:
        obj = json.load(fp)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return obj


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config file values, then explicit overrides (CLI flags)."""
    merged: dict = {}
    detection: dict = {}
    llm_settings: dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key == "detection":
                if not isinstance(value, dict):
                    raise ValueError("'detection' must be an object")
                detection.update(value)
            elif key == "llm":
                if not isinstance(value, dict):
                    raise ValueError("'llm' must be an object")
                llm_settings.update(value)
            else:
                merged[key] = value

    det_fields = {f.name for f in dataclasses.fields(DetectionConfig)}
    unknown = set(detection) - det_fields
    if unknown:
        raise ValueError(f"unknown detection config keys: {sorted(unknown)}")
    if "windows" in detection:
        detection["windows"] = tuple(int(n) for n in detection["windows"])

    llm_fields = {f.name for f in dataclasses.fields(llm_mod.LlmSettings)}
    unknown = set(llm_settings) - llm_fields
    if unknown:
        raise ValueError(f"unknown llm config keys: {sorted(unknown)}")

    cfg_fields = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(merged) - (cfg_fields - {"detection", "llm"})
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    return PipelineConfig(
        detection=DetectionConfig(**detection),
        llm=llm_mod.LlmSettings(**llm_settings),
        **merged,
    )


def config_as_dict(config: PipelineConfig) -> dict:
    out = dataclasses.asdict(config)
    out["detection"]["windows"] = list(config.detection.windows)
    return out


def load_prompt(name: str, override_path: str | None = None) -> str:
    if override_path:
        with open(override_path, encoding="utf-8") as fp:
            return fp.read()
    return (resources.files("trendscope") / "prompts" / f"{name}.txt").read_text(
        encoding="utf-8"
    )


def load_category_keywords(path: str | None = None) -> dict[str, str]:
    if path:
        with open(path, encoding="utf-8") as fp:
            obj = json.load(fp)
    else:
        obj = json.loads(
            (resources.files("trendscope") / "assets" / "category_keywords.json")
            .read_text(encoding="utf-8")
        )
    if not isinstance(obj, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in obj.items()
    ):
        raise ValueError("category keywords must map keyword strings to categories")
    return obj


# ----------------------------------------------------------------------
# component assembly
# ----------------------------------------------------------------------


def build_llm_client(config: PipelineConfig) -> llm_mod.CompletionClient:
    if config.needs_llm():
        return llm_mod.build_client(config.llm)
    return llm_mod.null_client()


def make_extractor(
    config: PipelineConfig, client: llm_mod.CompletionClient
) -> TopicExtractor:
    if config.extractor == "passthrough":
        return PassthroughExtractor()
    if config.extractor == "mock":
        dictionary = load_phrase_list(config.topic_dict) if config.topic_dict else []
        return MockExtractor(dictionary)
    return LlmExtractor(
        client,
        load_prompt("extract", config.extract_prompt),
        max_topics=config.max_topics_per_post,
    )


def make_filters(config: PipelineConfig, client: llm_mod.CompletionClient):
    if config.sensitive_mode == "llm":
        sensitive = LlmSensitiveFilter(client, load_prompt("sensitive"))
    else:
        entries = load_phrase_list(config.blocklist) if config.blocklist else []
        sensitive = RulesSensitiveFilter(entries)
    if config.generic_mode == "llm":
        generic = LlmGenericFilter(client, load_prompt("generic"))
    else:
        entries = load_phrase_list(config.generic_list) if config.generic_list else []
        generic = RulesGenericFilter(entries)
    return sensitive, generic


def make_consolidator(
    config: PipelineConfig, client: llm_mod.CompletionClient, store: TopicStore
):
    rules = RulesConsolidator(
        user_lookup=lambda topic, hour: store.window_users(
            topic, hour, config.detection.agg_hours
        ),
        jaccard_threshold=config.consolidate_jaccard,
    )
    if config.consolidator_mode == "llm":
        return LlmConsolidator(
            client, load_prompt("consolidate", config.consolidate_prompt), rules
        )
    return rules


def make_enrichers(config: PipelineConfig, client: llm_mod.CompletionClient):
    keywords = load_category_keywords(config.category_keywords)
    template_synth = enrich_mod.TemplateSynthesizer(keywords)
    if config.describer_mode == "llm":
        describer = enrich_mod.LlmDescriber(client, load_prompt("describe"))
    else:
        describer = enrich_mod.TemplateDescriber()
    if config.synthesizer_mode == "llm":
        synthesizer = enrich_mod.LlmSynthesizer(
            client, load_prompt("synthesize"), template_synth
        )
    else:
        synthesizer = template_synth
    return describer, synthesizer


# ----------------------------------------------------------------------
# stage: extract
# ----------------------------------------------------------------------


@dataclass(slots=True)
class ExtractedPost:
    """What detection needs to know about one post: who, when, where, topics."""

    post_id: str
    user_id: str
    ts: int
    country: str
    topics: list[str]


def extract_posts(
    events: Iterable[PostEvent],
    extractor: TopicExtractor,
    max_topics: int,
    workers: int = 1,
) -> Iterator[ExtractedPost]:
    """Extract topics for each event, preserving input order regardless of
    worker count (results are reassembled in submission order)."""

    def one(event: PostEvent) -> ExtractedPost:
        topics = extract_topics(unify_signals(event), event, extractor, max_topics)
        return ExtractedPost(
            post_id=event.post_id,
            user_id=event.user_id,
            ts=event.ts,
            country=event.country,
            topics=topics,
        )

    if workers <= 1:
        for event in events:
            yield one(event)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(one, events, chunksize=64)


def extracted_to_json(post: ExtractedPost) -> str:
    return json.dumps(
        {
            "post_id": post.post_id,
            "user_id": post.user_id,
            "ts": post.ts,
            "country": post.country,
            "topics": post.topics,
        },
        ensure_ascii=False,
    )


def read_extracted(fp: TextIO) -> Iterator[ExtractedPost]:
    for line in fp:
        if not line.strip():
            continue
        obj = json.loads(line)
        yield ExtractedPost(
            post_id=obj["post_id"],
            user_id=obj["user_id"],
            ts=int(obj["ts"]),
            country=obj.get("country", ""),
            topics=list(obj.get("topics", [])),
        )


def build_store(
    extracted: Iterable[ExtractedPost], retention_hours: int
) -> TopicStore:
    store = TopicStore(retention_hours=retention_hours)
    for post in extracted:
        for topic in post.topics:
            store.record(topic, post.user_id, post.country, post.ts)
    return store


# ----------------------------------------------------------------------
# stage: detect
# ----------------------------------------------------------------------


def resolve_detection_hours(
    store: TopicStore,
    at_hour: int | None = None,
    every_hours: int | None = None,
    from_hour: int | None = None,
    to_hour: int | None = None,
) -> list[int]:
    """Detection ticks: a single --at-hour, or an --every-hours cadence over
    [from, to] (defaulting to the store's observed hour range), or by default
    one tick at the newest observed hour."""
    if at_hour is not None and every_hours is not None:
        raise ValueError("pass either at_hour or every_hours, not both")
    if at_hour is not None:
        return [at_hour]
    last_hours = [
        series.last_seen
        for series in (store.get(t) for t in store.topics())
        if series is not None and series.last_seen is not None
    ]
    if not last_hours:
        return []
    newest = max(last_hours)
    if every_hours is None:
        return [newest if to_hour is None else min(newest, to_hour)]
    if every_hours < 1:
        raise ValueError("every_hours must be >= 1")
    first_hours = [
        series.first_seen
        for series in (store.get(t) for t in store.topics())
        if series is not None and series.first_seen is not None
    ]
    start = from_hour if from_hour is not None else min(first_hours)
    end = to_hour if to_hour is not None else newest
    return list(range(start, end + 1, every_hours))


def detect_at_hours(
    store: TopicStore, config: DetectionConfig, hours: Sequence[int]
) -> list[TrendCandidate]:
    candidates: list[TrendCandidate] = []
    for hour in hours:
        candidates.extend(detect(store, config, hour))
    return candidates


def candidate_to_json(candidate: TrendCandidate) -> str:
    profile = [
        {"window": n, "lift": pair[0], "weight": pair[1]}
        for n, pair in sorted(candidate.lift_profile.per_window.items())
    ]
    obj = {
        "topic": candidate.topic,
        "detect_hour": candidate.detect_hour,
        "uu_now": candidate.uu_now,
        "trend_score": candidate.trend_score,
        "lift_profile": profile,
    }
    if candidate.category is not None:
        obj["category"] = candidate.category
    return json.dumps(obj, ensure_ascii=False)


def read_candidates(fp: TextIO) -> Iterator[TrendCandidate]:
    for line in fp:
        if not line.strip():
            continue
        obj = json.loads(line)
        profile = LiftProfile(
            per_window={
                int(entry["window"]): (float(entry["lift"]), float(entry["weight"]))
                for entry in obj["lift_profile"]
            }
        )
        yield TrendCandidate(
            topic=obj["topic"],
            detect_hour=int(obj["detect_hour"]),
            uu_now=int(obj["uu_now"]),
            lift_profile=profile,
            trend_score=float(obj["trend_score"]),
            category=obj.get("category"),
        )


# ----------------------------------------------------------------------
# stage: postprocess / enrich serializers
# ----------------------------------------------------------------------


def verdict_to_json(verdict: FilterVerdict) -> str:
    return json.dumps(
        {
            "topic": verdict.topic,
            "keep": verdict.keep,
            "reason": verdict.reason.value,
            "source": verdict.source.value,
        },
        ensure_ascii=False,
    )


def trend_to_json(trend: ConsolidatedTrend) -> str:
    return json.dumps(
        {
            "representative": trend.representative,
            "members": trend.members,
            "trend_score": trend.trend_score,
            "uu_now": trend.uu_now,
            "detect_hour": trend.detect_hour,
        },
        ensure_ascii=False,
    )


def read_trends(fp: TextIO) -> Iterator[ConsolidatedTrend]:
    for line in fp:
        if not line.strip():
            continue
        obj = json.loads(line)
        yield ConsolidatedTrend(
            representative=obj["representative"],
            members=list(obj["members"]),
            trend_score=float(obj["trend_score"]),
            uu_now=int(obj["uu_now"]),
            detect_hour=int(obj["detect_hour"]),
        )


def enriched_to_json(trend: EnrichedTrend) -> str:
    return json.dumps(trend.to_dict(), ensure_ascii=False)


def read_enriched(fp: TextIO) -> Iterator[EnrichedTrend]:
    for line in fp:
        if not line.strip():
            continue
        obj = json.loads(line)
        yield EnrichedTrend(**{name: obj[name] for name in enrich_mod.TREND_FIELDS})


def read_detections(fp: TextIO) -> list[Detection]:
    """Detections for evaluation from any of the three trend-shaped files
    (candidates, consolidated trends, or enriched records)."""
    detections: list[Detection] = []
    for line in fp:
        if not line.strip():
            continue
        obj = json.loads(line)
        if "detect_hour" in obj and "topic" in obj:
            detections.append(
                Detection(topics=(obj["topic"],), detect_hour=int(obj["detect_hour"]))
            )
        elif "representative" in obj:
            topics = tuple(dict.fromkeys([obj["representative"], *obj["members"]]))
            detections.append(
                Detection(topics=topics, detect_hour=int(obj["detect_hour"]))
            )
        elif "trend_name" in obj:
            detections.append(
                Detection(
                    topics=(obj["trend_name"],),
                    detect_hour=int(obj["detection_time"]) // 3600,
                )
            )
        else:
            raise ValueError("unrecognized detection record shape")
    return detections


# ----------------------------------------------------------------------
# one-shot run
# ----------------------------------------------------------------------


@dataclass(slots=True)
class RunResult:
    extracted: list[ExtractedPost]
    store: TopicStore
    candidates: list[TrendCandidate]
    post: PostprocessResult
    enriched: list[EnrichedTrend]
    hours: list[int]
    manifest: dict


def run_pipeline(
    events_path: str,
    config: PipelineConfig,
    at_hour: int | None = None,
    every_hours: int | None = None,
    from_hour: int | None = None,
    to_hour: int | None = None,
    client: llm_mod.CompletionClient | None = None,
) -> RunResult:
    """Execute extract -> detect -> postprocess -> enrich over one events file."""
    if client is None:
        client = build_llm_client(config)
    extractor = make_extractor(config, client)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    with open(events_path, encoding="utf-8") as fp:
        events = list(read_events(fp))
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    extracted = list(
        extract_posts(events, extractor, config.max_topics_per_post, config.workers)
    )
    store = build_store(extracted, config.retention_hours)
    timings["extract"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    hours = resolve_detection_hours(store, at_hour, every_hours, from_hour, to_hour)
    candidates = detect_at_hours(store, config.detection, hours)
    timings["detect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sensitive, generic = make_filters(config, client)
    consolidator = make_consolidator(config, client, store)
    rules = parse_precision_rules(config.per_category_thresholds)
    post = postprocess(
        candidates, sensitive, generic, config.detection, consolidator, rules
    )
    timings["postprocess"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    describer, synthesizer = make_enrichers(config, client)
    posts = [(event, extracted[i].topics) for i, event in enumerate(events)]
    enriched = [
        enrich_trend(
            trend,
            posts,
            store,
            config.detection.agg_hours,
            describer,
            synthesizer,
            config.reps_per_trend,
        )
        for trend in post.trends
    ]
    timings["enrich"] = time.perf_counter() - t0

    manifest = {
        "config": config_as_dict(config),
        "detection_hours": hours,
        "counts": {
            "events": len(events),
            "posts_with_topics": sum(1 for p in extracted if p.topics),
            "topics_in_store": len(store),
            "candidates": len(candidates),
            "removed_by_filters": len(post.removed),
            "retained_after_precision": len(post.retained_candidates),
            "consolidated_trends": len(post.trends),
            "enriched_trends": len(enriched),
        },
        "timings_s": {stage: round(seconds, 6) for stage, seconds in timings.items()},
    }
    return RunResult(
        extracted=extracted,
        store=store,
        candidates=candidates,
        post=post,
        enriched=enriched,
        hours=hours,
        manifest=manifest,
    )
