"""Trend enrichment: representative posts, descriptions, and the output record.

The published record carries exactly seven fields (trend_name, detection_time,
trend_score, trend_summary, trend_details, top_countries, trend_category).
Country ranking is always computed from the store, never asked of a model:
counting is cheap to do exactly, and models cannot be audited for it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .events import PostEvent, hour_bucket
from .llm import CompletionClient, CompletionRequest, LlmError
from .postprocess import ConsolidatedTrend
from .store import TopicStore
from .topics import unify_signals

logger = logging.getLogger(__name__)

CATEGORIES = (
    "sports",
    "entertainment",
    "news",
    "music",
    "fashion",
    "food",
    "gaming",
    "technology",
    "lifestyle",
    "other",
)

TREND_FIELDS = (
    "trend_name",
    "detection_time",
    "trend_score",
    "trend_summary",
    "trend_details",
    "top_countries",
    "trend_category",
)

TREND_SCHEMA: dict = {
    "type": "object",
    "properties": {
        "trend_name": {"type": "string", "minLength": 1},
        "detection_time": {"type": "integer", "minimum": 0},
        "trend_score": {"type": "number", "minimum": 0},
        "trend_summary": {"type": "string", "minLength": 1},
        "trend_details": {"type": "string", "minLength": 1},
        "top_countries": {
            "type": "array",
            "items": {"type": "string", "minLength": 1},
            "maxItems": 3,
        },
        "trend_category": {"enum": list(CATEGORIES)},
    },
    "required": list(TREND_FIELDS),
    "additionalProperties": False,
}

MAX_DESCRIPTION_CHARS = 500
DEFAULT_REPS_PER_TREND = 10
TOP_COUNTRIES_LIMIT = 3


@dataclass(slots=True)
class EnrichedTrend:
    trend_name: str
    detection_time: int
    trend_score: float
    trend_summary: str
    trend_details: str
    top_countries: list[str]
    trend_category: str

    def to_dict(self) -> dict:
        return {
            "trend_name": self.trend_name,
            "detection_time": self.detection_time,
            "trend_score": self.trend_score,
            "trend_summary": self.trend_summary,
            "trend_details": self.trend_details,
            "top_countries": self.top_countries,
            "trend_category": self.trend_category,
        }


def select_representative_videos(
    trend: ConsolidatedTrend,
    posts: Sequence[tuple[PostEvent, list[str]]],
    agg_hours: int,
    k: int = DEFAULT_REPS_PER_TREND,
) -> list[tuple[PostEvent, list[str]]]:
    """Up to k posts backing the trend: posted inside the detection window,
    topic overlap with the members, most recent first, one per user."""
    members = set(trend.members)
    lo = trend.detect_hour - agg_hours + 1
    matching = [
        (event, topics)
        for event, topics in posts
        if lo <= hour_bucket(event.ts) <= trend.detect_hour
        and members.intersection(topics)
    ]
    matching.sort(key=lambda pair: (-pair[0].ts, pair[0].post_id))
    picked: list[tuple[PostEvent, list[str]]] = []
    seen_users: set[str] = set()
    for event, topics in matching:
        if event.user_id in seen_users:
            continue
        seen_users.add(event.user_id)
        picked.append((event, topics))
        if len(picked) >= k:
            break
    return picked


# ----------------------------------------------------------------------
# per-post descriptions
# ----------------------------------------------------------------------


def _template_description(event: PostEvent) -> str:
    parts: list[str] = []
    if event.visual_tags:
        parts.append(f"Post about: {' '.join(event.visual_tags)}.")
    if event.caption:
        parts.append(f"Caption: {event.caption}")
    if event.hashtags:
        parts.append(f"Hashtags: {' '.join(tag.lstrip('#') for tag in event.hashtags)}")
    if event.transcript:
        parts.append(f"Transcript: {event.transcript}")
    if event.ocr_text:
        parts.append(f"On-screen text: {event.ocr_text}")
    if not parts:
        if event.topics:
            parts.append(f"Post about topic: {', '.join(event.topics)}")
        else:
            parts.append("Short video post.")
    return " ".join(parts)[:MAX_DESCRIPTION_CHARS].rstrip()


class TemplateDescriber:
    """Deterministic description assembled from the post's own signals."""

    def describe(self, event: PostEvent) -> str:
        return _template_description(event)


class LlmDescriber:
    """Model-written description; falls back to the template per post on
    failure or explicit refusal (empty text)."""

    def __init__(self, client: CompletionClient, prompt_template: str) -> None:
        self.client = client
        self.prompt_template = prompt_template

    def describe(self, event: PostEvent) -> str:
        prompt = self.prompt_template.format(unified=unify_signals(event).render())
        try:
            response = self.client.complete(
                CompletionRequest(prompt=prompt, tag="describe")
            )
        except LlmError as exc:
            logger.warning("description call failed for post %s (%s); using template",
                           event.post_id, exc)
            return _template_description(event)
        text = response.text.strip()[:MAX_DESCRIPTION_CHARS].rstrip()
        if not text:
            logger.warning("model declined to describe post %s; using template",
                           event.post_id)
            return _template_description(event)
        return text


# ----------------------------------------------------------------------
# country ranking (always exact, never model-derived)
# ----------------------------------------------------------------------


def top_countries(
    store: TopicStore,
    members: Sequence[str],
    detect_hour: int,
    agg_hours: int,
    limit: int = TOP_COUNTRIES_LIMIT,
) -> list[str]:
    """Countries ranked by distinct posting users across the member topics in
    the detection window; count ties break lexicographically."""
    counts = store.country_user_counts(members, detect_hour, agg_hours)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [country for country, _ in ranked[:limit]]


# ----------------------------------------------------------------------
# summary / details / category
# ----------------------------------------------------------------------


def categorize_by_keywords(
    trend_name: str, keyword_map: Mapping[str, str] | None
) -> str:
    """First keyword (in map order) appearing as a token of the trend name
    decides the category; unknown names fall back to 'other'."""
    if keyword_map:
        tokens = set(trend_name.split())
        for keyword, category in keyword_map.items():
            if keyword in tokens and category in CATEGORIES:
                return category
    return "other"


class TemplateSynthesizer:
    """Deterministic summary/details/category without any model call."""

    def __init__(self, category_keywords: Mapping[str, str] | None = None) -> None:
        self.category_keywords = dict(category_keywords or {})

    def synthesize(
        self,
        trend: ConsolidatedTrend,
        descriptions: Sequence[str],
    ) -> tuple[str, str, str]:
        summary = (
            f"Spike in posts about '{trend.representative}' with "
            f"{trend.uu_now} unique users in the current window."
        )
        details = f"Related topics: {', '.join(trend.members)}."
        if descriptions:
            details += f" Based on {len(descriptions)} representative posts."
        category = categorize_by_keywords(trend.representative, self.category_keywords)
        return summary, details, category


class LlmSynthesizer:
    """Model-written summary; falls back to the template when the response is
    not a parseable three-field answer."""

    def __init__(
        self,
        client: CompletionClient,
        prompt_template: str,
        fallback: TemplateSynthesizer,
    ) -> None:
        self.client = client
        self.prompt_template = prompt_template
        self.fallback = fallback

    def synthesize(
        self,
        trend: ConsolidatedTrend,
        descriptions: Sequence[str],
    ) -> tuple[str, str, str]:
        prompt = self.prompt_template.format(
            name=trend.representative,
            members=", ".join(trend.members),
            descriptions="\n".join(descriptions) or "(none)",
            categories=", ".join(CATEGORIES),
        )
        try:
            response = self.client.complete(
                CompletionRequest(prompt=prompt, tag="synthesize")
            )
        except LlmError as exc:
            logger.warning("synthesis call failed for %r (%s); using template",
                           trend.representative, exc)
            return self.fallback.synthesize(trend, descriptions)
        parsed = _parse_synthesis(response.text)
        if parsed is None:
            logger.warning("unparseable synthesis for %r; using template",
                           trend.representative)
            return self.fallback.synthesize(trend, descriptions)
        summary, details, category = parsed
        if category not in CATEGORIES:
            category = "other"
        return summary, details, category


def _parse_synthesis(text: str) -> tuple[str, str, str] | None:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        key, sep, rest = line.partition(":")
        if not sep:
            continue
        key = key.strip().lower()
        if key in ("summary", "details", "category") and key not in fields:
            fields[key] = rest.strip()
    if not all(fields.get(k) for k in ("summary", "details", "category")):
        return None
    return fields["summary"], fields["details"], fields["category"].lower()


def synthesize_trend(
    trend: ConsolidatedTrend,
    descriptions: Sequence[str],
    store: TopicStore,
    agg_hours: int,
    synthesizer: TemplateSynthesizer | LlmSynthesizer,
) -> EnrichedTrend:
    """Assemble the final seven-field record for one consolidated trend."""
    summary, details, category = synthesizer.synthesize(trend, descriptions)
    return EnrichedTrend(
        trend_name=trend.representative,
        detection_time=trend.detect_hour * 3600,
        trend_score=trend.trend_score,
        trend_summary=summary,
        trend_details=details,
        top_countries=top_countries(store, trend.members, trend.detect_hour, agg_hours),
        trend_category=category,
    )


def enrich_trend(
    trend: ConsolidatedTrend,
    posts: Sequence[tuple[PostEvent, list[str]]],
    store: TopicStore,
    agg_hours: int,
    describer: TemplateDescriber | LlmDescriber,
    synthesizer: TemplateSynthesizer | LlmSynthesizer,
    reps_per_trend: int = DEFAULT_REPS_PER_TREND,
) -> EnrichedTrend:
    """Describe the trend's representative posts and produce the output record."""
    reps = select_representative_videos(trend, posts, agg_hours, reps_per_trend)
    descriptions = [describer.describe(event) for event, _ in reps]
    return synthesize_trend(trend, descriptions, store, agg_hours, synthesizer)
