"""Trend detection for short-video post streams.

The package is organized by pipeline stage: `events` (ingestion model),
`topics` (extraction), `store` (per-topic unique-user series), `burst`
(multi-scale scoring), `postprocess` (filters and consolidation), `enrich`
(output records), `llm` (completion client boundary), `synth`/`evaluate`
(synthetic streams and metrics), `report` (figures), `pipeline` and `cli`.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .burst import DetectionConfig, TrendCandidate, detect, trend_score
from .enrich import EnrichedTrend
from .events import PostEvent, hour_bucket, parse_event
from .postprocess import ConsolidatedTrend
from .store import TopicStore
from .topics import extract_topics, normalize_topic, unify_signals

__all__ = [
    "__version__",
    "DetectionConfig",
    "TrendCandidate",
    "detect",
    "trend_score",
    "EnrichedTrend",
    "PostEvent",
    "hour_bucket",
    "parse_event",
    "ConsolidatedTrend",
    "TopicStore",
    "extract_topics",
    "normalize_topic",
    "unify_signals",
]
