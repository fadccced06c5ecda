#!/usr/bin/env python3
"""Regenerate the committed demo fixtures.

Writes fixtures/events.jsonl (a small deterministic stream with one topic
cluster, one sensitive topic, one generic topic, and background noise) and
fixtures/llm_responses.jsonl (replay fixture covering every model call the
pinned demo invocation makes).

The replay fixture is tied to the exact demo flags; rerun this script after
changing prompts, fixtures, or the demo configuration:

    python scripts/build_fixtures.py
"""
from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

from trendscope.burst import DetectionConfig
from trendscope.enrich import CATEGORIES, categorize_by_keywords
from trendscope.llm import (
    CompletionClient,
    CompletionRequest,
    CompletionResponse,
    RecordingBackend,
)
from trendscope.pipeline import (
    PipelineConfig,
    load_category_keywords,
    run_pipeline,
)
from trendscope.topics import normalize_topic

DICTIONARY = [
    line.strip()
    for line in (FIXTURES / "topic_dict.txt").read_text().splitlines()
    if line.strip()
]

DEMO_CONFIG = dict(
    detection=DetectionConfig(min_uu=5, score_threshold=1.5),
    extractor="llm",
    sensitive_mode="llm",
    generic_mode="llm",
    consolidator_mode="llm",
    describer_mode="llm",
    synthesizer_mode="llm",
)


# ----------------------------------------------------------------------
# events fixture
# ----------------------------------------------------------------------


def build_events() -> list[dict]:
    events: list[dict] = []
    counter = 0

    def post(uid: str, hour: int, country: str, caption: str, **extra) -> None:
        nonlocal counter
        counter += 1
        events.append(
            {
                "post_id": f"post-{counter:04d}",
                "user_id": uid,
                "ts": hour * 3600 + (counter * 37) % 3540 + 30,
                "country": country,
                "caption": caption,
                **extra,
            }
        )

    # steady background so the pre-filter has something to drop
    for h in range(100, 126):
        post(f"marathoner-{h}", h, "US", "training for the city marathon")
        post(f"foodie-{h}", h, "GB", "best street food stall downtown")
    # low-level chatter gives the cluster a real baseline before the burst
    for h in range(100, 122):
        post(f"wc-fan-{h}", h, "US", "world cup chatter never stops")

    burst_hours = (123, 124, 125)
    wc2026 = {123: 4, 124: 5, 125: 6}
    countries = ["US", "US", "BR", "FR", "US", "GB"]
    for h in burst_hours:
        for i in range(wc2026[h]):
            rich = i == 0
            post(
                f"wc26-{h}-{i}",
                h,
                countries[i % len(countries)],
                "world cup 2026 final countdown",
                visual_tags=["soccer", "stadium"] if rich else [],
                transcript="the world cup 2026 opener is almost here" if rich else "",
                ocr_text="WC 2026" if rich else "",
            )
        for i in range(3):
            post(f"wcfever-{h}-{i}", h, ["US", "BR", "IN"][i], "world cup fever is real")
        for i in range(2):
            post(
                f"qualifier-{h}-{i}",
                h,
                ["US", "BR"][i],
                "world cup 2026 qualifiers kick off tonight",
            )
        for i in range(2):
            post(f"messi-{h}-{i}", h, ["FR", "US"][i], "that messi goal was unreal",
                 visual_tags=["soccer"])
        for i in range(2):
            post(f"dealer-{h}-{i}", h, "US", "weapon sale this weekend only")
        for i in range(2):
            post(f"memer-{h}-{i}", h, "US", "funny videos compilation part 9")
    return events


# ----------------------------------------------------------------------
# deterministic stand-in model
# ----------------------------------------------------------------------


def _normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


def _trailing_block(prompt: str) -> list[str]:
    block = prompt.rstrip("\n").split("\n\n")[-1]
    return [line.strip() for line in block.splitlines() if line.strip()]


def _group_topics(topics: list[str]) -> list[list[str]]:
    tokens = [frozenset(t.split()) for t in topics]
    parent = list(range(len(topics)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(topics)):
        for j in range(i + 1, len(topics)):
            a, b = tokens[i], tokens[j]
            related = a <= b or b <= a or (
                len(a | b) > 0 and len(a & b) / len(a | b) >= 0.6
            )
            if related:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups: dict[int, list[str]] = {}
    for i, topic in enumerate(topics):
        groups.setdefault(find(i), []).append(topic)
    return list(groups.values())


class ScriptedModel:
    """Deterministic responses shaped like a competent model's output."""

    def __init__(self) -> None:
        self.keywords = load_category_keywords(None)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        handler = getattr(self, f"_{request.tag}")
        return CompletionResponse(text=handler(request.prompt))

    def _extract(self, prompt: str) -> str:
        text = _normalize_text(prompt)
        found = [p for p in DICTIONARY if normalize_topic(p) in text]
        return "\n".join(found[:5])

    def _sensitive(self, prompt: str) -> str:
        lines = []
        for topic in _trailing_block(prompt):
            verdict = "drop" if ("weapon" in topic or "drug" in topic) else "keep"
            lines.append(f"{verdict}: {topic}")
        return "\n".join(lines)

    def _generic(self, prompt: str) -> str:
        lines = []
        for topic in _trailing_block(prompt):
            generic = topic in ("funny videos", "daily life") or topic == "videos"
            lines.append(f"{'drop' if generic else 'keep'}: {topic}")
        return "\n".join(lines)

    def _consolidate(self, prompt: str) -> str:
        groups = _group_topics(_trailing_block(prompt))
        return "\n".join("group: " + " | ".join(group) for group in groups)

    def _describe(self, prompt: str) -> str:
        for line in prompt.splitlines():
            if line.startswith("CAPTION: "):
                return f"Clip about {line[len('CAPTION: '):].strip()}."
            if line.startswith("VISUAL_TAGS: "):
                return f"Clip showing {line[len('VISUAL_TAGS: '):].strip()}."
        return "Short video clip."

    def _synthesize(self, prompt: str) -> str:
        name = "this topic"
        members = ""
        for line in prompt.splitlines():
            if line.startswith("Trend: "):
                name = line[len("Trend: "):].strip()
            elif line.startswith("Member topics: "):
                members = line[len("Member topics: "):].strip()
        category = categorize_by_keywords(f"{name} {members}", self.keywords)
        assert category in CATEGORIES
        return (
            f"Summary: Posts about {name} are surging.\n"
            f"Details: Creators are posting heavily about {name}. "
            f"The spike is concentrated in the most recent hours.\n"
            f"Category: {category}"
        )


def main() -> int:
    events = build_events()
    events_path = FIXTURES / "events.jsonl"
    with open(events_path, "w", encoding="utf-8") as fp:
        for event in events:
            fp.write(json.dumps(event, ensure_ascii=False) + "\n")
    print(f"wrote {events_path} ({len(events)} events)")

    fixture_path = FIXTURES / "llm_responses.jsonl"
    if fixture_path.exists():
        fixture_path.unlink()
    recorder = RecordingBackend(ScriptedModel(), str(fixture_path))
    config = PipelineConfig(**DEMO_CONFIG)
    result = run_pipeline(
        str(events_path), config, client=CompletionClient(recorder)
    )
    n_responses = sum(1 for _ in open(fixture_path)) - 1
    print(f"wrote {fixture_path} ({n_responses} responses)")
    print(f"demo run: {len(result.candidates)} candidates -> "
          f"{len(result.enriched)} trends at hours {result.hours}")
    for trend in result.enriched:
        print("  ", trend.trend_name, trend.trend_category, trend.top_countries)

    # replaying the fixture must reproduce the recorded run exactly
    from trendscope.llm import ReplayBackend

    replay = run_pipeline(
        str(events_path),
        config,
        client=CompletionClient(ReplayBackend(str(fixture_path))),
    )
    assert [t.to_dict() for t in replay.enriched] == [
        t.to_dict() for t in result.enriched
    ], "replay drifted from the recording run"
    print("replay round-trip: OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
