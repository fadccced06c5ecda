"""Topic extraction: signal unification, topic normalization, extractors.

A post's textual signals are folded into one labeled document (UnifiedText)
that both the mock and the model-backed extractor consume. Topic strings are
normalized into a canonical form before they ever reach the time-series store,
so "#WorldCup  2026" and "worldcup 2026" land in different series only if they
really differ after normalization.
"""
from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from typing import Protocol

from .events import PostEvent
from .llm import CompletionClient, CompletionRequest

logger = logging.getLogger(__name__)

# Labeled section order is fixed; omitting empty signals keeps prompts short.
SECTION_LABELS = ("CAPTION", "HASHTAGS", "VISUAL_TAGS", "TRANSCRIPT", "OCR")

MAX_TOPIC_CHARS = 80
DEFAULT_MAX_TOPICS = 5


class TopicRejected(ValueError):
    """Raised when a raw topic normalizes to the empty string."""


@dataclass(slots=True)
class UnifiedText:
    """Ordered labeled sections built from a post's non-empty signals."""

    sections: list[tuple[str, str]] = field(default_factory=list)

    def render(self) -> str:
        return "\n".join(f"{label}: {text}" for label, text in self.sections)


def unify_signals(event: PostEvent) -> UnifiedText:
    """Fold the post's non-empty signals into labeled sections, fixed order."""
    sections: list[tuple[str, str]] = []
    if event.caption:
        sections.append(("CAPTION", event.caption))
    if event.hashtags:
        tags = " ".join(tag.lstrip("#") for tag in event.hashtags)
        if tags.strip():
            sections.append(("HASHTAGS", tags))
    if event.visual_tags:
        sections.append(("VISUAL_TAGS", " ".join(event.visual_tags)))
    if event.transcript:
        sections.append(("TRANSCRIPT", event.transcript))
    if event.ocr_text:
        sections.append(("OCR", event.ocr_text))
    return UnifiedText(sections)


def normalize_topic(raw: str) -> str:
    """Canonicalize a topic: lowercase, drop leading '#', collapse whitespace,
    NFC-normalize, cap at 80 chars. Raises TopicRejected if nothing is left."""
    s = raw.lower().strip().lstrip("#")
    s = " ".join(s.split())
    s = unicodedata.normalize("NFC", s)
    s = s[:MAX_TOPIC_CHARS].rstrip()
    if not s:
        raise TopicRejected(f"topic normalizes to empty: {raw!r}")
    return s


def _normalize_for_match(text: str) -> str:
    return unicodedata.normalize("NFC", " ".join(text.lower().split()))


class TopicExtractor(Protocol):
    def extract(self, unified: UnifiedText, event: PostEvent) -> list[str]:
        """Return raw candidate topics (normalization happens in the caller)."""


class PassthroughExtractor:
    """Trust the event's pre-extracted topics; posts without them yield none."""

    def extract(self, unified: UnifiedText, event: PostEvent) -> list[str]:
        return list(event.topics or [])


class MockExtractor:
    """Deterministic extractor: hashtags plus dictionary phrase matches.

    Dictionary phrases are normalized at load time and matched as plain
    substrings of the normalized unified text, in dictionary order.
    """

    def __init__(self, dictionary: list[str] | None = None) -> None:
        self.phrases: list[str] = []
        seen: set[str] = set()
        for entry in dictionary or []:
            try:
                phrase = normalize_topic(entry)
            except TopicRejected:
                continue
            if phrase not in seen:
                seen.add(phrase)
                self.phrases.append(phrase)

    def extract(self, unified: UnifiedText, event: PostEvent) -> list[str]:
        found = list(event.hashtags)
        if self.phrases:
            text = _normalize_for_match(unified.render())
            for phrase in self.phrases:
                if phrase in text:
                    found.append(phrase)
        return found


class LlmExtractor:
    """Model-backed extractor; client errors propagate, parse failures do not."""

    def __init__(
        self,
        client: CompletionClient,
        prompt_template: str,
        max_topics: int = DEFAULT_MAX_TOPICS,
    ) -> None:
        self.client = client
        self.prompt_template = prompt_template
        self.max_topics = max_topics

    def extract(self, unified: UnifiedText, event: PostEvent) -> list[str]:
        prompt = self.prompt_template.format(
            max_topics=self.max_topics, unified=unified.render()
        )
        response = self.client.complete(CompletionRequest(prompt=prompt, tag="extract"))
        lines = [ln.strip().lstrip("-*").strip() for ln in response.text.splitlines()]
        topics = [ln for ln in lines if ln]
        if response.text.strip() and not topics:
            logger.warning(
                "unparseable extraction output for post %s; dropping", event.post_id
            )
        return topics


def extract_topics(
    unified: UnifiedText,
    event: PostEvent,
    extractor: TopicExtractor,
    max_topics: int = DEFAULT_MAX_TOPICS,
) -> list[str]:
    """Run an extractor and return at most `max_topics` normalized, deduplicated
    topics. Raw candidates that normalize to empty are dropped silently; an
    LLM transport failure propagates (the caller decides whether to abort)."""
    raw = extractor.extract(unified, event)
    out: list[str] = []
    seen: set[str] = set()
    for candidate in raw:
        try:
            topic = normalize_topic(candidate)
        except TopicRejected:
            continue
        if topic not in seen:
            seen.add(topic)
            out.append(topic)
        if len(out) >= max_topics:
            break
    return out


def load_phrase_list(path: str) -> list[str]:
    """Read a newline-delimited phrase file; '#!' comment lines and blanks are
    skipped ('#' alone can be a legitimate hashtag entry). Order is preserved
    (it drives match precedence)."""
    phrases: list[str] = []
    with open(path, encoding="utf-8") as fp:
        for line in fp:
            entry = line.strip()
            if not entry or entry.startswith("#!"):
                continue
            phrases.append(entry)
    return phrases
