"""Post event model and JSONL parsing.

Every record entering the pipeline is a single post creation event. Viewer-side
signals (views, likes, shares) are deliberately not part of the model: trends
are measured purely by who is posting.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, TextIO


class EventParseError(ValueError):
    """Raised when a JSONL line is not valid JSON."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class EventValidationError(ValueError):
    """Raised when a parsed record violates the event contract."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(slots=True)
class PostEvent:
    """One short-video post creation.

    `topics` is an optional list of pre-extracted topic strings; when it is
    absent the event must carry at least one non-empty content signal so an
    extractor has something to work with.
    """

    post_id: str
    user_id: str
    ts: int
    country: str = ""
    caption: str = ""
    hashtags: list[str] = field(default_factory=list)
    visual_tags: list[str] = field(default_factory=list)
    transcript: str = ""
    ocr_text: str = ""
    topics: list[str] | None = None

    def has_signal(self) -> bool:
        return bool(
            self.caption
            or self.hashtags
            or self.visual_tags
            or self.transcript
            or self.ocr_text
        )


def hour_bucket(ts: int) -> int:
    """Map epoch seconds (ts > 0) to its UTC hour index, floor(ts / 3600)."""
    return ts // 3600


def _require_str(obj: dict, key: str, line_no: int | None) -> str:
    value = obj.get(key, "")
    if value is None:
        return ""
    if not isinstance(value, str):
        raise EventValidationError(f"field {key!r} must be a string", line_no)
    return value


def _require_str_list(obj: dict, key: str, line_no: int | None) -> list[str]:
    value = obj.get(key)
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise EventValidationError(f"field {key!r} must be a list of strings", line_no)
    return value


def parse_event(line: str, line_no: int | None = None) -> PostEvent:
    """Parse one JSONL line into a validated PostEvent."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventParseError(f"malformed JSON ({exc.msg})", line_no) from exc
    if not isinstance(obj, dict):
        raise EventValidationError("event must be a JSON object", line_no)

    for key in ("post_id", "user_id", "ts"):
        if key not in obj:
            raise EventValidationError(f"missing required field {key!r}", line_no)
    post_id = obj["post_id"]
    user_id = obj["user_id"]
    ts = obj["ts"]
    if not isinstance(post_id, str) or not post_id:
        raise EventValidationError("post_id must be a non-empty string", line_no)
    if not isinstance(user_id, str) or not user_id:
        raise EventValidationError("user_id must be a non-empty string", line_no)
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise EventValidationError("ts must be an integer (epoch seconds)", line_no)
    if ts <= 0:
        raise EventValidationError("ts must be positive", line_no)

    topics_raw = obj.get("topics")
    topics: list[str] | None
    if topics_raw is None:
        topics = None
    elif isinstance(topics_raw, list) and all(isinstance(v, str) for v in topics_raw):
        topics = topics_raw
    else:
        raise EventValidationError("field 'topics' must be a list of strings", line_no)

    event = PostEvent(
        post_id=post_id,
        user_id=user_id,
        ts=ts,
        country=_require_str(obj, "country", line_no),
        caption=_require_str(obj, "caption", line_no),
        hashtags=_require_str_list(obj, "hashtags", line_no),
        visual_tags=_require_str_list(obj, "visual_tags", line_no),
        transcript=_require_str(obj, "transcript", line_no),
        ocr_text=_require_str(obj, "ocr_text", line_no),
        topics=topics,
    )
    if event.topics is None and not event.has_signal():
        raise EventValidationError(
            "event carries neither pre-extracted topics nor any content signal",
            line_no,
        )
    return event


def event_to_json(event: PostEvent) -> str:
    """Serialize an event with a stable field order; re-parsing round-trips."""
    obj: dict = {
        "post_id": event.post_id,
        "user_id": event.user_id,
        "ts": event.ts,
        "country": event.country,
        "caption": event.caption,
        "hashtags": event.hashtags,
        "visual_tags": event.visual_tags,
        "transcript": event.transcript,
        "ocr_text": event.ocr_text,
    }
    if event.topics is not None:
        obj["topics"] = event.topics
    return json.dumps(obj, ensure_ascii=False)


def read_events(fp: TextIO) -> Iterator[PostEvent]:
    """Yield validated events from a JSONL stream; blank lines are skipped."""
    for line_no, line in enumerate(fp, start=1):
        if not line.strip():
            continue
        yield parse_event(line, line_no)
