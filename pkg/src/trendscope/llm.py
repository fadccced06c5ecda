"""Completion client: the single seam between the pipeline and any model API.

Every model call in the system goes through CompletionClient, so swapping the
backend (live HTTP, recorded replay) swaps it everywhere at once. The replay
backend keys fixtures on a stable 64-bit hash of (tag, prompt); a miss fails
loudly rather than silently calling out to the network.

Fixture key hash (pinned, do not change without bumping the fixture version):
    blake2b(tag_utf8 + b"\\x1f" + prompt_utf8, digest_size=8).hexdigest()
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

import requests

logger = logging.getLogger(__name__)

VALID_TAGS = frozenset(
    {"extract", "sensitive", "generic", "consolidate", "describe", "synthesize"}
)

FIXTURE_FORMAT = "llm-replay-fixture"
FIXTURE_VERSION = 1
FIXTURE_KEY_HASH = "blake2b-64(tag + 0x1f + prompt)"

ENV_ENDPOINT = "TREND_LLM_ENDPOINT"
ENV_API_KEY = "TREND_LLM_API_KEY"
ENV_MODEL = "TREND_LLM_MODEL"

DEFAULT_TIMEOUT_MS = 30_000
DEFAULT_CONCURRENCY = 8
MAX_ATTEMPTS = 3


class LlmError(Exception):
    """Base class for completion failures."""


class LlmTransportError(LlmError):
    """Timeouts or connection failures that survived retries."""


class LlmServiceError(LlmError):
    """The endpoint answered, but not with a usable completion."""


class FixtureMissError(LlmError):
    """Replay backend has no recorded response for a request."""


@dataclass(slots=True)
class CompletionRequest:
    prompt: str
    tag: str
    max_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.tag not in VALID_TAGS:
            raise ValueError(f"unknown request tag {self.tag!r}")
        # Determinism contract: the pipeline never samples.
        if self.temperature != 0.0:
            raise ValueError("temperature must be 0")


@dataclass(slots=True)
class CompletionResponse:
    text: str
    latency_ms: float = 0.0


def fixture_key(tag: str, prompt: str) -> str:
    """Stable 64-bit key for (tag, prompt), hex-encoded."""
    h = hashlib.blake2b(digest_size=8)
    h.update(tag.encode("utf-8"))
    h.update(b"\x1f")
    h.update(prompt.encode("utf-8"))
    return h.hexdigest()


def canonical_body(model: str, request: CompletionRequest) -> str:
    """Bit-stable request body: fixed field order, no whitespace drift."""
    return json.dumps(
        {
            "model": model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": 0,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


class HttpBackend:
    """POSTs a plain completion body and reads back {"text": ...}.

    Retries up to MAX_ATTEMPTS on timeout, connection failure, 429, and 5xx
    with exponential backoff; other non-2xx statuses fail immediately.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        backoff_s: float = 0.25,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT, "")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "default")
        if not self.endpoint:
            raise ValueError(f"no completion endpoint; set {ENV_ENDPOINT} or pass endpoint=")
        self.timeout_ms = timeout_ms
        self.backoff_s = backoff_s
        self.session = session or requests.Session()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        body = canonical_body(self.model, request)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: LlmError | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            started = time.monotonic()
            try:
                resp = self.session.post(
                    self.endpoint,
                    data=body.encode("utf-8"),
                    headers=headers,
                    timeout=self.timeout_ms / 1000.0,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = LlmTransportError(f"request failed: {exc}")
                logger.warning("completion attempt %d failed: %s", attempt + 1, exc)
                continue
            latency_ms = (time.monotonic() - started) * 1000.0
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = LlmServiceError(f"endpoint returned {resp.status_code}")
                logger.warning(
                    "completion attempt %d got status %d", attempt + 1, resp.status_code
                )
                continue
            if not 200 <= resp.status_code < 300:
                raise LlmServiceError(f"endpoint returned {resp.status_code}")
            try:
                payload = resp.json()
                text = payload["text"]
            except (ValueError, KeyError) as exc:
                raise LlmServiceError(f"malformed completion payload: {exc}") from exc
            if not isinstance(text, str):
                raise LlmServiceError("completion 'text' field is not a string")
            return CompletionResponse(text=text, latency_ms=latency_ms)
        assert last_error is not None
        raise last_error


class ReplayBackend:
    """Serves responses recorded in a fixture file; a miss is an error."""

    def __init__(self, path: str) -> None:
        self.path = path
        self.responses: dict[str, str] = {}
        with open(path, encoding="utf-8") as fp:
            header_line = fp.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: fixture header is not JSON") from exc
            if header.get("format") != FIXTURE_FORMAT:
                raise ValueError(f"{path}: not a replay fixture file")
            if header.get("version") != FIXTURE_VERSION:
                raise ValueError(
                    f"{path}: fixture version {header.get('version')} unsupported"
                )
            for line in fp:
                if not line.strip():
                    continue
                entry = json.loads(line)
                self.responses[entry["key"]] = entry["text"]

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = fixture_key(request.tag, request.prompt)
        if key not in self.responses:
            raise FixtureMissError(
                f"no recorded response for tag={request.tag!r} key={key} in {self.path}"
            )
        return CompletionResponse(text=self.responses[key])


def write_fixture_header(fp) -> None:
    fp.write(
        json.dumps(
            {
                "format": FIXTURE_FORMAT,
                "version": FIXTURE_VERSION,
                "key_hash": FIXTURE_KEY_HASH,
            }
        )
        + "\n"
    )


class RecordingBackend:
    """Wraps a live backend and appends (tag, key, text) to a fixture file."""

    def __init__(self, inner: CompletionBackend, path: str) -> None:
        self.inner = inner
        self.path = path
        self._lock = threading.Lock()
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            with open(path, "w", encoding="utf-8") as fp:
                write_fixture_header(fp)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        entry = json.dumps(
            {
                "key": fixture_key(request.tag, request.prompt),
                "tag": request.tag,
                "text": response.text,
            },
            ensure_ascii=False,
        )
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fp:
                fp.write(entry + "\n")
        return response


@dataclass(slots=True)
class _NullClient:
    """Placeholder that fails on first use; lets stages that never call the
    model run without any LLM configuration."""

    reason: str = "no completion backend configured"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise LlmServiceError(self.reason)


class CompletionClient:
    """Backend plus a global in-flight concurrency cap."""

    def __init__(
        self, backend: CompletionBackend, concurrency: int = DEFAULT_CONCURRENCY
    ) -> None:
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.backend = backend
        self._gate = threading.BoundedSemaphore(concurrency)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._gate:
            return self.backend.complete(request)


@dataclass(slots=True)
class LlmSettings:
    """CLI/config-facing knobs for assembling a client."""

    backend: str = "replay"
    fixtures: str | None = None
    record: str | None = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    concurrency: int = DEFAULT_CONCURRENCY
    endpoint: str | None = None
    api_key: str | None = None
    model: str | None = None


def build_client(settings: LlmSettings) -> CompletionClient:
    """Assemble a client from settings; env vars fill unset HTTP fields."""
    backend: CompletionBackend
    if settings.backend == "replay":
        if not settings.fixtures:
            raise ValueError("replay backend needs a fixtures path (--llm-fixtures)")
        backend = ReplayBackend(settings.fixtures)
    elif settings.backend == "http":
        backend = HttpBackend(
            endpoint=settings.endpoint,
            api_key=settings.api_key,
            model=settings.model,
            timeout_ms=settings.timeout_ms,
        )
        if settings.record:
            backend = RecordingBackend(backend, settings.record)
    else:
        raise ValueError(f"unknown llm backend {settings.backend!r}")
    return CompletionClient(backend, concurrency=settings.concurrency)


def null_client() -> CompletionClient:
    return CompletionClient(_NullClient())
