"""Shared test fixtures: event factories, replay-fixture writing, and a
scripted local HTTP endpoint for exercising the live backend."""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from trendscope.events import PostEvent
from trendscope.llm import fixture_key, write_fixture_header

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES_DIR = REPO_ROOT / "fixtures"


def make_event(post_id: str = "p1", user_id: str = "u1", ts: int = 3600, **kw) -> PostEvent:
    kw.setdefault("caption", "hello")
    return PostEvent(post_id=post_id, user_id=user_id, ts=ts, **kw)


def write_replay_fixture(path, entries) -> str:
    """Write a replay fixture from (tag, prompt, text) triples."""
    with open(path, "w", encoding="utf-8") as fp:
        write_fixture_header(fp)
        for tag, prompt, text in entries:
            fp.write(
                json.dumps({"key": fixture_key(tag, prompt), "tag": tag, "text": text})
                + "\n"
            )
    return str(path)


class StubBackend:
    """Serves canned responses per tag and records every request."""

    def __init__(self, by_tag: dict[str, str] | None = None, default: str = "") -> None:
        self.by_tag = by_tag or {}
        self.default = default
        self.requests: list = []

    def complete(self, request):
        from trendscope.llm import CompletionResponse

        self.requests.append(request)
        return CompletionResponse(text=self.by_tag.get(request.tag, self.default))


@pytest.fixture
def scripted_server():
    """Local HTTP endpoint whose responses follow state["script"]; each entry
    is (status_code, body_bytes). An empty script answers 200 {"text": "ok"}."""
    state: dict = {"script": [], "requests": []}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            n = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(n)
            state["requests"].append((dict(self.headers), body))
            if state["script"]:
                status, payload = state["script"].pop(0)
            else:
                status, payload = 200, json.dumps({"text": "ok"}).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}/", state
    finally:
        server.shutdown()
        thread.join()
