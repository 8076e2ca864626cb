"""Shared fixtures: tiny taxonomies, deterministic backends, a local HTTP stub."""

from __future__ import annotations

import json
import re
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from intentkit.agent import (
    EMPTY_RETRIEVAL_TEXT,
    FORMAT_REMINDER,
    MUST_RETRIEVE_REMINDER,
    NO_TOOL_REMINDER,
)
from intentkit.embedding import EmbedderSpec
from intentkit.library import IntentHistoryLibrary
from intentkit.llm import render_answer, render_tool_call
from intentkit.types import Context, IntentExplanation, IntentRecord, Taxonomy


@pytest.fixture
def colors():
    return Taxonomy("colors", ("red", "green", "blue", "amber"))


@pytest.fixture
def embedder():
    return EmbedderSpec(backend="hashed_bow", dim=64)


def make_record(user, action, label, split="train", explanation=None, background=""):
    exp = IntentExplanation(explanation) if explanation else None
    ctx = Context(user=user, situational_text=background, action_text=action)
    return IntentRecord(context=ctx, gt_label=label, explanation=exp, split=split)


_TOOL_LINE_RE = re.compile(r"^1\. \((?P<user>[^,]+), (?P<label>[^,]+), ")


class EvidenceBackend:
    """Answers with the top retrieved label; retrieves when it has none.

    On the opening user message it emits a retrieval call over a fixed
    option list. Once a tool response arrives it answers with the label of
    the top-ranked hit (or a fixed fallback label when the response is
    empty). If retrieval is refused or the output is bounced for format,
    it answers the fallback directly. Stateless across calls, so one
    instance can serve any number of episodes concurrently.
    """

    def __init__(self, options, fallback_label, explanation=""):
        self.options = tuple(options)
        self.fallback = fallback_label
        self.explanation = explanation

    def _answer(self, label, n):
        return [render_answer(label, self.explanation)] * n

    def complete(self, request):
        last = request.messages[-1]
        n = request.n_samples
        if last.role == "tool":
            if last.content == EMPTY_RETRIEVAL_TEXT:
                return self._answer(self.fallback, n)
            match = _TOOL_LINE_RE.match(last.content)
            assert match, f"unparseable tool response: {last.content!r}"
            return self._answer(match.group("label"), n)
        if last.content in (NO_TOOL_REMINDER, FORMAT_REMINDER):
            return self._answer(self.fallback, n)
        if last.content == MUST_RETRIEVE_REMINDER:
            return [render_tool_call(self.options)] * n
        return [render_tool_call(self.options)] * n


class SpyLibrary(IntentHistoryLibrary):
    """Library wrapper that records the option list of every retrieval."""

    def __init__(self, taxonomy, embedder):
        super().__init__(taxonomy, embedder)
        self.retrieve_calls: list[tuple[str, tuple[str, ...]]] = []

    def retrieve(self, user, options, query_text, k=3):
        self.retrieve_calls.append((user, tuple(options)))
        return super().retrieve(user, options, query_text, k=k)


@contextmanager
def json_http_server(responder):
    """Serve POST requests with responder(path, payload) -> (status, body).

    body may be a dict (sent as JSON) or a raw string. The server runs on a
    daemon thread on an ephemeral port; the context yields its base URL and
    a list of (path, payload) requests seen, in order.
    """
    seen = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length) or b"{}")
            seen.append((self.path, payload))
            status, body = responder(self.path, payload)
            raw = body if isinstance(body, str) else json.dumps(body)
            data = raw.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):  # keep pytest output clean
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", seen
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
