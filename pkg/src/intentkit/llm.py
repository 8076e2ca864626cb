"""Chat model backends: a deterministic scripted mock and an HTTP client.

Both expose one method, ``complete(request) -> list[str]``, returning one
assistant output string per requested sample. The scripted backend walks a
fixed list of canned steps and is the workhorse for tests; the remote
backend speaks the common chat-completions JSON shape.

Tool calls can arrive from a remote server either as structured
``tool_calls`` entries or as plain text in the assistant content. The
client normalizes the structured form into the inline textual form, so the
output parser downstream only ever has to understand one surface.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    DataFormatError,
    RemoteUnavailableError,
    RequestTimeoutError,
    ScriptExhaustedError,
)
from .types import Message

TOOL_NAME = "retrieve_intent_context"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 512
    n_samples: int = 1
    tools: tuple[dict, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


# --- canned output rendering ---------------------------------------------


def render_answer(label: str, explanation: str = "") -> str:
    """Final-answer surface form: tagged label plus optional explanation."""
    text = f"<answer>{label}</answer>"
    if explanation:
        text += f"\n<intent_explanation>{explanation}</intent_explanation>"
    return text


def render_tool_call(options, user: str | None = None) -> str:
    """Inline textual form of a retrieval invocation."""
    rendered_options = ", ".join(f'"{opt}"' for opt in options)
    if user is not None:
        return f'{TOOL_NAME}(user="{user}", intent_options=[{rendered_options}])'
    return f"{TOOL_NAME}(intent_options=[{rendered_options}])"


# --- scripted backend ------------------------------------------------------


@dataclass(frozen=True)
class ToolCallStep:
    options: tuple[str, ...]
    user: str | None = None


@dataclass(frozen=True)
class AnswerStep:
    label: str
    explanation: str = ""


@dataclass(frozen=True)
class MalformedStep:
    text: str = "It could be one of several intents, hard to say."


Step = ToolCallStep | AnswerStep | MalformedStep


def render_step(step: Step) -> str:
    if isinstance(step, ToolCallStep):
        return render_tool_call(step.options, step.user)
    if isinstance(step, AnswerStep):
        return render_answer(step.label, step.explanation)
    return step.text


class ScriptedLLM:
    """Replays a fixed step list, one step per completion call.

    Each call consumes exactly one step regardless of n_samples: all
    samples of that call are identical copies of the rendered step. Running
    past the end raises ScriptExhaustedError, which in a test means the
    episode used more model turns than the script author expected.
    """

    def __init__(self, steps):
        self._steps = list(steps)
        self._cursor = 0
        self._lock = threading.Lock()

    @property
    def steps_remaining(self) -> int:
        return len(self._steps) - self._cursor

    def complete(self, request: ChatRequest) -> list[str]:
        with self._lock:
            if self._cursor >= len(self._steps):
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self._steps)} steps"
                )
            step = self._steps[self._cursor]
            self._cursor += 1
        return [render_step(step)] * request.n_samples


def step_from_dict(payload: dict) -> Step:
    kind = payload.get("kind")
    if kind == "tool_call":
        options = payload.get("options")
        if not isinstance(options, list) or not options:
            raise DataFormatError("tool_call step needs a non-empty options list")
        return ToolCallStep(options=tuple(options), user=payload.get("user"))
    if kind == "answer":
        if "label" not in payload:
            raise DataFormatError("answer step needs a label")
        return AnswerStep(
            label=payload["label"], explanation=payload.get("explanation", "")
        )
    if kind == "malformed":
        return MalformedStep(text=payload.get("text", MalformedStep().text))
    raise DataFormatError(f"unknown script step kind {kind!r}")


def load_script(path: str | Path) -> list[Step]:
    """Read a JSON array of step objects from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise DataFormatError(f"{path}: script must be a JSON array of steps")
    try:
        return [step_from_dict(item) for item in payload]
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# --- remote backend --------------------------------------------------------


def _normalize_choice(message: dict) -> str:
    """Flatten one response message into a single assistant text block."""
    parts = []
    content = message.get("content")
    if content:
        parts.append(content)
    for call in message.get("tool_calls") or []:
        function = call.get("function") or {}
        name = function.get("name", "")
        arguments = function.get("arguments")
        if isinstance(arguments, str):
            try:
                arguments = json.loads(arguments)
            except json.JSONDecodeError:
                arguments = None
        if name == TOOL_NAME and isinstance(arguments, dict):
            options = arguments.get("intent_options") or []
            parts.append(render_tool_call(options, arguments.get("user")))
        else:
            parts.append(f"{name}({json.dumps(arguments)})")
    return "\n".join(parts)


class RemoteLLM:
    """Chat-completions HTTP client with bounded retries.

    Connection failures, timeouts, and 5xx responses are retried with
    exponential backoff; 4xx responses fail immediately since resending the
    same payload cannot help.
    """

    def __init__(
        self,
        endpoint_url: str,
        model: str,
        timeout_ms: int = 60_000,
        retries: int = 2,
        backoff_s: float = 0.25,
    ):
        self.endpoint_url = endpoint_url
        self.model = model
        self.timeout_ms = timeout_ms
        self.retries = retries
        self.backoff_s = backoff_s

    def _payload(self, request: ChatRequest) -> dict:
        payload = {
            "model": self.model,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
            "n": request.n_samples,
            "max_tokens": request.max_tokens,
        }
        if request.tools is not None:
            payload["tools"] = list(request.tools)
        return payload

    def complete(self, request: ChatRequest) -> list[str]:
        payload = self._payload(request)
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    self.endpoint_url, json=payload, timeout=self.timeout_ms / 1000.0
                )
            except requests.Timeout:
                last_error = RequestTimeoutError(
                    f"chat request timed out after {self.timeout_ms} ms",
                    self.timeout_ms,
                )
                continue
            except requests.RequestException as exc:
                last_error = RemoteUnavailableError(
                    f"chat endpoint unreachable: {exc}"
                )
                continue
            if resp.status_code >= 500:
                last_error = RemoteUnavailableError(
                    f"chat endpoint returned HTTP {resp.status_code}",
                    status=resp.status_code,
                )
                continue
            if resp.status_code != 200:
                raise RemoteUnavailableError(
                    f"chat endpoint returned HTTP {resp.status_code}",
                    status=resp.status_code,
                )
            try:
                choices = resp.json()["choices"]
                outputs = [_normalize_choice(c["message"]) for c in choices]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise RemoteUnavailableError(
                    f"malformed chat response: {exc}", status=resp.status_code
                ) from exc
            if len(outputs) != request.n_samples:
                raise RemoteUnavailableError(
                    f"expected {request.n_samples} choices, got {len(outputs)}",
                    status=resp.status_code,
                )
            return outputs
        assert last_error is not None
        raise last_error


def complete(request: ChatRequest, backend) -> list[str]:
    """Run one completion against any backend with a complete() method."""
    return backend.complete(request)
