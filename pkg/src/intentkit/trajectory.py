"""Supervised trajectory generation with a teacher model.

One episode walks the same surface as live inference (system prompt,
context, tool calls, feedback) but knows the ground-truth label and uses it
in three carefully fenced ways:

- Option steering: when the teacher proposes retrieval options that miss
  the true label, a temporary user message asks it to reconsider and the
  options turn is regenerated once. The steering message is removed before
  retrieval executes, so the stored dialogue never shows it. If the retry
  still misses, the true label is appended to the option set directly.
- Feedback: wrong answers get a label-free correction; from a configured
  turn onward the correction also suggests consulting retrieval.
- Reveal: if the turn budget ends with no correct answer, the true label
  is revealed in a final user message and a final answer is synthesized so
  the episode still ends with usable supervision.

leakage_audit checks a finished trajectory for the one thing that must
never survive: generated user-role text that names the true label outside
the reveal position.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .agent import (
    FORMAT_REMINDER,
    ParsedAnswer,
    ParsedToolCall,
    StrategyMode,
    build_system_prompt,
    render_context_message,
    render_tool_response,
)
from .errors import DataFormatError, IntentKitError
from .library import IntentHistoryLibrary, templated_explanation
from .llm import ChatRequest, render_answer
from .types import (
    IntentRecord,
    Message,
    Trajectory,
    canonical_form,
    is_no_match,
)
from .agent import TOOL_SCHEMA, parse_output

STATUS_CORRECT_DIRECT = "correct_direct"
STATUS_CORRECT_AFTER_RETRIEVAL = "correct_after_retrieval"
STATUS_REVEALED = "revealed"

GEN_STATUSES = (
    STATUS_CORRECT_DIRECT,
    STATUS_CORRECT_AFTER_RETRIEVAL,
    STATUS_REVEALED,
)

FEEDBACK_TEXT = "That is not correct. Reconsider the situation and try again."
FEEDBACK_ESCALATED_TEXT = (
    "That is not correct. Consider retrieving this user's intent history "
    "before answering again."
)


def steering_text(gt_label: str) -> str:
    return (
        f'Also include "{gt_label}" among your candidate intents, then retrieve.'
    )


def reveal_text(gt_label: str) -> str:
    return f'The correct intent is "{gt_label}". State it as your final answer.'


@dataclass(frozen=True)
class GenConfig:
    i_max: int = 6
    feedback_escalation_turn: int = 3
    reveal_on_exhaustion: bool = True

    def __post_init__(self) -> None:
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if not (1 <= self.feedback_escalation_turn < self.i_max) and self.i_max > 1:
            raise ValueError(
                "feedback_escalation_turn must lie in [1, i_max)"
            )


@dataclass(frozen=True)
class GenOutcome:
    trajectory: Trajectory
    status: str
    attempts: int
    gt_label: str
    user: str


class GenerationExhaustedError(IntentKitError):
    """Turn budget ran out, and reveal-on-exhaustion was disabled."""

    def __init__(self, message: str, trajectory: Trajectory | None = None):
        super().__init__(message)
        self.trajectory = trajectory


def _complete_one(backend, messages: list[Message]) -> str:
    request = ChatRequest(
        messages=tuple(messages), n_samples=1, tools=(TOOL_SCHEMA,)
    )
    return backend.complete(request)[0]


def generate_trajectory(
    record: IntentRecord,
    library: IntentHistoryLibrary,
    backend,
    cfg: GenConfig = GenConfig(),
    k: int = 3,
) -> GenOutcome:
    """Generate one supervision episode for a labeled record."""
    taxonomy = library.taxonomy
    gt = taxonomy.canonicalize(record.gt_label)
    if is_no_match(gt):
        raise ValueError(
            f"record label {record.gt_label!r} is not in taxonomy {taxonomy.name!r}"
        )
    gt_key = canonical_form(gt)
    ctx = record.context
    messages: list[Message] = [
        Message.system(build_system_prompt(taxonomy, StrategyMode.SELF_DECIDED)),
        Message.user(render_context_message(ctx)),
    ]
    tool_used = False
    options_union: list[str] = []
    options_seen: set[str] = set()

    def finish(status: str, final_label, final_explanation, attempts: int) -> GenOutcome:
        trajectory = Trajectory(
            messages=tuple(messages),
            final_label=final_label,
            final_explanation=final_explanation,
            tool_called=tool_used,
            options_emitted=tuple(options_union) if tool_used else None,
        )
        return GenOutcome(
            trajectory=trajectory,
            status=status,
            attempts=attempts,
            gt_label=gt,
            user=ctx.user,
        )

    for turn in range(1, cfg.i_max + 1):
        try:
            text = _complete_one(backend, messages)
        except IntentKitError as exc:
            if getattr(exc, "trajectory", None) is None:
                exc.trajectory = None
            raise
        messages.append(Message.assistant(text))
        parsed = parse_output(text)

        if isinstance(parsed, ParsedToolCall):
            options = [
                taxonomy.canonicalize(o) for o in parsed.options
            ]
            options = [o for o in options if not is_no_match(o)]
            if gt_key not in {canonical_form(o) for o in options}:
                # One steered regeneration of the options turn. The steering
                # message is removed again before anything else happens.
                messages.append(Message.user(steering_text(gt)))
                retry_text = _complete_one(backend, messages)
                messages.pop()  # steering message must not survive
                retry_parsed = parse_output(retry_text)
                if isinstance(retry_parsed, ParsedToolCall):
                    messages.pop()  # replace the original options turn
                    messages.append(Message.assistant(retry_text))
                    options = [
                        taxonomy.canonicalize(o) for o in retry_parsed.options
                    ]
                    options = [o for o in options if not is_no_match(o)]
                if gt_key not in {canonical_form(o) for o in options}:
                    options.append(gt)
            tool_used = True
            for option in options:
                key = canonical_form(option)
                if key not in options_seen:
                    options_seen.add(key)
                    options_union.append(option)
            result = library.retrieve(
                ctx.user, options=options, query_text=ctx.action_text, k=k
            )
            messages.append(Message.tool(render_tool_response(result)))
            continue

        if isinstance(parsed, ParsedAnswer):
            member = taxonomy.canonicalize(parsed.label_raw)
            if not is_no_match(member) and canonical_form(member) == gt_key:
                status = (
                    STATUS_CORRECT_AFTER_RETRIEVAL
                    if tool_used
                    else STATUS_CORRECT_DIRECT
                )
                return finish(status, member, parsed.explanation or None, turn)
            feedback = (
                FEEDBACK_ESCALATED_TEXT
                if turn >= cfg.feedback_escalation_turn
                else FEEDBACK_TEXT
            )
            messages.append(Message.user(feedback))
            continue

        messages.append(Message.user(FORMAT_REMINDER))

    if not cfg.reveal_on_exhaustion:
        raise GenerationExhaustedError(
            f"no correct answer within {cfg.i_max} turns",
            trajectory=Trajectory(messages=tuple(messages)),
        )
    explanation_text = (
        record.explanation.text
        if record.explanation
        else templated_explanation(gt, ctx).text
    )
    messages.append(Message.user(reveal_text(gt)))
    messages.append(Message.assistant(render_answer(gt, explanation_text)))
    return finish(STATUS_REVEALED, gt, explanation_text, cfg.i_max)


# --- leakage audit -----------------------------------------------------------


def leakage_audit(trajectory: Trajectory, gt_label: str) -> list[int]:
    """Indices of user messages that leak the true label.

    The first two messages (system prompt, which lists the whole
    vocabulary, and the original context) are the task input and exempt.
    Tool messages are retrieval output and exempt: evidence is allowed to
    name the label. Every other user-role message naming the label is a
    leak, with one exception: the penultimate message may name it when the
    final message is an assistant answer for that label (the reveal
    position at the very end of an exhausted episode).
    """
    gt_key = canonical_form(gt_label)
    pattern = re.compile(r"(?<!\w)" + re.escape(gt_key) + r"(?!\w)")
    n = len(trajectory.messages)

    reveal_slot = None
    if n >= 2:
        last = trajectory.messages[-1]
        if last.role == "assistant":
            parsed = parse_output(last.content)
            if (
                isinstance(parsed, ParsedAnswer)
                and canonical_form(parsed.label_raw) == gt_key
            ):
                reveal_slot = n - 2

    violations = []
    for i, msg in enumerate(trajectory.messages):
        if i < 2 or msg.role != "user":
            continue
        if i == reveal_slot:
            continue
        if pattern.search(canonical_form(msg.content)):
            violations.append(i)
    return violations


# --- batch generation and export ---------------------------------------------


@dataclass(frozen=True)
class DatasetGenReport:
    outcomes: tuple[GenOutcome, ...]
    skips: tuple[tuple[int, str], ...]


def generate_dataset(
    records,
    library: IntentHistoryLibrary,
    backend,
    cfg: GenConfig = GenConfig(),
    k: int = 3,
) -> DatasetGenReport:
    """Generate trajectories for many records, skipping failed ones."""
    outcomes = []
    skips = []
    for index, record in enumerate(records):
        try:
            outcomes.append(generate_trajectory(record, library, backend, cfg, k))
        except IntentKitError as exc:
            skips.append((index, f"{type(exc).__name__}: {exc}"))
    return DatasetGenReport(outcomes=tuple(outcomes), skips=tuple(skips))


@dataclass(frozen=True)
class ExportReport:
    written: int
    rejected: tuple[tuple[int, str], ...]


def export_sft_dataset(outcomes, path: str | Path) -> ExportReport:
    """Write outcomes as JSONL supervision lines.

    A line carries the full message list with loss masks plus episode
    metadata. Outcomes containing an empty assistant message are rejected
    rather than written, since they would contribute nothing but noise to
    a fine-tuning run.
    """
    written = 0
    rejected = []
    with open(path, "w", encoding="utf-8") as fh:
        for index, outcome in enumerate(outcomes):
            empty = [
                m
                for m in outcome.trajectory.messages
                if m.role == "assistant" and not m.content.strip()
            ]
            if empty:
                rejected.append((index, "empty assistant content"))
                continue
            line = {
                "messages": [
                    {
                        "role": m.role,
                        "content": m.content,
                        "loss_masked": m.loss_masked,
                    }
                    for m in outcome.trajectory.messages
                ],
                "status": outcome.status,
                "gt_label": outcome.gt_label,
                "user": outcome.user,
            }
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")
            written += 1
    return ExportReport(written=written, rejected=tuple(rejected))


def load_sft_dataset(path: str | Path) -> list[dict]:
    """Read exported supervision lines back, validating the schema."""
    lines = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                payload = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: line {lineno}: invalid JSON") from exc
            for field_name in ("messages", "status", "gt_label", "user"):
                if field_name not in payload:
                    raise DataFormatError(
                        f"{path}: line {lineno}: missing field {field_name!r}"
                    )
            for m in payload["messages"]:
                if not {"role", "content", "loss_masked"} <= set(m):
                    raise DataFormatError(
                        f"{path}: line {lineno}: malformed message object"
                    )
            lines.append(payload)
    return lines
