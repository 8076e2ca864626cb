"""Multi-turn inference loop: prompt assembly, output parsing, tool dispatch.

The agent converses with a model backend for up to a fixed number of
turns. Each assistant output is parsed into one of three shapes: a final
answer, a retrieval tool call, or malformed text. Tool calls are dispatched
against the per-user history library and their rendered results appended as
tool messages; malformed output gets a format reminder and another turn.

Three strategy modes control tool access:

- forced_no_retrieval: the tool is absent from the prompt and calls to it
  are refused with a reminder.
- self_decided: the model chooses when (and whether) to retrieve.
- forced_retrieval: direct answers are rejected until at least one
  retrieval has happened.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .errors import IntentKitError
from .library import IntentHistoryLibrary, RetrievalResult
from .llm import TOOL_NAME, ChatRequest
from .types import (
    Context,
    Message,
    NoMatchType,
    NO_MATCH,
    Taxonomy,
    Trajectory,
    canonical_form,
    is_no_match,
)

DEFAULT_MAX_TURNS = 6


class StrategyMode(str, Enum):
    FORCED_NO_RETRIEVAL = "forced_no_retrieval"
    SELF_DECIDED = "self_decided"
    FORCED_RETRIEVAL = "forced_retrieval"


# --- prompt assembly ---------------------------------------------------------

TOOL_SIGNATURE_TEXT = (
    "Tool available:\n"
    f"{TOOL_NAME}(user, intent_options)\n"
    "  Looks up this user's past intent history, restricted to the\n"
    "  candidate intents you pass in intent_options. When you are\n"
    "  uncertain, call it with two or more candidate intents.\n"
    "  Returns: [(user, intent_label, intent_explanation), ...]"
)

NO_TOOL_TEXT = "No retrieval tool is available for this task. Answer directly from the context."

FORCED_RETRIEVAL_EXTRA = (
    "You must consult the retrieval tool at least once before giving your final answer."
)

OUTPUT_FORMAT_TEXT = (
    "Final answer format:\n"
    "<answer>intent_label</answer>\n"
    "<intent_explanation>[PersonalMotivation] why this user tends to act "
    "this way + [Context] what in the current situation signals it + "
    "[Strategy] how the intent connects to the action</intent_explanation>"
)

TOOL_SCHEMA = {
    "type": "function",
    "function": {
        "name": TOOL_NAME,
        "description": (
            "Look up this user's past intent records, restricted to the "
            "candidate intents in intent_options."
        ),
        "parameters": {
            "type": "object",
            "properties": {
                "user": {"type": "string"},
                "intent_options": {
                    "type": "array",
                    "items": {"type": "string"},
                    "minItems": 2,
                },
            },
            "required": ["user", "intent_options"],
        },
    },
}

NO_TOOL_REMINDER = (
    "No retrieval tool is available here. Give your final answer directly "
    "in the required format."
)
FORMAT_REMINDER = (
    "That response was not in the expected format. Either call the "
    "retrieval tool or give a final answer as "
    "<answer>intent_label</answer>."
)
MUST_RETRIEVE_REMINDER = (
    "Before answering, consult the retrieval tool with your candidate intents."
)
EMPTY_RETRIEVAL_TEXT = "No matching history found."


def default_template() -> str:
    return (
        resources.files("intentkit.prompts")
        .joinpath("default_system.txt")
        .read_text(encoding="utf-8")
    )


def build_system_prompt(
    taxonomy: Taxonomy,
    mode: StrategyMode = StrategyMode.SELF_DECIDED,
    template_text: str | None = None,
) -> str:
    """Fill the system template for one taxonomy and strategy mode."""
    template = template_text if template_text is not None else default_template()
    if mode == StrategyMode.FORCED_NO_RETRIEVAL:
        tool_block = NO_TOOL_TEXT
    elif mode == StrategyMode.FORCED_RETRIEVAL:
        tool_block = TOOL_SIGNATURE_TEXT + "\n" + FORCED_RETRIEVAL_EXTRA
    else:
        tool_block = TOOL_SIGNATURE_TEXT
    return (
        template.replace("{taxonomy}", ", ".join(taxonomy.labels))
        .replace("{tool_signature}", tool_block)
        .replace("{output_format}", OUTPUT_FORMAT_TEXT)
    )


def render_context_message(ctx: Context) -> str:
    lines = [f"User: {ctx.user}"]
    if ctx.situational_text.strip():
        lines.append(f"Background: {ctx.situational_text}")
    for key in sorted(ctx.meta):
        lines.append(f"{key}: {ctx.meta[key]}")
    lines.append(f"Action: {ctx.action_text}")
    return "\n".join(lines)


# --- output parsing ----------------------------------------------------------


@dataclass(frozen=True)
class ParsedAnswer:
    label_raw: str
    explanation: str


@dataclass(frozen=True)
class ParsedToolCall:
    options: tuple[str, ...]
    user: str | None


@dataclass(frozen=True)
class ParsedMalformed:
    reason: str


ParsedOutput = ParsedAnswer | ParsedToolCall | ParsedMalformed

_ANSWER_RE = re.compile(r"<answer>\s*(.*?)\s*</answer>", re.DOTALL)
_EXPLANATION_RE = re.compile(
    r"<intent_explanation>\s*(.*?)\s*</intent_explanation>", re.DOTALL
)
_TOOL_CALL_RE = re.compile(re.escape(TOOL_NAME) + r"\s*\((.*?)\)", re.DOTALL)
_OPTIONS_RE = re.compile(r"intent_options\s*=\s*\[(.*?)\]", re.DOTALL)
_QUOTED_RE = re.compile(r"(['\"])(.*?)\1", re.DOTALL)
_USER_RE = re.compile(r"user\s*=\s*(['\"])(.*?)\1")


def _parse_tool_args(args: str) -> ParsedToolCall | ParsedMalformed:
    options_match = _OPTIONS_RE.search(args)
    if not options_match:
        return ParsedMalformed("retrieval call without an intent_options list")
    raw_items = [m[1] for m in _QUOTED_RE.findall(options_match.group(1))]
    options: list[str] = []
    seen: set[str] = set()
    for item in raw_items:
        key = canonical_form(item)
        if key and key not in seen:
            seen.add(key)
            options.append(item)
    if not options:
        return ParsedMalformed("retrieval call with an empty intent_options list")
    user_match = _USER_RE.search(args)
    return ParsedToolCall(
        options=tuple(options), user=user_match.group(2) if user_match else None
    )


def parse_output(text: str) -> ParsedOutput:
    """Classify one assistant output.

    A well-formed answer block and a retrieval invocation can in principle
    both appear; whichever starts earlier in the text wins. Anything else
    is malformed.
    """
    answer_match = _ANSWER_RE.search(text)
    tool_match = _TOOL_CALL_RE.search(text)
    if answer_match and tool_match:
        if tool_match.start() < answer_match.start():
            answer_match = None
        else:
            tool_match = None
    if answer_match:
        label_raw = answer_match.group(1).strip()
        if not label_raw:
            return ParsedMalformed("empty answer block")
        explanation_match = _EXPLANATION_RE.search(text)
        explanation = explanation_match.group(1).strip() if explanation_match else ""
        return ParsedAnswer(label_raw=label_raw, explanation=explanation)
    if tool_match:
        return _parse_tool_args(tool_match.group(1))
    return ParsedMalformed("no answer block or retrieval call found")


def render_tool_response(result: RetrievalResult) -> str:
    """Deterministic textual form of a retrieval result, rank order kept."""
    if not result.matches:
        return EMPTY_RETRIEVAL_TEXT
    lines = []
    for rank, (user, label, explanation) in enumerate(result.triples(), start=1):
        lines.append(f"{rank}. ({user}, {label}, {explanation})")
    return "\n".join(lines)


# --- inference loop ---------------------------------------------------------


@dataclass(frozen=True)
class InferenceOutcome:
    trajectory: Trajectory
    predicted: "str | NoMatchType"
    tool_called: bool
    options_emitted: tuple[str, ...] | None
    turns_used: int
    # True when the episode ended with a parsed final answer, even one whose
    # label fell outside the vocabulary; False when the turn budget ran out.
    answered: bool = True


def _canonical_options(options, taxonomy: Taxonomy) -> tuple[str, ...]:
    """Map raw option strings to taxonomy members where possible."""
    out = []
    for option in options:
        member = taxonomy.canonicalize(option)
        out.append(option if is_no_match(member) else member)
    return tuple(out)


def _attach_trajectory(exc: Exception, messages: list[Message]) -> None:
    try:
        exc.trajectory = Trajectory(messages=tuple(messages))
    except ValueError:
        exc.trajectory = None


def run_inference(
    ctx: Context,
    taxonomy: Taxonomy,
    library: IntentHistoryLibrary,
    mode: StrategyMode,
    backend,
    max_turns: int = DEFAULT_MAX_TURNS,
    k: int = 3,
    template_text: str | None = None,
) -> InferenceOutcome:
    """Run one episode and return the outcome with its full trajectory.

    Retrieval always queries the library with the episode's own user and
    action text; the model only chooses the candidate intent options.
    Repeated tool calls with the same option set reuse the first rendered
    response instead of re-querying. If the turn budget runs out without a
    final answer, the prediction is NO_MATCH.
    """
    mode = StrategyMode(mode)
    if max_turns < 1:
        raise ValueError("max_turns must be at least 1")
    messages: list[Message] = [
        Message.system(build_system_prompt(taxonomy, mode, template_text)),
        Message.user(render_context_message(ctx)),
    ]
    tools = None if mode == StrategyMode.FORCED_NO_RETRIEVAL else (TOOL_SCHEMA,)
    tool_called = False
    options_union: list[str] = []
    options_seen: set[str] = set()
    memo: dict[frozenset, str] = {}

    def build_outcome(predicted, explanation, turns, answered):
        emitted = tuple(options_union) if tool_called else None
        label = None if is_no_match(predicted) else predicted
        trajectory = Trajectory(
            messages=tuple(messages),
            final_label=label,
            final_explanation=explanation or None,
            tool_called=tool_called,
            options_emitted=emitted,
        )
        return InferenceOutcome(
            trajectory=trajectory,
            predicted=predicted,
            tool_called=tool_called,
            options_emitted=emitted,
            turns_used=turns,
            answered=answered,
        )

    for turn in range(1, max_turns + 1):
        request = ChatRequest(messages=tuple(messages), n_samples=1, tools=tools)
        try:
            text = backend.complete(request)[0]
        except IntentKitError as exc:
            _attach_trajectory(exc, messages)
            raise
        messages.append(Message.assistant(text))
        parsed = parse_output(text)

        if isinstance(parsed, ParsedToolCall):
            if mode == StrategyMode.FORCED_NO_RETRIEVAL:
                messages.append(Message.user(NO_TOOL_REMINDER))
                continue
            tool_called = True
            canonical = _canonical_options(parsed.options, taxonomy)
            for option in canonical:
                key = canonical_form(option)
                if key not in options_seen:
                    options_seen.add(key)
                    options_union.append(option)
            memo_key = frozenset(canonical_form(o) for o in canonical)
            if memo_key not in memo:
                result = library.retrieve(
                    ctx.user, options=canonical, query_text=ctx.action_text, k=k
                )
                memo[memo_key] = render_tool_response(result)
            messages.append(Message.tool(memo[memo_key]))
            continue

        if isinstance(parsed, ParsedAnswer):
            if mode == StrategyMode.FORCED_RETRIEVAL and not tool_called:
                messages.append(Message.user(MUST_RETRIEVE_REMINDER))
                continue
            member = taxonomy.canonicalize(parsed.label_raw)
            predicted = NO_MATCH if is_no_match(member) else member
            return build_outcome(predicted, parsed.explanation, turn, answered=True)

        messages.append(Message.user(FORMAT_REMINDER))

    return build_outcome(NO_MATCH, None, max_turns, answered=False)


# --- structural audit --------------------------------------------------------


def validate_trajectory(trajectory: Trajectory) -> None:
    """Assert structural invariants beyond basic message ordering.

    Loss masks must be False exactly on assistant messages, and every tool
    message must directly follow an assistant message whose text parses as
    a retrieval call.
    """
    for i, msg in enumerate(trajectory.messages):
        expected_mask = msg.role != "assistant"
        if msg.loss_masked != expected_mask:
            raise ValueError(
                f"message {i} ({msg.role}) has loss_masked={msg.loss_masked}"
            )
        if msg.role == "tool":
            previous = trajectory.messages[i - 1]
            if not isinstance(parse_output(previous.content), ParsedToolCall):
                raise ValueError(
                    f"tool message {i} does not follow a parseable retrieval call"
                )
