"""Core domain types: labels, taxonomies, contexts, messages, trajectories.

Labels are compared on a canonical form (lowercased, trimmed, inner
whitespace collapsed) so that cosmetic variants like "Ask  for Help" and
"ask for help" resolve to the same taxonomy member. Anything that fails to
resolve maps to the NO_MATCH sentinel, which downstream scoring always
counts as incorrect.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .errors import DataFormatError

_WS_RE = re.compile(r"\s+")

ROLES = ("system", "user", "assistant", "tool")

EXPLANATION_KINDS = ("generic", "personalized")

# Ordered segment markers expected in a personalized explanation.
PERSONALIZED_SEGMENTS = ("[PersonalMotivation]", "[Context]", "[Strategy]")


def canonical_form(raw: str) -> str:
    """Normalize a label string: lowercase, trim, collapse inner whitespace."""
    return _WS_RE.sub(" ", raw.strip().lower())


class NoMatchType:
    """Singleton sentinel for a prediction outside the active taxonomy."""

    _instance: "NoMatchType | None" = None

    def __new__(cls) -> "NoMatchType":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_MATCH"

    def __bool__(self) -> bool:
        return False


NO_MATCH = NoMatchType()


def is_no_match(value: object) -> bool:
    return value is NO_MATCH or isinstance(value, NoMatchType)


@dataclass(frozen=True)
class Taxonomy:
    """A closed intent vocabulary with order-stable members."""

    name: str
    labels: tuple[str, ...]
    _canon: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("taxonomy name must be non-empty")
        if not self.labels:
            raise ValueError("taxonomy must contain at least one label")
        canon: dict[str, str] = {}
        for label in self.labels:
            key = canonical_form(label)
            if not key:
                raise ValueError(f"taxonomy {self.name!r} has a blank label")
            if key in canon:
                raise ValueError(
                    f"taxonomy {self.name!r} has duplicate canonical label {key!r}"
                )
            canon[key] = label
        object.__setattr__(self, "_canon", canon)

    def canonicalize(self, raw: str) -> "str | NoMatchType":
        """Resolve raw text to the matching member, or NO_MATCH."""
        return self._canon.get(canonical_form(raw), NO_MATCH)

    def __contains__(self, raw: object) -> bool:
        if not isinstance(raw, str):
            return False
        return canonical_form(raw) in self._canon

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[str]:
        return iter(self.labels)

    def index(self, raw: str) -> int:
        """Position of a label in vocabulary order (used for tie-breaks)."""
        member = self.canonicalize(raw)
        if is_no_match(member):
            raise KeyError(f"label {raw!r} is not in taxonomy {self.name!r}")
        return self.labels.index(member)  # labels are few; linear scan is fine


def canonicalize_label(raw: str, taxonomy: Taxonomy) -> "str | NoMatchType":
    """Module-level spelling of Taxonomy.canonicalize."""
    return taxonomy.canonicalize(raw)


def labels_match(a: str, b: str) -> bool:
    """Compare two label strings on canonical form."""
    return canonical_form(a) == canonical_form(b)


@dataclass(frozen=True)
class Context:
    """One observed human situation: who, background, and the action taken."""

    user: str
    situational_text: str
    action_text: str
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("context user must be non-empty")
        if not self.action_text.strip():
            raise ValueError("context action_text must be non-empty")


@dataclass(frozen=True)
class IntentExplanation:
    """Free-text rationale for an intent, either generic or personalized."""

    text: str
    kind: str = "generic"  # "generic" | "personalized"

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("explanation text must be non-empty")
        if self.kind not in EXPLANATION_KINDS:
            raise ValueError(f"unknown explanation kind {self.kind!r}")


def has_personalized_segments(text: str) -> bool:
    """Syntactic check that the three segment markers appear in order.

    This is advisory: model output is not forced through it, but exports and
    audits use it to see whether an explanation follows the personalized
    template (personal motivation, then context, then strategy).
    """
    pos = 0
    for marker in PERSONALIZED_SEGMENTS:
        found = text.find(marker, pos)
        if found < 0:
            return False
        pos = found + len(marker)
    return True


@dataclass(frozen=True)
class IntentRecord:
    """A labeled context, optionally with a gold explanation and split tag."""

    context: Context
    gt_label: str
    explanation: IntentExplanation | None = None
    split: str = "train"  # "train" | "test"

    def __post_init__(self) -> None:
        if not self.gt_label.strip():
            raise ValueError("gt_label must be non-empty")
        if self.split not in ("train", "test"):
            raise ValueError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class Message:
    """One chat turn. loss_masked marks tokens excluded from training loss."""

    role: str  # "system" | "user" | "assistant" | "tool"
    content: str
    loss_masked: bool

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    @classmethod
    def system(cls, content: str) -> "Message":
        return cls("system", content, True)

    @classmethod
    def user(cls, content: str) -> "Message":
        return cls("user", content, True)

    @classmethod
    def assistant(cls, content: str) -> "Message":
        return cls("assistant", content, False)

    @classmethod
    def tool(cls, content: str) -> "Message":
        return cls("tool", content, True)


def validate_message_order(messages: tuple[Message, ...] | list[Message]) -> None:
    """Enforce legal message alternation.

    The first message must be a system message, and a tool message may only
    appear immediately after an assistant message (so tool responses pair
    1:1 with the calls that produced them and never stack).
    """
    if not messages:
        raise ValueError("trajectory must contain at least one message")
    if messages[0].role != "system":
        raise ValueError("first message must have role 'system'")
    for i, msg in enumerate(messages):
        if msg.role == "tool":
            if i == 0 or messages[i - 1].role != "assistant":
                raise ValueError(
                    f"tool message at index {i} does not follow an assistant message"
                )


@dataclass(frozen=True)
class Trajectory:
    """A finished multi-turn episode plus convenience summary fields."""

    messages: tuple[Message, ...]
    final_label: str | None = None
    final_explanation: str | None = None
    tool_called: bool = False
    options_emitted: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        validate_message_order(self.messages)

    @property
    def assistant_messages(self) -> tuple[Message, ...]:
        return tuple(m for m in self.messages if m.role == "assistant")

    @property
    def tool_messages(self) -> tuple[Message, ...]:
        return tuple(m for m in self.messages if m.role == "tool")


# --- record (de)serialization ---------------------------------------------


def record_to_dict(record: IntentRecord) -> dict:
    ctx = record.context
    return {
        "user": ctx.user,
        "situational_text": ctx.situational_text,
        "action_text": ctx.action_text,
        "gt_label": record.gt_label,
        "explanation": record.explanation.text if record.explanation else None,
        "explanation_kind": record.explanation.kind if record.explanation else None,
        "split": record.split,
        "meta": dict(ctx.meta),
    }


def record_from_dict(payload: dict) -> IntentRecord:
    try:
        ctx = Context(
            user=payload["user"],
            situational_text=payload.get("situational_text", ""),
            action_text=payload["action_text"],
            meta=payload.get("meta") or {},
        )
        explanation = None
        if payload.get("explanation"):
            explanation = IntentExplanation(
                text=payload["explanation"],
                kind=payload.get("explanation_kind") or "generic",
            )
        return IntentRecord(
            context=ctx,
            gt_label=payload["gt_label"],
            explanation=explanation,
            split=payload.get("split", "train"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad intent record: {exc}") from exc


def load_records(path: str | Path) -> list[IntentRecord]:
    """Read one IntentRecord per JSONL line; errors carry the line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: line {lineno}: invalid JSON") from exc
            try:
                records.append(record_from_dict(payload))
            except DataFormatError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    return records


def dump_records(records: list[IntentRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
