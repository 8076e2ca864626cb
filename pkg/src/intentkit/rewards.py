"""Group-relative rewards for retrieval-aware intent episodes.

A group of G rollouts for the same context is scored together. The share
of correct rollouts in the group, alpha, acts as an in-batch difficulty
probe: high alpha means the context is easy for the current policy, low
alpha means it is hard.

Each rollout earns three additive components:

- format: a small constant when the final output is well-formed,
- accuracy: 1 for a correct final label, else 0,
- tool: a shaping term with exactly five mutually exclusive branches,
  keyed on difficulty, whether retrieval was used, and whether the emitted
  candidate options contained the true label:

    easy  + no tool + correct        -> small bonus (skip retrieval when able)
    easy  + tool    + options miss   -> small penalty (wasted lookup)
    hard  + tool    + options hit    -> large bonus (useful lookup)
    hard  + no tool + wrong          -> small penalty (should have looked)
    anything else                    -> 0

Group totals are normalized into advantages (zero mean, unit variance
within the group), which feed a clipped policy-gradient surrogate loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .agent import InferenceOutcome
from .errors import (
    EmptyInputError,
    GroupTooSmallError,
    LengthMismatchError,
    MissingOptionsError,
    NonFiniteInputError,
)
from .types import (
    Message,
    NoMatchType,
    Trajectory,
    canonical_form,
    is_no_match,
)

DEFAULT_GROUP_SIZE = 8

# Group standard deviations below this are treated as degenerate: every
# rollout earned the same reward, so there is no learning signal to scale.
DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class RewardConfig:
    r_format: float = 0.1
    r_direct_bonus: float = 0.1      # easy, answered directly, correct
    r_futile_penalty: float = -0.1   # easy, retrieved, options missed the label
    r_tool_bonus: float = 0.5        # hard, retrieved, options hit the label
    r_stubborn_penalty: float = -0.1  # hard, no retrieval, wrong
    easy_threshold: float = 0.5
    clip_eps: float = 0.2
    kl_beta: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "r_format",
            "r_direct_bonus",
            "r_futile_penalty",
            "r_tool_bonus",
            "r_stubborn_penalty",
        ):
            if abs(getattr(self, name)) >= 1.0:
                raise ValueError(f"{name} magnitude must be below 1")
        if not 0.0 <= self.easy_threshold <= 1.0:
            raise ValueError("easy_threshold must lie in [0, 1]")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.kl_beta < 0.0:
            raise ValueError("kl_beta must be non-negative")


TOOL_ABLATIONS = ("full", "no_tool", "no_direct_bonus", "no_futile_penalty",
                  "no_tool_bonus", "no_stubborn_penalty")


def ablated_config(base: RewardConfig, ablation: str) -> RewardConfig:
    """Zero out selected tool-reward branches for ablation runs."""
    if ablation == "full":
        return base
    if ablation == "no_tool":
        return RewardConfig(
            r_format=base.r_format,
            r_direct_bonus=0.0,
            r_futile_penalty=0.0,
            r_tool_bonus=0.0,
            r_stubborn_penalty=0.0,
            easy_threshold=base.easy_threshold,
            clip_eps=base.clip_eps,
            kl_beta=base.kl_beta,
        )
    field_by_name = {
        "no_direct_bonus": "r_direct_bonus",
        "no_futile_penalty": "r_futile_penalty",
        "no_tool_bonus": "r_tool_bonus",
        "no_stubborn_penalty": "r_stubborn_penalty",
    }
    if ablation not in field_by_name:
        raise ValueError(f"unknown ablation {ablation!r}")
    kwargs = {
        "r_format": base.r_format,
        "r_direct_bonus": base.r_direct_bonus,
        "r_futile_penalty": base.r_futile_penalty,
        "r_tool_bonus": base.r_tool_bonus,
        "r_stubborn_penalty": base.r_stubborn_penalty,
        "easy_threshold": base.easy_threshold,
        "clip_eps": base.clip_eps,
        "kl_beta": base.kl_beta,
    }
    kwargs[field_by_name[ablation]] = 0.0
    return RewardConfig(**kwargs)


class Branch(str, Enum):
    EASY_DIRECT_CORRECT = "easy_direct_correct"
    EASY_TOOL_MISS = "easy_tool_miss"
    HARD_TOOL_HIT = "hard_tool_hit"
    HARD_DIRECT_WRONG = "hard_direct_wrong"
    OTHERWISE = "otherwise"


@dataclass(frozen=True)
class RolloutRecord:
    """One rollout plus the ground truth it is judged against."""

    outcome: InferenceOutcome
    gt: str
    format_ok: bool

    @classmethod
    def from_parts(
        cls,
        predicted,
        gt: str,
        tool_called: bool,
        options_emitted: tuple[str, ...] | None,
        format_ok: bool = True,
    ) -> "RolloutRecord":
        """Build a record without a real dialogue, e.g. from a simulator."""
        stub = Trajectory(
            messages=(Message.system("synthetic rollout"),),
            final_label=None if is_no_match(predicted) else predicted,
            tool_called=tool_called,
            options_emitted=options_emitted,
        )
        outcome = InferenceOutcome(
            trajectory=stub,
            predicted=predicted,
            tool_called=tool_called,
            options_emitted=options_emitted,
            turns_used=1,
        )
        return cls(outcome=outcome, gt=gt, format_ok=format_ok)

    @property
    def correct(self) -> bool:
        return accuracy_reward(self.outcome.predicted, self.gt) == 1.0


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    accuracy: float
    tool: float
    branch: Branch

    @property
    def total(self) -> float:
        return self.format + self.accuracy + self.tool


def accuracy_reward(predicted, gt: str) -> float:
    """1.0 when the prediction resolves to the true label, else 0.0."""
    if predicted is None or is_no_match(predicted):
        return 0.0
    return 1.0 if canonical_form(predicted) == canonical_form(gt) else 0.0


def tool_reward(
    record: RolloutRecord, alpha: float, cfg: RewardConfig = RewardConfig()
) -> tuple[float, Branch]:
    """Shaping value and branch for one rollout at group difficulty alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    outcome = record.outcome
    if outcome.tool_called and outcome.options_emitted is None:
        raise MissingOptionsError(
            "rollout claims a tool call but has no emitted options"
        )
    easy = alpha >= cfg.easy_threshold
    correct = record.correct
    hit = False
    if outcome.tool_called:
        gt_key = canonical_form(record.gt)
        hit = gt_key in {canonical_form(o) for o in outcome.options_emitted}

    if easy and not outcome.tool_called and correct:
        return cfg.r_direct_bonus, Branch.EASY_DIRECT_CORRECT
    if easy and outcome.tool_called and not hit:
        return cfg.r_futile_penalty, Branch.EASY_TOOL_MISS
    if not easy and outcome.tool_called and hit:
        return cfg.r_tool_bonus, Branch.HARD_TOOL_HIT
    if not easy and not outcome.tool_called and not correct:
        return cfg.r_stubborn_penalty, Branch.HARD_DIRECT_WRONG
    return 0.0, Branch.OTHERWISE


def total_reward(
    record: RolloutRecord, alpha: float, cfg: RewardConfig = RewardConfig()
) -> RewardBreakdown:
    """Format + accuracy + tool components for one rollout."""
    fmt = cfg.r_format if record.format_ok else 0.0
    acc = accuracy_reward(record.outcome.predicted, record.gt)
    tool, branch = tool_reward(record, alpha, cfg)
    return RewardBreakdown(format=fmt, accuracy=acc, tool=tool, branch=branch)


def group_alpha(records) -> float:
    """Fraction of rollouts in the group whose final label is correct."""
    records = list(records)
    if not records:
        raise EmptyInputError("group must contain at least one rollout")
    return sum(1.0 for r in records if r.correct) / len(records)


def group_advantages(rewards) -> list[float]:
    """Normalize raw rewards within one group: zero mean, unit variance.

    Uses the population standard deviation. A degenerate group, where all
    rewards coincide, yields all-zero advantages instead of dividing by
    (nearly) zero.
    """
    values = [float(r) for r in rewards]
    if not values:
        raise EmptyInputError("rewards must be non-empty")
    if len(values) < 2:
        raise GroupTooSmallError("need at least two rollouts for advantages")
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteInputError("rewards must be finite")
    n = len(values)
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / n
    std = math.sqrt(variance)
    if std < DEGENERATE_STD:
        return [0.0] * n
    return [(v - mean) / std for v in values]


@dataclass(frozen=True)
class GroupRollout:
    """A scored group: rollouts, difficulty probe, rewards, advantages."""

    records: tuple[RolloutRecord, ...]
    alpha: float
    breakdowns: tuple[RewardBreakdown, ...]
    advantages: tuple[float, ...]

    @property
    def rewards(self) -> tuple[float, ...]:
        return tuple(b.total for b in self.breakdowns)

    def to_report(self) -> dict:
        return {
            "alpha": self.alpha,
            "rewards": list(self.rewards),
            "branches": [b.branch.value for b in self.breakdowns],
            "advantages": list(self.advantages),
        }


def score_group(records, cfg: RewardConfig = RewardConfig()) -> GroupRollout:
    """Score a whole group: alpha, per-rollout rewards, advantages."""
    records = tuple(records)
    alpha = group_alpha(records)
    breakdowns = tuple(total_reward(r, alpha, cfg) for r in records)
    advantages = tuple(group_advantages([b.total for b in breakdowns]))
    return GroupRollout(
        records=records, alpha=alpha, breakdowns=breakdowns, advantages=advantages
    )


def write_group_reports(groups, path: str | Path) -> None:
    """One JSON object per scored group, in order."""
    with open(path, "w", encoding="utf-8") as fh:
        for group in groups:
            fh.write(json.dumps(group.to_report()) + "\n")


def grpo_surrogate(
    logp_new,
    logp_old,
    advantage: float,
    kl_terms,
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Clipped per-sequence surrogate loss for one rollout.

    Per token: the probability ratio between the new and old policies
    multiplies the sequence advantage, clipping caps the ratio inside
    [1 - eps, 1 + eps], the pessimistic minimum of the two is taken, and a
    KL penalty scaled by kl_beta is subtracted. The per-token terms are
    averaged and negated, so minimizing this value maximizes the clipped
    objective. When the two policies coincide and kl_beta is zero, the
    result is exactly the negated advantage.
    """
    new = [float(x) for x in logp_new]
    old = [float(x) for x in logp_old]
    kl = [float(x) for x in kl_terms]
    if not new:
        raise EmptyInputError("token log-probabilities must be non-empty")
    if len(new) != len(old) or len(new) != len(kl):
        raise LengthMismatchError(
            f"lengths differ: new={len(new)} old={len(old)} kl={len(kl)}"
        )
    if not all(math.isfinite(x) for seq in (new, old, kl) for x in seq):
        raise NonFiniteInputError("log-probabilities and KL terms must be finite")
    if not math.isfinite(advantage):
        raise NonFiniteInputError("advantage must be finite")

    low, high = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    terms = []
    for lp_new, lp_old, kl_t in zip(new, old, kl):
        ratio = math.exp(lp_new - lp_old)
        clipped_ratio = min(max(ratio, low), high)
        pessimistic = min(ratio * advantage, clipped_ratio * advantage)
        terms.append(pessimistic - cfg.kl_beta * kl_t)
    return -(math.fsum(terms) / len(terms))
