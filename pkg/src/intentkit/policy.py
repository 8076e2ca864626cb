"""Desk-scale simulator for retrieval-policy learning dynamics.

Instead of a language model, a two-action tabular policy (answer directly
or retrieve first) faces synthetic contexts that are either easy or hard.
The world is a handful of Bernoulli knobs: how often a direct answer is
right per difficulty, how often a retrieval-informed answer is right, and
how often emitted candidate options contain the true label.

Rollout groups are scored by the shared reward engine (same alpha probe,
same five-branch tool shaping), advantages are group-normalized, and the
policy follows the advantage-weighted score-function gradient. The point
is qualitative: with tool shaping on, retrieval probability should split
by difficulty; with shaping stripped out and no accuracy edge, it should
not.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rewards import (
    GroupRollout,
    RewardConfig,
    RolloutRecord,
    score_group,
)

DIFFICULTIES = ("easy", "hard")
ACTION_DIRECT = 0
ACTION_RETRIEVE = 1


@dataclass(frozen=True)
class SimContext:
    difficulty: str
    gt_label: str

    def __post_init__(self) -> None:
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")


@dataclass(frozen=True)
class SyntheticWorld:
    """Bernoulli world model for the simulator."""

    contexts: tuple[SimContext, ...] = (
        SimContext("easy", "routine request"),
        SimContext("hard", "ambiguous request"),
    )
    p_direct_correct: dict = field(
        default_factory=lambda: {"easy": 0.9, "hard": 0.2}
    )
    p_retrieval_correct: dict = field(
        default_factory=lambda: {"easy": 0.9, "hard": 0.8}
    )
    p_options_hit: float = 0.9
    wrong_label: str = "something else"

    def __post_init__(self) -> None:
        if not self.contexts:
            raise ValueError("world needs at least one context")
        for mapping in (self.p_direct_correct, self.p_retrieval_correct):
            for difficulty in DIFFICULTIES:
                p = mapping.get(difficulty)
                if p is None or not 0.0 <= p <= 1.0:
                    raise ValueError(f"bad probability for {difficulty!r}: {p!r}")
        if not 0.0 <= self.p_options_hit <= 1.0:
            raise ValueError("p_options_hit must lie in [0, 1]")
        for ctx in self.contexts:
            if ctx.gt_label == self.wrong_label:
                raise ValueError("wrong_label must differ from every context label")


def default_world() -> SyntheticWorld:
    return SyntheticWorld()


def tied_accuracy_world() -> SyntheticWorld:
    """Same world, but retrieval gives no accuracy edge on either difficulty.

    With accuracy flat across actions, the only systematic signal left is
    the tool-shaping term, which makes this the cleanest setting for
    ablation comparisons.
    """
    return SyntheticWorld(
        p_direct_correct={"easy": 0.9, "hard": 0.2},
        p_retrieval_correct={"easy": 0.9, "hard": 0.2},
    )


class TabularPolicy:
    """Softmax over {direct, retrieve}, one logit pair per difficulty."""

    def __init__(self) -> None:
        self.logits: dict[str, np.ndarray] = {
            d: np.zeros(2, dtype=np.float64) for d in DIFFICULTIES
        }

    def probs(self, difficulty: str) -> np.ndarray:
        z = self.logits[difficulty]
        shifted = z - z.max()
        expz = np.exp(shifted)
        return expz / expz.sum()

    def p_retrieve(self, difficulty: str) -> float:
        return float(self.probs(difficulty)[ACTION_RETRIEVE])

    def sample_action(self, difficulty: str, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p_retrieve(difficulty))


@dataclass(frozen=True)
class SimStep:
    """One scored group plus the simulator-side context it came from."""

    group: GroupRollout
    difficulty: str
    actions: tuple[int, ...]
    retrievals: int
    option_misses: int

    @property
    def tool_miss_rate(self) -> float:
        return self.option_misses / self.retrievals if self.retrievals else 0.0


def rollout_group(
    world: SyntheticWorld,
    policy: TabularPolicy,
    ctx_index: int,
    rng: np.random.Generator,
    group_size: int = 8,
    reward_cfg: RewardConfig = RewardConfig(),
) -> SimStep:
    """Sample one group of rollouts for a single context and score it.

    Draw order is fixed (action, then option hit if retrieving, then
    correctness) so a seeded generator reproduces runs bit for bit.
    """
    if group_size < 2:
        raise ValueError("group_size must be at least 2")
    ctx = world.contexts[ctx_index % len(world.contexts)]
    records = []
    actions = []
    retrievals = 0
    option_misses = 0
    for _ in range(group_size):
        action = policy.sample_action(ctx.difficulty, rng)
        actions.append(action)
        if action == ACTION_RETRIEVE:
            retrievals += 1
            hit = rng.random() < world.p_options_hit
            if not hit:
                option_misses += 1
            correct = rng.random() < world.p_retrieval_correct[ctx.difficulty]
            options = (ctx.gt_label,) if hit else (world.wrong_label,)
            records.append(
                RolloutRecord.from_parts(
                    predicted=ctx.gt_label if correct else world.wrong_label,
                    gt=ctx.gt_label,
                    tool_called=True,
                    options_emitted=options,
                )
            )
        else:
            correct = rng.random() < world.p_direct_correct[ctx.difficulty]
            records.append(
                RolloutRecord.from_parts(
                    predicted=ctx.gt_label if correct else world.wrong_label,
                    gt=ctx.gt_label,
                    tool_called=False,
                    options_emitted=None,
                )
            )
    group = score_group(records, reward_cfg)
    return SimStep(
        group=group,
        difficulty=ctx.difficulty,
        actions=tuple(actions),
        retrievals=retrievals,
        option_misses=option_misses,
    )


def update_policy(
    policy: TabularPolicy, step: SimStep, lr: float
) -> TabularPolicy:
    """Advantage-weighted score-function update for one group.

    For a softmax policy the per-rollout gradient of log pi(action) with
    respect to the logits is onehot(action) - probs; contributions are
    summed over the group, scaled by each rollout's advantage.
    """
    probs = policy.probs(step.difficulty)
    grad = np.zeros(2, dtype=np.float64)
    for action, advantage in zip(step.actions, step.group.advantages):
        onehot = np.zeros(2, dtype=np.float64)
        onehot[action] = 1.0
        grad += advantage * (onehot - probs)
    policy.logits[step.difficulty] = policy.logits[step.difficulty] + lr * grad
    return policy


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    group_size: int = 8
    lr: float = 0.002
    seed: int = 0
    reward: RewardConfig = RewardConfig()

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass(frozen=True)
class CurvePoint:
    step: int
    p_retrieve_easy: float
    p_retrieve_hard: float
    mean_reward: float
    mean_alpha: float
    tool_miss_rate: float


@dataclass(frozen=True)
class TrainResult:
    policy: TabularPolicy
    curve: tuple[CurvePoint, ...]

    def final(self) -> CurvePoint:
        return self.curve[-1]


def train(world: SyntheticWorld, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Run the full loop: contexts round-robin, one group per step.

    A single seeded generator drives every draw in a fixed order, so the
    same world, config, and seed reproduce the same curve bit for bit.
    """
    rng = np.random.default_rng(cfg.seed)
    policy = TabularPolicy()
    curve = []
    for step_index in range(1, cfg.steps + 1):
        sim_step = rollout_group(
            world,
            policy,
            ctx_index=step_index - 1,
            rng=rng,
            group_size=cfg.group_size,
            reward_cfg=cfg.reward,
        )
        update_policy(policy, sim_step, cfg.lr)
        rewards = sim_step.group.rewards
        curve.append(
            CurvePoint(
                step=step_index,
                p_retrieve_easy=policy.p_retrieve("easy"),
                p_retrieve_hard=policy.p_retrieve("hard"),
                mean_reward=float(np.mean(rewards)),
                mean_alpha=sim_step.group.alpha,
                tool_miss_rate=sim_step.tool_miss_rate,
            )
        )
    return TrainResult(policy=policy, curve=tuple(curve))


CURVE_FIELDS = (
    "step",
    "p_retrieve_easy",
    "p_retrieve_hard",
    "mean_reward",
    "mean_alpha",
    "tool_miss_rate",
)


def write_curve_csv(curve, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_FIELDS)
        for point in curve:
            writer.writerow(
                [
                    point.step,
                    f"{point.p_retrieve_easy:.6f}",
                    f"{point.p_retrieve_hard:.6f}",
                    f"{point.mean_reward:.6f}",
                    f"{point.mean_alpha:.6f}",
                    f"{point.tool_miss_rate:.6f}",
                ]
            )
