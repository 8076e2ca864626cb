"""Show how the tool-aware reward scores a group of rollouts.

Eight rollouts of the same prompt land in different spots: some answered
directly, some retrieved first, some got it wrong. The group's share of
correct answers decides whether the prompt counts as easy or hard, and the
shaping term pays or fines each rollout accordingly. Advantages are then
standardized within the group, and the clipped surrogate turns them into a
per-rollout loss.

Run: python3 demos/reward_shaping.py
"""

from intentkit import (
    RewardConfig,
    RolloutRecord,
    group_advantages,
    group_alpha,
    grpo_surrogate,
    score_group,
)

GT = "complain"


def rollout(predicted, tool, options):
    return RolloutRecord.from_parts(
        predicted=predicted, gt=GT, tool_called=tool, options_emitted=options)


def main() -> None:
    # a hard prompt: most of the group gets it wrong
    group = [
        rollout(GT, True, ("complain", "taunt")),     # retrieved, options hit
        rollout(GT, False, None),                     # lucky direct answer
        rollout("taunt", False, None),                # stubborn direct, wrong
        rollout("taunt", True, ("complain", "oppose")),  # retrieved, still wrong
        rollout("oppose", False, None),
        rollout("taunt", False, None),
        rollout("oppose", True, ("taunt", "oppose")),    # options missed gt
        rollout("taunt", False, None),
    ]
    alpha = group_alpha(group)
    print(f"group accuracy alpha = {alpha:.3f} "
          f"({'easy' if alpha >= 0.5 else 'hard'} prompt)\n")

    scored = score_group(group)
    print(f"{'pred':<10} {'tool':<6} {'branch':<22} {'reward':<8} advantage")
    for record, breakdown, adv in zip(group, scored.breakdowns, scored.advantages):
        print(f"{str(record.outcome.predicted):<10} "
              f"{str(record.outcome.tool_called):<6} "
              f"{breakdown.branch.value:<22} {breakdown.total:<8.2f} {adv:+.3f}")

    advantages = group_advantages([b.total for b in scored.breakdowns])
    mean = sum(advantages) / len(advantages)
    print(f"\nadvantages: mean={mean:+.1e}, "
          f"unit variance={sum(a * a for a in advantages) / len(advantages):.6f}")

    # surrogate loss for the best rollout under a slightly drifted policy
    logp_old = [-0.9, -1.4, -0.3, -2.0]
    logp_new = [x + 0.05 for x in logp_old]
    loss = grpo_surrogate(logp_new, logp_old, advantages[0], [0.0] * 4,
                          RewardConfig(clip_eps=0.2, kl_beta=0.0))
    print(f"surrogate loss (drifted policy, best rollout): {loss:+.4f}")
    same = grpo_surrogate(logp_old, logp_old, advantages[0], [0.0] * 4)
    print(f"surrogate loss (identical policy):             {same:+.4f} "
          f"= -advantage exactly")


if __name__ == "__main__":
    main()
