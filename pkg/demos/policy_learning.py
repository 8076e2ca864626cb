"""Train the tabular retrieve-or-answer policy in the synthetic world.

Two request kinds exist: routine ones the model usually gets right on its
own, and ambiguous ones where only retrieval helps. With the full shaped
reward the policy learns to retrieve almost always on ambiguous requests
and almost never on routine ones. Strip the shaping term and flatten
retrieval's accuracy edge, and the split never appears.

Run: python3 demos/policy_learning.py [--steps N] [--seed N]
"""

import argparse

from intentkit import (
    RewardConfig,
    TrainConfig,
    ablated_config,
    default_world,
    tied_accuracy_world,
    train,
)


def show(tag, result, every=10):
    print(f"\n{tag}")
    print(f"{'step':>6} {'P(retrieve|easy)':>18} {'P(retrieve|hard)':>18} {'reward':>8}")
    points = result.curve
    for point in points[:: max(1, len(points) // every)]:
        print(f"{point.step:>6} {point.p_retrieve_easy:>18.3f} "
              f"{point.p_retrieve_hard:>18.3f} {point.mean_reward:>8.3f}")
    final = result.final()
    print(f"final: easy={final.p_retrieve_easy:.3f} hard={final.p_retrieve_hard:.3f}")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    full = train(default_world(), TrainConfig(steps=args.steps, seed=args.seed))
    show("shaped reward, default world:", full)

    naive = train(
        tied_accuracy_world(),
        TrainConfig(steps=args.steps, seed=args.seed,
                    reward=ablated_config(RewardConfig(), "no_tool")),
    )
    show("accuracy-only reward, tied world (no reason to specialize):", naive)

    f, n = full.final(), naive.final()
    print(f"\nseparation with shaping:    {abs(f.p_retrieve_hard - f.p_retrieve_easy):.3f}")
    print(f"separation without shaping: {abs(n.p_retrieve_hard - n.p_retrieve_easy):.3f}")


if __name__ == "__main__":
    main()
