"""Walk one multi-turn inference episode with a scripted model.

The scripted backend replays canned steps, so the whole tool-calling loop
runs without a GPU or network: the agent proposes candidate intents,
retrieves the user's history for them, and commits to an answer.

Run: python3 demos/agent_rollout.py
"""

from intentkit import (
    Context,
    EmbedderSpec,
    IntentExplanation,
    IntentHistoryLibrary,
    ScriptedLLM,
    StrategyMode,
    get_taxonomy,
    run_inference,
)
from intentkit.llm import AnswerStep, ToolCallStep


def fill_library(library: IntentHistoryLibrary) -> None:
    library.insert("sandra", "complain", IntentExplanation(
        "When service is slow Sandra posts pointed comments tagging the "
        "company account; she expects a fix, not sympathy.", "generic"))
    library.insert("sandra", "joke", IntentExplanation(
        "Deadpan one-liners about her own cooking disasters, always with "
        "the same winking emoji.", "generic"))


def main() -> None:
    taxonomy = get_taxonomy("mintrec2")
    library = IntentHistoryLibrary(taxonomy, EmbedderSpec(backend="hashed_bow", dim=256))
    fill_library(library)

    ctx = Context(
        user="sandra",
        situational_text="Group chat about a food delivery that arrived two hours late.",
        action_text="Wow, incredible service as always. Truly world class.",
    )

    # The script: the model is unsure between complain/joke, asks the
    # library, then commits. Swap these steps to explore other paths.
    backend = ScriptedLLM([
        ToolCallStep(options=("complain", "joke")),
        AnswerStep("complain", "Sarcasm aimed at the courier; history shows "
                               "she escalates slow service rather than joking."),
    ])

    outcome = run_inference(ctx, taxonomy, library, StrategyMode.SELF_DECIDED, backend)

    print(f"predicted: {outcome.predicted}")
    print(f"tool used: {outcome.tool_called}, turns: {outcome.turns_used}")
    print(f"options emitted: {outcome.options_emitted}\n")
    print("dialogue transcript (loss_masked=True is excluded from SFT loss):")
    for i, msg in enumerate(outcome.trajectory.messages):
        body = msg.content if len(msg.content) < 100 else msg.content[:97] + "..."
        print(f"  [{i}] {msg.role:<9} masked={msg.loss_masked!s:<5} {body!r}")


if __name__ == "__main__":
    main()
