"""Produce supervision trajectories from labeled records and export JSONL.

A scripted "teacher" walks each record; wrong guesses get feedback, option
lists that miss the true label get silently repaired, and a stubborn
teacher gets the answer revealed at the end. Every finished trajectory is
audited so the true label never leaks through a user-role message.

Run: python3 demos/generate_sft_data.py
"""

import json
import tempfile
from pathlib import Path

from intentkit import (
    Context,
    EmbedderSpec,
    GenConfig,
    IntentExplanation,
    IntentHistoryLibrary,
    IntentRecord,
    ScriptedLLM,
    export_sft_dataset,
    generate_trajectory,
    get_taxonomy,
    leakage_audit,
)
from intentkit.llm import AnswerStep, ToolCallStep


def main() -> None:
    weibo = get_taxonomy("weibo")
    library = IntentHistoryLibrary(weibo, EmbedderSpec(backend="hashed_bow", dim=256))
    library.insert("lin", "personal record", IntentExplanation(
        "Lin archives her climbing sessions with route grades.", "generic"))

    record = IntentRecord(
        context=Context(
            user="lin",
            situational_text="Posted after a climbing session.",
            action_text="Finally sent the blue overhang, third attempt this month!",
        ),
        gt_label="personal record",
        explanation=None,
        split="train",
    )

    # teacher guesses wrong, then proposes options that miss the truth —
    # the generator steers it once and repairs the option list if needed
    teacher = ScriptedLLM([
        AnswerStep("social approval"),
        ToolCallStep(options=("social approval", "exhibition")),
        AnswerStep("personal record", "Session logging pattern in her history."),
    ])

    outcome = generate_trajectory(record, library, teacher, GenConfig(i_max=5))
    print(f"status: {outcome.status} after {outcome.attempts} attempts")
    print(f"leak audit (should be []): {leakage_audit(outcome.trajectory, 'personal record')}\n")
    for i, msg in enumerate(outcome.trajectory.messages):
        body = msg.content if len(msg.content) < 90 else msg.content[:87] + "..."
        print(f"  [{i}] {msg.role:<9} {body!r}")

    out = Path(tempfile.mkdtemp()) / "sft.jsonl"
    report = export_sft_dataset([outcome], out)
    print(f"\nwrote {report.written} trajectories to {out}")
    row = json.loads(out.read_text().splitlines()[0])
    print(f"jsonl fields: {sorted(row)}")


if __name__ == "__main__":
    main()
