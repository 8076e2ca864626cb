"""Replay one user's stream and watch accuracy rise as history accumulates.

Each record is predicted first, then inserted into the library, so the
n-th prediction can only lean on the previous n-1. With retrieval on, the
first sight of each label misses and every later sight hits; with the tool
disabled the curve stays flat.

Run: python3 demos/accumulation_curve.py
"""

from intentkit import (
    AccumulationPlan,
    Context,
    EmbedderSpec,
    IntentHistoryLibrary,
    IntentRecord,
    StrategyMode,
    run_accumulation,
)
from intentkit.types import Taxonomy

# deliberately token-disjoint themes so nearest-neighbor evidence is clean
THEMES = {
    "red": "crimson ember glow",
    "green": "moss fern sprout",
    "blue": "cobalt wave tide",
    "amber": "resin honey lantern",
}
COLORS = Taxonomy("colors", tuple(THEMES))


class NearestLabelModel:
    """Minimal stand-in model: retrieve, then answer the top match's label."""

    def __init__(self, library):
        self.library = library
        self.pending_query = None

    def complete(self, request):
        from intentkit.llm import render_answer, render_tool_call
        last = request.messages[-1]
        if last.role == "tool" or "retrieval tool is disabled" in last.content:
            label = self._top_label() or "red"
            return [render_answer(label, "nearest history entry")]
        self.pending_query = request.messages[1].content
        return [render_tool_call(tuple(THEMES), user="pat")]

    def _top_label(self):
        result = self.library.retrieve(
            "pat", options=tuple(THEMES), query_text=self.pending_query or "", k=1)
        return result.matches[0].entry.label if result.matches else None


def records(cycles=5):
    rows = []
    for _ in range(cycles):
        for label, theme in THEMES.items():
            rows.append(IntentRecord(
                Context("pat", "", f"{theme} item{len(rows):02d}"),
                label, None, "train"))
    return tuple(rows)


def cycle_accuracy(correctness, width):
    return [sum(correctness[i:i + width]) / width
            for i in range(0, len(correctness), width)]


def run(mode):
    library = IntentHistoryLibrary(COLORS, EmbedderSpec(backend="hashed_bow", dim=512))
    plan = AccumulationPlan(records=records(), ordering="round_robin")
    result = run_accumulation(plan, COLORS, library, NearestLabelModel(library),
                              mode=mode)
    return cycle_accuracy(result.correctness, len(THEMES))


def main() -> None:
    rising = run(StrategyMode.SELF_DECIDED)
    flat = run(StrategyMode.FORCED_NO_RETRIEVAL)
    print("accuracy per pass over the four labels:")
    print(f"  with retrieval: {['%.2f' % a for a in rising]}")
    print(f"  tool disabled:  {['%.2f' % a for a in flat]}")


if __name__ == "__main__":
    main()
