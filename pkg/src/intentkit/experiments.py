"""Experiment harnesses: progressive history accumulation and strategy grids.

Accumulation replays one user's labeled stream in a controlled order. For
each incoming sample the agent first predicts with the library as it
currently stands, then the sample's explanation (the model's own emitted
one when available, a deterministic template otherwise) is inserted under
the true label. The curve of cumulative accuracy against history size
shows whether a growing personal history actually helps.

The strategy grid sweeps retrieval modes and k values over a fixed
evaluation set and reports accuracy, F1, and how often the agent called
the retrieval tool.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .agent import InferenceOutcome, StrategyMode, run_inference
from .errors import IntentKitError
from .library import IntentHistoryLibrary, templated_explanation
from .metrics import EvalRow, f1_report, accuracy
from .types import (
    IntentExplanation,
    IntentRecord,
    Taxonomy,
    canonical_form,
    has_personalized_segments,
    is_no_match,
)

ORDERINGS = ("given", "round_robin")


def order_round_robin(records, taxonomy: Taxonomy) -> list[IntentRecord]:
    """Interleave records one label at a time, cycling until exhausted.

    Records are grouped by label; groups are visited in order of
    frequency (descending, ties by vocabulary order) and each cycle takes
    the next unconsumed record from every group that still has one. Within
    a group the original order is preserved. The result is a deterministic
    stream where every label appears once per cycle while it lasts.
    """
    records = list(records)
    groups: dict[str, list[IntentRecord]] = {}
    for record in records:
        member = taxonomy.canonicalize(record.gt_label)
        if is_no_match(member):
            raise ValueError(
                f"record label {record.gt_label!r} not in taxonomy {taxonomy.name!r}"
            )
        groups.setdefault(member, []).append(record)
    ordered_labels = sorted(
        groups, key=lambda lbl: (-len(groups[lbl]), taxonomy.index(lbl))
    )
    cursors = {lbl: 0 for lbl in ordered_labels}
    out: list[IntentRecord] = []
    while len(out) < len(records):
        for label in ordered_labels:
            group = groups[label]
            cursor = cursors[label]
            if cursor < len(group):
                out.append(group[cursor])
                cursors[label] = cursor + 1
    return out


@dataclass(frozen=True)
class AccumulationPlan:
    records: tuple[IntentRecord, ...]
    ordering: str = "round_robin"
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("plan needs at least one record")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        checkpoints = self.checkpoints or (len(self.records),)
        object.__setattr__(self, "checkpoints", tuple(checkpoints))
        previous = 0
        for c in self.checkpoints:
            if not previous < c <= len(self.records):
                raise ValueError(
                    "checkpoints must be strictly increasing sample counts "
                    f"within 1..{len(self.records)}"
                )
            previous = c


@dataclass(frozen=True)
class AccumulationRow:
    n_history: int
    cumulative_accuracy: float
    errors: int


@dataclass(frozen=True)
class AccumulationResult:
    rows: tuple[AccumulationRow, ...]
    correctness: tuple[bool, ...]
    had_error: tuple[bool, ...]


def _emitted_explanation(outcome: InferenceOutcome) -> IntentExplanation | None:
    text = outcome.trajectory.final_explanation
    if not text or not text.strip():
        return None
    kind = "personalized" if has_personalized_segments(text) else "generic"
    return IntentExplanation(text=text, kind=kind)


def run_accumulation(
    plan: AccumulationPlan,
    taxonomy: Taxonomy,
    library: IntentHistoryLibrary,
    backend,
    mode: StrategyMode = StrategyMode.SELF_DECIDED,
    k: int = 3,
    max_turns: int = 6,
) -> AccumulationResult:
    """Stream the plan through the agent, growing the library as it goes.

    A backend failure on one sample counts as a wrong prediction with the
    error flag set, and the run continues; the sample is still inserted
    (with the templated explanation) so the history keeps growing.
    """
    if plan.ordering == "round_robin":
        ordered = order_round_robin(plan.records, taxonomy)
    else:
        ordered = list(plan.records)
    rows: list[AccumulationRow] = []
    correctness: list[bool] = []
    had_error: list[bool] = []
    checkpoint_set = set(plan.checkpoints)
    hits = 0
    errors = 0
    for count, record in enumerate(ordered, start=1):
        ctx = record.context
        explanation: IntentExplanation | None = None
        try:
            outcome = run_inference(
                ctx, taxonomy, library, mode, backend, max_turns=max_turns, k=k
            )
            correct = (
                not is_no_match(outcome.predicted)
                and canonical_form(outcome.predicted)
                == canonical_form(record.gt_label)
            )
            explanation = _emitted_explanation(outcome)
            error = False
        except IntentKitError:
            correct = False
            error = True
        if explanation is None:
            explanation = templated_explanation(record.gt_label, ctx)
        library.insert(ctx.user, record.gt_label, explanation)
        hits += int(correct)
        errors += int(error)
        correctness.append(correct)
        had_error.append(error)
        if count in checkpoint_set:
            rows.append(
                AccumulationRow(
                    n_history=len(library),
                    cumulative_accuracy=hits / count,
                    errors=errors,
                )
            )
    return AccumulationResult(
        rows=tuple(rows),
        correctness=tuple(correctness),
        had_error=tuple(had_error),
    )


ACCUMULATION_FIELDS = ("n_history", "cumulative_accuracy", "errors")


def write_accumulation_csv(rows, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ACCUMULATION_FIELDS)
        for row in rows:
            writer.writerow(
                [row.n_history, f"{row.cumulative_accuracy:.6f}", row.errors]
            )


# --- strategy grid -----------------------------------------------------------


@dataclass(frozen=True)
class StrategyGrid:
    modes: tuple[StrategyMode, ...] = (
        StrategyMode.FORCED_NO_RETRIEVAL,
        StrategyMode.SELF_DECIDED,
        StrategyMode.FORCED_RETRIEVAL,
    )
    k_values: tuple[int, ...] = (3,)
    reward_ablations: tuple[str, ...] = ("full",)

    def __post_init__(self) -> None:
        if not self.modes or not self.k_values or not self.reward_ablations:
            raise ValueError("grid axes must be non-empty")
        for k in self.k_values:
            if k < 1:
                raise ValueError("k values must be positive")


@dataclass(frozen=True)
class GridRow:
    mode: str
    k: int
    ablation: str
    acc: float
    macro_f1: float
    weighted_f1: float
    tc_percent: float


def tool_call_percent(outcomes) -> float:
    """Share of answered episodes that used retrieval, as a percentage.

    Episodes that ran out of turns without a final answer are excluded
    from the denominator; with no answered episodes at all the result
    is 0.0.
    """
    answered = [o for o in outcomes if o.answered]
    if not answered:
        return 0.0
    return 100.0 * sum(1 for o in answered if o.tool_called) / len(answered)


def _run_cell(records, taxonomy, library, backend, mode, k, max_turns):
    outcomes = [
        run_inference(
            record.context, taxonomy, library, mode, backend,
            max_turns=max_turns, k=k,
        )
        for record in records
    ]
    eval_rows = [
        EvalRow(gt=record.gt_label, preds=(outcome.predicted,))
        for record, outcome in zip(records, outcomes)
    ]
    report = f1_report(eval_rows, taxonomy)
    return (
        accuracy(eval_rows),
        report.macro_f1,
        report.weighted_f1,
        tool_call_percent(outcomes),
    )


def run_strategy_grid(
    grid: StrategyGrid,
    records,
    taxonomy: Taxonomy,
    library: IntentHistoryLibrary,
    backend_factory,
    max_turns: int = 6,
    jobs: int = 1,
) -> tuple[GridRow, ...]:
    """Evaluate every (mode, k, ablation) cell over the same record set.

    backend_factory is called once per cell so that stateful scripted
    backends start fresh; a non-callable is treated as a shared stateless
    backend. The ablation axis is carried through to the output rows as a
    tag. Rows come back sorted by (mode, k, ablation), independent of
    execution order, and cells never share mutable state, so results do
    not depend on jobs.
    """
    records = list(records)
    cells = [
        (mode, k, ablation)
        for mode in grid.modes
        for k in grid.k_values
        for ablation in grid.reward_ablations
    ]

    def evaluate_cell(cell):
        mode, k, ablation = cell
        backend = backend_factory() if callable(backend_factory) else backend_factory
        acc, macro, weighted, tc = _run_cell(
            records, taxonomy, library, backend, mode, k, max_turns
        )
        return GridRow(
            mode=StrategyMode(mode).value,
            k=k,
            ablation=ablation,
            acc=acc,
            macro_f1=macro,
            weighted_f1=weighted,
            tc_percent=tc,
        )

    if jobs > 1 and callable(backend_factory):
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate_cell, cells))
    else:
        results = [evaluate_cell(cell) for cell in cells]
    return tuple(sorted(results, key=lambda r: (r.mode, r.k, r.ablation)))


GRID_FIELDS = ("mode", "k", "ablation", "acc", "macro_f1", "weighted_f1", "tc_percent")


def write_grid_csv(rows, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.mode,
                    row.k,
                    row.ablation,
                    f"{row.acc:.6f}",
                    f"{row.macro_f1:.6f}",
                    f"{row.weighted_f1:.6f}",
                    f"{row.tc_percent:.2f}",
                ]
            )
