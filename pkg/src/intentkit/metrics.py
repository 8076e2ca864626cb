"""Evaluation metrics for closed-vocabulary intent prediction.

Predictions that fail to resolve to a taxonomy member (including the
NO_MATCH sentinel itself) are never silently dropped: they occupy a
dedicated overflow column in the confusion matrix and count as wrong
everywhere else. Every ratio in this module follows one convention: a zero
denominator yields 0.0 rather than an error or a NaN.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateRangeError,
    EmptyInputError,
    InsufficientClassesError,
    InsufficientSamplesError,
)
from .types import Taxonomy, canonical_form, is_no_match


@dataclass(frozen=True)
class EvalRow:
    """Ground truth plus sampled predictions; preds[0] is the greedy one."""

    gt: str
    preds: tuple

    def __post_init__(self) -> None:
        if not self.preds:
            raise ValueError("row needs at least one prediction")


def _pred_matches(pred, gt: str) -> bool:
    if pred is None or is_no_match(pred):
        return False
    return canonical_form(pred) == canonical_form(gt)


def accuracy(rows) -> float:
    """Share of rows whose greedy prediction matches the ground truth."""
    rows = list(rows)
    if not rows:
        raise EmptyInputError("accuracy needs at least one row")
    hits = sum(1 for row in rows if _pred_matches(row.preds[0], row.gt))
    return hits / len(rows)


def pass_at_n(rows, n: int) -> float:
    """Share of rows where any of the first n samples is correct."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rows = list(rows)
    if not rows:
        raise EmptyInputError("pass_at_n needs at least one row")
    for i, row in enumerate(rows):
        if len(row.preds) < n:
            raise InsufficientSamplesError(
                f"row {i} has {len(row.preds)} samples, pass@{n} needs {n}"
            )
    hits = sum(
        1 for row in rows if any(_pred_matches(p, row.gt) for p in row.preds[:n])
    )
    return hits / len(rows)


def confusion_matrix(rows, taxonomy: Taxonomy) -> np.ndarray:
    """K x (K+1) count matrix: one row per class, last column = no match.

    Row order follows the taxonomy. Predictions outside the vocabulary and
    NO_MATCH land in the overflow column of their ground-truth row.
    """
    rows = list(rows)
    k = len(taxonomy)
    matrix = np.zeros((k, k + 1), dtype=np.int64)
    for row in rows:
        gt_member = taxonomy.canonicalize(row.gt)
        if is_no_match(gt_member):
            raise ValueError(
                f"ground truth {row.gt!r} is not in taxonomy {taxonomy.name!r}"
            )
        gi = taxonomy.index(gt_member)
        pred = row.preds[0]
        if pred is None or is_no_match(pred):
            matrix[gi, k] += 1
            continue
        member = taxonomy.canonicalize(pred)
        if is_no_match(member):
            matrix[gi, k] += 1
        else:
            matrix[gi, taxonomy.index(member)] += 1
    return matrix


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class ClassStats:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class F1Report:
    per_class: tuple[ClassStats, ...]
    macro_f1: float
    weighted_f1: float


def f1_report(
    rows, taxonomy: Taxonomy, macro_over_taxonomy: bool = False
) -> F1Report:
    """Per-class precision/recall/F1 plus macro and support-weighted means.

    By default the macro average runs over classes that actually appear in
    the ground truth; with macro_over_taxonomy=True it runs over the whole
    vocabulary, so empty classes pull the mean down with their 0.0.
    """
    rows = list(rows)
    if not rows:
        raise EmptyInputError("f1_report needs at least one row")
    matrix = confusion_matrix(rows, taxonomy)
    stats = []
    for idx, label in enumerate(taxonomy.labels):
        true_positive = float(matrix[idx, idx])
        predicted = float(matrix[:, idx].sum())
        support = int(matrix[idx, :].sum())
        precision = _safe_div(true_positive, predicted)
        recall = _safe_div(true_positive, float(support))
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        stats.append(
            ClassStats(
                label=label,
                precision=precision,
                recall=recall,
                f1=f1,
                support=support,
            )
        )
    if macro_over_taxonomy:
        macro_pool = stats
    else:
        macro_pool = [s for s in stats if s.support > 0]
    macro = sum(s.f1 for s in macro_pool) / len(macro_pool) if macro_pool else 0.0
    total_support = sum(s.support for s in stats)
    weighted = _safe_div(
        sum(s.f1 * s.support for s in stats), float(total_support)
    )
    return F1Report(per_class=tuple(stats), macro_f1=macro, weighted_f1=weighted)


def gen_gap(acc_train: float, acc_test: float) -> float:
    """Raw generalization gap: train accuracy minus test accuracy."""
    for name, value in (("acc_train", acc_train), ("acc_test", acc_test)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return acc_train - acc_test


def gen_gap_vis(gap: float, g_min: float, g_max: float) -> float:
    """Rescale a gap onto [0, 1] where 1 means the smallest observed gap."""
    if g_max == g_min:
        raise DegenerateRangeError("gap range endpoints must differ")
    return (g_max - gap) / (g_max - g_min)


@dataclass(frozen=True)
class HeadTailReport:
    """Per-class accuracy for the most and least frequent classes."""

    head: tuple[ClassStats, ...]
    tail: tuple[ClassStats, ...]

    @property
    def head_mean_recall(self) -> float:
        return sum(s.recall for s in self.head) / len(self.head)

    @property
    def tail_mean_recall(self) -> float:
        return sum(s.recall for s in self.tail) / len(self.tail)


def head_tail_report(
    rows, taxonomy: Taxonomy, top: int = 5, bottom: int = 5
) -> HeadTailReport:
    """Split supported classes by frequency and compare their recall.

    Classes are ranked by support descending, ties broken by vocabulary
    order. Only classes with nonzero support participate; there must be at
    least top + bottom of them.
    """
    if top < 1 or bottom < 1:
        raise ValueError("top and bottom must be positive")
    report = f1_report(rows, taxonomy)
    supported = [s for s in report.per_class if s.support > 0]
    if len(supported) < top + bottom:
        raise InsufficientClassesError(
            f"need {top + bottom} supported classes, found {len(supported)}"
        )
    ranked = sorted(
        supported,
        key=lambda s: (-s.support, taxonomy.index(s.label)),
    )
    return HeadTailReport(head=tuple(ranked[:top]), tail=tuple(ranked[-bottom:]))


@dataclass(frozen=True)
class MetricReport:
    """Bundle of everything evaluate() computes for one prediction set."""

    n_rows: int
    acc: float
    macro_f1: float
    weighted_f1: float
    pass_n: int | None
    pass_at_n_value: float | None
    per_class: tuple[ClassStats, ...]
    labels: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "acc": self.acc,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "pass_n": self.pass_n,
            "pass_at_n": self.pass_at_n_value,
            "per_class": [
                {
                    "label": s.label,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for s in self.per_class
            ],
            "labels": list(self.labels),
            "confusion": [list(r) for r in self.confusion],
        }


def evaluate(
    rows,
    taxonomy: Taxonomy,
    pass_n: int | None = None,
    macro_over_taxonomy: bool = False,
) -> MetricReport:
    rows = list(rows)
    report = f1_report(rows, taxonomy, macro_over_taxonomy=macro_over_taxonomy)
    matrix = confusion_matrix(rows, taxonomy)
    pass_value = pass_at_n(rows, pass_n) if pass_n is not None else None
    return MetricReport(
        n_rows=len(rows),
        acc=accuracy(rows),
        macro_f1=report.macro_f1,
        weighted_f1=report.weighted_f1,
        pass_n=pass_n,
        pass_at_n_value=pass_value,
        per_class=report.per_class,
        labels=taxonomy.labels,
        confusion=tuple(tuple(int(x) for x in row) for row in matrix),
    )


def write_report_json(report: MetricReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(report: MetricReport, path: str | Path) -> None:
    """Flat metric,value rows followed by one row per class."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["n_rows", report.n_rows])
        writer.writerow(["acc", f"{report.acc:.6f}"])
        writer.writerow(["macro_f1", f"{report.macro_f1:.6f}"])
        writer.writerow(["weighted_f1", f"{report.weighted_f1:.6f}"])
        if report.pass_n is not None:
            writer.writerow(
                [f"pass_at_{report.pass_n}", f"{report.pass_at_n_value:.6f}"]
            )
        writer.writerow([])
        writer.writerow(["class", "precision", "recall", "f1", "support"])
        for s in report.per_class:
            writer.writerow(
                [
                    s.label,
                    f"{s.precision:.6f}",
                    f"{s.recall:.6f}",
                    f"{s.f1:.6f}",
                    s.support,
                ]
            )
