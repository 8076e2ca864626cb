"""Metric correctness against hand-computed fixtures from oracles.py."""

import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentkit.errors import (
    DegenerateRangeError,
    EmptyInputError,
    InsufficientClassesError,
    InsufficientSamplesError,
)
from intentkit.metrics import (
    EvalRow,
    accuracy,
    confusion_matrix,
    evaluate,
    f1_report,
    gen_gap,
    gen_gap_vis,
    head_tail_report,
    pass_at_n,
    write_report_csv,
    write_report_json,
)
from intentkit.types import NO_MATCH, Taxonomy

from oracles import (
    GAP_CASES,
    GAP_VIS_CASES,
    METRIC_EXPECTED,
    METRIC_LABELS,
    METRIC_ROWS,
    PASS_EXPECTED,
    PASS_ROWS,
)

APPROX = dict(abs=1e-12)


@pytest.fixture
def taxonomy():
    return Taxonomy("fixture", METRIC_LABELS)


@pytest.fixture
def rows():
    return [
        EvalRow(gt=gt, preds=(NO_MATCH if pred is None else pred,))
        for gt, pred in METRIC_ROWS
    ]


@pytest.fixture
def pass_rows():
    return [EvalRow(gt=gt, preds=preds) for gt, preds in PASS_ROWS]


class TestEvalRow:
    def test_requires_predictions(self):
        with pytest.raises(ValueError):
            EvalRow(gt="red", preds=())


class TestAccuracy:
    def test_fixture_value(self, rows):
        assert accuracy(rows) == pytest.approx(METRIC_EXPECTED["accuracy"], **APPROX)

    def test_none_and_sentinel_count_identically(self, rows):
        with_none = [
            EvalRow(gt=gt, preds=(pred,)) for gt, pred in METRIC_ROWS
        ]
        assert accuracy(with_none) == accuracy(rows)

    def test_cosmetic_variants_match(self):
        assert accuracy([EvalRow(gt="red", preds=("  RED ",))]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            accuracy([])


class TestPassAtN:
    @pytest.mark.parametrize("n", sorted(PASS_EXPECTED))
    def test_fixture_values(self, pass_rows, n):
        assert pass_at_n(pass_rows, n) == pytest.approx(PASS_EXPECTED[n], **APPROX)

    def test_uses_prefix_not_any_subset(self, pass_rows):
        # row 1's only hit sits at position 2, so pass@1 must not see it
        assert pass_at_n(pass_rows, 1) < pass_at_n(pass_rows, 2)

    def test_n_must_be_positive(self, pass_rows):
        with pytest.raises(ValueError):
            pass_at_n(pass_rows, 0)

    def test_insufficient_samples_names_row(self, pass_rows):
        with pytest.raises(InsufficientSamplesError, match="row 0"):
            pass_at_n(pass_rows, 5)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            pass_at_n([], 1)

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(METRIC_LABELS),
                st.lists(
                    st.sampled_from(METRIC_LABELS + (None,)),
                    min_size=4,
                    max_size=4,
                ),
            ),
            min_size=1,
            max_size=20,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_n(self, raw):
        rows = [EvalRow(gt=gt, preds=tuple(preds)) for gt, preds in raw]
        values = [pass_at_n(rows, n) for n in (1, 2, 3, 4)]
        assert values == sorted(values)


class TestConfusionMatrix:
    def test_fixture_matrix(self, rows, taxonomy):
        got = confusion_matrix(rows, taxonomy)
        np.testing.assert_array_equal(got, np.array(METRIC_EXPECTED["confusion"]))

    def test_shape(self, rows, taxonomy):
        assert confusion_matrix(rows, taxonomy).shape == (4, 5)

    def test_row_sums_are_supports(self, rows, taxonomy):
        got = confusion_matrix(rows, taxonomy)
        assert got.sum() == len(rows)
        for label, (_, _, _, support) in METRIC_EXPECTED["per_class"].items():
            assert got[taxonomy.index(label)].sum() == support

    def test_unknown_ground_truth_rejected(self, taxonomy):
        with pytest.raises(ValueError, match="mauve"):
            confusion_matrix([EvalRow(gt="mauve", preds=("red",))], taxonomy)

    def test_out_of_vocabulary_prediction_lands_in_overflow(self, taxonomy):
        got = confusion_matrix([EvalRow(gt="red", preds=("crimson",))], taxonomy)
        assert got[0, 4] == 1


class TestF1Report:
    def test_per_class_fixture_values(self, rows, taxonomy):
        report = f1_report(rows, taxonomy)
        by_label = {s.label: s for s in report.per_class}
        for label, (precision, recall, f1, support) in METRIC_EXPECTED[
            "per_class"
        ].items():
            stats = by_label[label]
            assert stats.precision == pytest.approx(precision, **APPROX), label
            assert stats.recall == pytest.approx(recall, **APPROX), label
            assert stats.f1 == pytest.approx(f1, **APPROX), label
            assert stats.support == support, label

    def test_macro_over_present_classes(self, rows, taxonomy):
        report = f1_report(rows, taxonomy)
        assert report.macro_f1 == pytest.approx(METRIC_EXPECTED["macro_f1"], **APPROX)

    def test_macro_over_whole_taxonomy(self, rows, taxonomy):
        report = f1_report(rows, taxonomy, macro_over_taxonomy=True)
        assert report.macro_f1 == pytest.approx(
            METRIC_EXPECTED["macro_f1_over_taxonomy"], **APPROX
        )

    def test_weighted_f1(self, rows, taxonomy):
        report = f1_report(rows, taxonomy)
        assert report.weighted_f1 == pytest.approx(
            METRIC_EXPECTED["weighted_f1"], **APPROX
        )

    def test_empty_rejected(self, taxonomy):
        with pytest.raises(EmptyInputError):
            f1_report([], taxonomy)


class TestGenGap:
    @pytest.mark.parametrize("train,test,expected", GAP_CASES)
    def test_cases(self, train, test, expected):
        assert gen_gap(train, test) == pytest.approx(expected, **APPROX)

    def test_input_validation(self):
        with pytest.raises(ValueError, match="acc_train"):
            gen_gap(1.2, 0.5)
        with pytest.raises(ValueError, match="acc_test"):
            gen_gap(0.5, -0.1)

    @pytest.mark.parametrize("gap,g_min,g_max,expected", GAP_VIS_CASES)
    def test_vis_cases(self, gap, g_min, g_max, expected):
        assert gen_gap_vis(gap, g_min, g_max) == pytest.approx(expected, **APPROX)

    def test_vis_degenerate_range(self):
        with pytest.raises(DegenerateRangeError):
            gen_gap_vis(0.1, 0.2, 0.2)


class TestHeadTail:
    def test_fixture_split(self, rows, taxonomy):
        report = head_tail_report(rows, taxonomy, top=1, bottom=1)
        assert [s.label for s in report.head] == [METRIC_EXPECTED["head_label"]]
        assert [s.label for s in report.tail] == [METRIC_EXPECTED["tail_label"]]
        assert report.head_mean_recall == pytest.approx(
            METRIC_EXPECTED["head_recall"], **APPROX
        )
        assert report.tail_mean_recall == pytest.approx(
            METRIC_EXPECTED["tail_recall"], **APPROX
        )

    def test_needs_enough_supported_classes(self, rows, taxonomy):
        with pytest.raises(InsufficientClassesError):
            head_tail_report(rows, taxonomy, top=2, bottom=2)

    def test_bounds_validated(self, rows, taxonomy):
        with pytest.raises(ValueError):
            head_tail_report(rows, taxonomy, top=0, bottom=1)


class TestEvaluateBundle:
    def test_bundles_everything(self, rows, taxonomy):
        report = evaluate(rows, taxonomy)
        assert report.n_rows == 8
        assert report.acc == pytest.approx(METRIC_EXPECTED["accuracy"], **APPROX)
        assert report.macro_f1 == pytest.approx(METRIC_EXPECTED["macro_f1"], **APPROX)
        assert report.weighted_f1 == pytest.approx(
            METRIC_EXPECTED["weighted_f1"], **APPROX
        )
        assert report.pass_n is None
        assert report.pass_at_n_value is None
        assert report.labels == METRIC_LABELS
        assert report.confusion == METRIC_EXPECTED["confusion"]

    def test_pass_n_included_when_requested(self, pass_rows):
        taxonomy = Taxonomy("fixture", METRIC_LABELS)
        report = evaluate(pass_rows, taxonomy, pass_n=2)
        assert report.pass_n == 2
        assert report.pass_at_n_value == pytest.approx(PASS_EXPECTED[2], **APPROX)

    def test_json_writer_round_trips(self, rows, taxonomy, tmp_path):
        report = evaluate(rows, taxonomy)
        path = tmp_path / "report.json"
        write_report_json(report, path)
        loaded = json.loads(path.read_text(encoding="utf-8"))
        assert loaded == report.to_dict()
        assert loaded["acc"] == pytest.approx(0.5)
        assert loaded["confusion"][0] == [1, 0, 1, 0, 1]

    def test_csv_writer_layout(self, rows, taxonomy, tmp_path):
        report = evaluate(rows, taxonomy, pass_n=1)
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        with open(path, newline="", encoding="utf-8") as fh:
            table = list(csv.reader(fh))
        assert table[0] == ["metric", "value"]
        flat = {row[0]: row[1] for row in table if len(row) == 2}
        assert flat["acc"] == "0.500000"
        assert flat["n_rows"] == "8"
        assert "pass_at_1" in flat
        class_header = table.index(["class", "precision", "recall", "f1", "support"])
        class_rows = {row[0]: row for row in table[class_header + 1 :]}
        assert class_rows["blue"][4] == "3"
        assert class_rows["blue"][3] == f"{2 / 3:.6f}"