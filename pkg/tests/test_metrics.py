import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionkit.metrics import (ConfusionMatrix, MetricsError, average_reports, confusion,
                               intervals_to_csv, metrics_report, reports_to_csv, to_json,
                               wald_interval, wilson_interval, z_quantile)

CLASSES = ("Monkeypox", "Normal")

# Independent oracle values: Wilson bounds as the roots of
# (1 + z^2/n) x^2 - (2p + z^2/n) x + p^2 = 0 (numpy.roots), Wald from p +- z sqrt(p(1-p)/n).
WILSON = {(34, 60): (0.44103438776125553, 0.6842760319531324),
          (15, 16): (0.71671262429701, 0.9888806552353583),
          (13, 16): (0.5699111903802583, 0.934084009285719)}
WALD = {(34, 60): (0.44128115747871366, 0.6920521758546196),
        (13, 16): (0.6212504506189752, 1.0)}


def degenerate():
    return confusion([0] * 16, [0] * 9 + [1] * 7, CLASSES)


def test_confusion_counts():
    cm = confusion([0] * 9 + [1] * 7, [0] * 9 + [1] * 7, CLASSES)
    assert cm.counts.tolist() == [[9, 0], [0, 7]]
    assert degenerate().one_vs_rest() == {"tp": 9, "fp": 7, "tn": 0, "fn": 0}


def test_confusion_errors():
    with pytest.raises(MetricsError):
        confusion([0, 1], [0], CLASSES)
    with pytest.raises(MetricsError):
        confusion([], [], CLASSES)
    with pytest.raises(MetricsError):
        confusion([0], [0], ("only",))
    with pytest.raises(MetricsError):
        confusion([2], [0], CLASSES)


def test_degenerate_weighted_row():
    r = metrics_report(degenerate())
    assert r.accuracy == pytest.approx(0.5625)
    assert r.precision == pytest.approx(0.31640625)
    assert r.recall == pytest.approx(0.5625)
    assert r.f1 == pytest.approx(9 / 16 * (2 * 0.5625 / 1.5625))
    assert (r.sensitivity, r.specificity) == (1.0, 0.0)
    # the same row at two decimals
    expected = (0.56, 0.32, 0.56, 0.40, 1.0, 0.0)
    assert all(abs(round(v, 2) - e) <= 0.01 + 1e-9 for v, e in zip(r.as_row(), expected))


def test_perfect_classifier():
    r = metrics_report(confusion([0, 1, 1, 0], [0, 1, 1, 0], CLASSES))
    assert r.as_row() == [1.0] * 6


def test_near_perfect_case():
    cm = ConfusionMatrix(np.array([[9, 0], [1, 6]]), CLASSES)
    r = metrics_report(cm)
    assert r.accuracy == 15 / 16
    assert r.sensitivity == 1.0
    assert r.specificity == pytest.approx(6 / 7)


def test_positive_averaging():
    cm = ConfusionMatrix(np.array([[8, 1], [2, 5]]), CLASSES)
    r = metrics_report(cm, "positive")
    assert r.precision == 8 / 10 and r.recall == 8 / 9
    assert r.recall == r.sensitivity


def test_empty_matrix_rejected():
    with pytest.raises(MetricsError):
        metrics_report(ConfusionMatrix(np.zeros((2, 2)), CLASSES))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 4).flatmap(
    lambda k: st.lists(st.integers(0, 6), min_size=k * k, max_size=k * k).map(
        lambda v: np.array(v).reshape(k, k))))
def test_accuracy_is_trace_over_total(counts):
    if counts.sum() == 0 or counts.sum() > 50:
        return
    k = counts.shape[0]
    r = metrics_report(ConfusionMatrix(counts, tuple(str(i) for i in range(k))))
    assert r.accuracy == np.trace(counts) / counts.sum()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=4, max_size=4))
def test_specificity_is_swapped_sensitivity(v):
    counts = np.array(v).reshape(2, 2)
    if counts.sum() == 0:
        return
    a = metrics_report(ConfusionMatrix(counts, CLASSES, "Monkeypox"))
    b = metrics_report(ConfusionMatrix(counts, CLASSES, "Normal"))
    assert a.specificity == b.sensitivity
    assert a.sensitivity == metrics_report(ConfusionMatrix(counts, CLASSES), "positive").recall


def test_average_reports():
    reps = []
    for acc_k in (8, 9, 10, 7, 6):  # accuracies 0.8 .. 0.6 over 10 samples
        reps.append(metrics_report(confusion([0] * acc_k + [1] * (10 - acc_k), [0] * 10 + [], CLASSES)))
    assert average_reports(reps).accuracy == pytest.approx(0.8)
    same = average_reports([reps[0]] * 5)
    assert same.as_row() == pytest.approx(reps[0].as_row())


# -- intervals ---------------------------------------------------------------

def test_z():
    assert z_quantile(0.05) == pytest.approx(1.959963984540054, abs=1e-15)
    assert z_quantile(0.1) == pytest.approx(1.6448536269514722, abs=1e-12)


@pytest.mark.parametrize("kn", sorted(WILSON))
def test_wilson_oracle(kn):
    ci = wilson_interval(*kn)
    assert (ci.lower, ci.upper) == pytest.approx(WILSON[kn], abs=1e-12)


@pytest.mark.parametrize("kn", sorted(WALD))
def test_wald_oracle(kn):
    ci = wald_interval(*kn)
    assert (ci.lower, ci.upper) == pytest.approx(WALD[kn], abs=1e-12)


def test_rounded_endpoint_values():
    assert (round(wilson_interval(34, 60).lower, 3), round(wilson_interval(34, 60).upper, 3)) == (0.441, 0.684)
    assert (round(wilson_interval(15, 16).lower, 3), round(wilson_interval(15, 16).upper, 3)) == (0.717, 0.989)
    assert (round(wald_interval(34, 60).lower, 3), round(wald_interval(34, 60).upper, 3)) == (0.441, 0.692)
    w = wald_interval(13, 16)
    assert round(w.lower, 3) == 0.621 and w.upper == 1.0


def test_boundaries():
    assert wilson_interval(10, 10).upper == 1.0
    assert wilson_interval(0, 10).lower == 0.0
    w = wald_interval(0, 10)
    assert (w.lower, w.upper) == (0.0, 0.0)
    with pytest.raises(MetricsError):
        wilson_interval(5, 4)
    with pytest.raises(MetricsError):
        wald_interval(0, 0)


def test_width_shrinks_with_n():
    for method in (wilson_interval, wald_interval):
        for p_num, p_den in ((1, 2), (3, 10), (9, 10)):
            widths = [method(n * p_num // p_den, n).upper - method(n * p_num // p_den, n).lower
                      for n in range(p_den * 1, 1001, p_den)]
            assert all(a > b for a, b in zip(widths, widths[1:]))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 500).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))),
       st.sampled_from([0.01, 0.05, 0.1, 0.2]))
def test_intervals_contain_estimate(kn, alpha):
    k, n = kn
    for ci in (wilson_interval(k, n, alpha), wald_interval(k, n, alpha)):
        assert 0.0 <= ci.lower <= k / n <= ci.upper <= 1.0


def test_exports_are_stable():
    r = metrics_report(degenerate())
    assert reports_to_csv({"a": r}).splitlines()[0].startswith("name,accuracy")
    assert intervals_to_csv({"a": wilson_interval(3, 4)}).count("\n") == 2
    text = to_json({"b": r, "a": wilson_interval(1, 2)})
    assert list(json.loads(text)) == ["a", "b"] and text == to_json({"a": wilson_interval(1, 2), "b": r})
