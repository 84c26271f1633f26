import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syntha1c.evaluation import (
    EvalError,
    age_decade,
    bland_altman,
    classification_report,
    confusion_counts,
    group_of,
    regression_report,
    stratified_report,
    syntha1c_labels,
    write_bland_altman_csv,
)


def oracle_counts(p, t):
    tp = fp = tn = fn = 0
    for a, b in zip(p, t):
        if a and b:
            tp += 1
        elif a:
            fp += 1
        elif b:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


@settings(max_examples=200)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
def test_confusion_metrics_match_formulas(pairs):
    p, t = zip(*pairs)
    tp, fp, tn, fn = oracle_counts(p, t)
    rep = classification_report(p, t)
    assert (rep.counts.tp, rep.counts.fp, rep.counts.tn, rep.counts.fn) == (tp, fp, tn, fn)
    for got, num, den in ((rep.recall, tp, tp + fn), (rep.precision, tp, tp + fp),
                          (rep.specificity, tn, tn + fp), (rep.accuracy, tp + tn, len(p))):
        if den == 0:
            assert got is None
        else:
            assert abs(got - num / den) <= 1e-10


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=50))
def test_regression_matches_formulas(pairs):
    p = [a for a, _ in pairs]
    t = [b for _, b in pairs]
    rep = regression_report(p, t)
    rmse = math.sqrt(math.fsum((a - b) ** 2 for a, b in pairs) / len(pairs))
    assert abs(rep.rmse - rmse) <= 1e-10 * max(1.0, rmse)
    mp, mt = math.fsum(p) / len(p), math.fsum(t) / len(t)
    sxy = math.fsum((a - mp) * (b - mt) for a, b in pairs)
    sxx = math.fsum((a - mp) ** 2 for a in p)
    syy = math.fsum((b - mt) ** 2 for b in t)
    if sxx * syy > 1e-12:
        assert abs(rep.pcc - sxy / math.sqrt(sxx * syy)) <= 1e-8
    if sxx == 0 or syy == 0:
        assert rep.pcc is None


def test_identical_predictions():
    t = np.array([5.0, 6.1, 7.3, 8.0])
    rep = regression_report(t, t)
    assert rep.rmse == 0.0 and rep.pcc == 1.0


def test_length_mismatch_raises():
    with pytest.raises(EvalError):
        confusion_counts([True], [True, False])
    with pytest.raises(EvalError):
        regression_report([1.0], [])


def test_bland_altman_formula():
    p = np.array([5.0, 6.0, 7.5, 9.0])
    t = np.array([5.5, 6.0, 7.0, 8.0])
    ba = bland_altman(p, t)
    d = p - t
    assert ba["bias"] == pytest.approx(d.mean())
    assert ba["sd"] == pytest.approx(math.sqrt(((d - d.mean()) ** 2).mean()))
    assert ba["limits"] == pytest.approx((d.mean() - 1.96 * ba["sd"], d.mean() + 1.96 * ba["sd"]))
    np.testing.assert_allclose(ba["means"], (p + t) / 2)
    with pytest.raises(EvalError):
        bland_altman([1.0], [1.0])


def test_syntha1c_thresholds():
    assert syntha1c_labels([5.69, 5.7, 6.5], "dm_predm").tolist() == [False, True, True]
    assert syntha1c_labels([6.49, 6.5], "dm").tolist() == [False, True]


def test_age_decade_and_groups():
    assert age_decade(59.9) == "50-59"
    s = {"gender": "female", "race": "asian", "age": 44.0, "weight_kg": 100.0, "height_m": 1.5}
    assert group_of(s, "bmi_category") == "extremely_obese"
    assert group_of(s, "age_decade") == "40-49"
    with pytest.raises(EvalError):
        group_of(s, "zip")


def test_stratified_counts_sum_to_total(small_cohort):
    samples, _ = small_cohort
    y = np.array([s.target_hba1c for s in samples])
    out = stratified_report(samples, y + 0.1, "race")
    assert sum(v["count"] for v in out.values()) == len(samples)
    for v in out.values():
        assert v["report"].rmse == pytest.approx(0.1)
    labels = y >= 6.5
    cls = stratified_report(samples, labels, "gender", task="dm")
    assert all(v["report"].accuracy == 1.0 for v in cls.values())


def test_bland_altman_csv(tmp_path, small_cohort):
    samples, _ = small_cohort
    pred = [s.target_hba1c + 0.2 for s in samples]
    write_bland_altman_csv(tmp_path / "ba.csv", samples, pred)
    rows = list(csv.DictReader(open(tmp_path / "ba.csv")))
    assert len(rows) == len(samples)
