"""Classification and regression metrics with per-group breakdowns."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .baselines import bmi_category
from .cohort import from_days
from .features import FeatureError, LabelTask, custom_schema, derive_label, project_schema


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class ClassificationReport:
    """Fractions in [0, 1]; a metric whose denominator is zero is ``None``."""

    counts: ConfusionCounts
    recall: float | None
    precision: float | None
    specificity: float | None
    accuracy: float | None

    def as_percent(self) -> dict[str, float | None]:
        return {
            k: None if v is None else round(100.0 * v, 1)
            for k, v in (("recall", self.recall), ("precision", self.precision),
                         ("specificity", self.specificity), ("accuracy", self.accuracy))
        }

    def to_dict(self) -> dict:
        return {"counts": asdict(self.counts), **{k: getattr(self, k) for k in
                ("recall", "precision", "specificity", "accuracy")}, "percent": self.as_percent()}


def confusion_counts(predicted, truth) -> ConfusionCounts:
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise EvalError(f"length mismatch: {p.size} predictions vs {t.size} labels")
    return ConfusionCounts(int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & ~t)), int(np.sum(~p & t)))


def classification_report(predicted, truth) -> ClassificationReport:
    c = confusion_counts(predicted, truth)
    return ClassificationReport(
        c,
        _ratio(c.tp, c.tp + c.fn),
        _ratio(c.tp, c.tp + c.fp),
        _ratio(c.tn, c.tn + c.fp),
        _ratio(c.tp + c.tn, c.n),
    )


@dataclass(frozen=True)
class RegressionReport:
    rmse: float
    pcc: float | None
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def regression_report(predictions, targets) -> RegressionReport:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise EvalError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise EvalError("regression report needs at least one pair")
    rmse = float(np.sqrt(np.mean((p - t) ** 2)))
    pcc = None
    if p.size >= 2:
        dp, dt_ = p - p.mean(), t - t.mean()
        den = math.sqrt(float(dp @ dp) * float(dt_ @ dt_))
        if den > 0:
            pcc = float(np.clip((dp @ dt_) / den, -1.0, 1.0))
    return RegressionReport(rmse, pcc, int(p.size))


def syntha1c_classify(prediction: float, task: LabelTask | str) -> bool:
    """Threshold a predicted HbA1c with the same cutoffs as the lab value."""
    return derive_label(prediction, task)


def syntha1c_labels(predictions, task: LabelTask | str) -> np.ndarray:
    cutoff = LabelTask(task).cutoff
    p = np.asarray(predictions, dtype=float)
    if not np.all(np.isfinite(p)):
        raise EvalError("predictions must be finite")
    return p >= cutoff


def bland_altman(predictions, targets) -> dict:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise EvalError("length mismatch")
    if p.size < 2:
        raise EvalError("Bland-Altman needs at least 2 pairs")
    mean = (p + t) / 2.0
    diff = p - t
    bias = float(diff.mean())
    sd = float(diff.std())
    return {
        "means": mean,
        "diffs": diff,
        "bias": bias,
        "sd": sd,
        "limits": (bias - 1.96 * sd, bias + 1.96 * sd),
    }


GROUP_KEYS = ("gender", "race", "bmi_category", "age_decade")
_GROUP_SOURCES = {
    "gender": custom_schema("g", ("gender",)),
    "race": custom_schema("r", ("race",)),
    "bmi_category": custom_schema("b", ("bmi",)),
    "age_decade": custom_schema("a", ("age",)),
}


def age_decade(age: float) -> str:
    lo = int(age // 10) * 10
    return f"{lo}-{lo + 9}"


def group_of(sample, group_by: str) -> str:
    if group_by not in _GROUP_SOURCES:
        raise EvalError(f"unknown group key {group_by!r}; expected one of {GROUP_KEYS}")
    (v,) = project_schema(sample, _GROUP_SOURCES[group_by])
    if group_by == "bmi_category":
        return bmi_category(float(v))
    if group_by == "age_decade":
        return age_decade(float(v))
    return str(v)


def stratified_report(samples: Sequence, predictions, group_by: str,
                      task: LabelTask | str | None = None) -> dict[str, dict]:
    """Per-group reports keyed by group label.

    Without ``task`` the predictions are HbA1c values and each group gets a
    regression report. With ``task`` the predictions are labels and each group
    gets a classification report against the task's derived ground truth.
    """
    preds = np.asarray(predictions)
    if len(samples) != preds.shape[0]:
        raise EvalError("samples and predictions differ in length")
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(group_of(s, group_by), []).append(i)
    out = {}
    for g in sorted(groups):
        idx = groups[g]
        targets = np.array([samples[i].target_hba1c for i in idx])
        if task is None:
            rep = regression_report(preds[idx].astype(float), targets) if idx else None
            out[g] = {"count": len(idx), "report": rep}
        else:
            truth = np.array([derive_label(y, task) for y in targets])
            out[g] = {"count": len(idx), "report": classification_report(preds[idx].astype(bool), truth)}
    return out


def write_bland_altman_csv(path, samples: Sequence, predictions) -> dict:
    targets = [s.target_hba1c for s in samples]
    ba = bland_altman(predictions, targets)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("patient_id", "target_date", "mean", "diff"))
        for s, m, d in zip(samples, ba["means"], ba["diffs"]):
            w.writerow((s.patient_id, from_days(s.target_date), repr(float(m)), repr(float(d))))
    return ba


def write_scatter_csv(path, samples: Sequence, predictions) -> None:
    """Prediction/target pairs with every stratification key, for external plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("patient_id", "target_date", "prediction", "target") + GROUP_KEYS)
        for s, p in zip(samples, predictions):
            keys = []
            for g in GROUP_KEYS:
                try:
                    keys.append(group_of(s, g))
                except FeatureError:  # e.g. an IDP-only sample has no age or BMI
                    keys.append("")
            w.writerow((s.patient_id, from_days(s.target_date), repr(float(p)), repr(s.target_hba1c), *keys))


def write_report_csv(path, rows: Sequence[dict]) -> None:
    if not rows:
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)
