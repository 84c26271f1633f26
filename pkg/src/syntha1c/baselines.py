"""Reference models that need no gradient training, plus ordinary least squares."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .features import LabelTask, custom_schema, project_schema

MULTI_RULE_DM_THRESHOLD = 5
MULTI_RULE_PREDM_THRESHOLD = 3

# Lower edges of the overweight, obese and extremely obese BMI bands.
BMI_BANDS = (25.0, 30.0, 40.0)
BMI_CATEGORIES = ("not_overweight", "overweight", "obese", "extremely_obese")


def zero_rule_predict(n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    return np.ones(n, dtype=bool)


def weighted_random_predict(p: float, n: int, seed: int) -> np.ndarray:
    """Independent Bernoulli(p) labels, p being the training positive rate."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return np.random.default_rng(seed).random(n) < p


def bmi_category(bmi: float) -> str:
    return BMI_CATEGORIES[sum(bmi >= edge for edge in BMI_BANDS)]


@dataclass(frozen=True)
class MultiRuleAnswer:
    age: float
    gender: str  # "male" | "female"
    sbp: float
    dbp: float
    bmi: float

    def __post_init__(self):
        if self.age < 0:
            raise ValueError("age must be non-negative")
        if not (self.sbp > 0 and self.dbp > 0):
            raise ValueError("blood pressures must be positive")
        if self.gender not in ("male", "female"):
            raise ValueError(f"gender must be 'male' or 'female', got {self.gender!r}")


def age_points(age: float) -> int:
    if age < 40:
        return 0
    if age < 50:
        return 1
    if age < 60:
        return 2
    return 3


def multi_rule_breakdown(answer: MultiRuleAnswer) -> dict[str, int]:
    return {
        "age": age_points(answer.age),
        "gender": int(answer.gender == "male"),
        "blood_pressure": int(answer.sbp > 130 or answer.dbp > 80),
        "weight": BMI_CATEGORIES.index(bmi_category(answer.bmi)),
    }


def multi_rule_score(answer: MultiRuleAnswer) -> int:
    return sum(multi_rule_breakdown(answer).values())


def multi_rule_classify(points: int, task: LabelTask | str) -> bool:
    task = LabelTask(task)
    threshold = MULTI_RULE_DM_THRESHOLD if task is LabelTask.DM else MULTI_RULE_PREDM_THRESHOLD
    return points >= threshold


_MULTI_RULE_FIELDS = custom_schema("multi_rule", ("gender", "age", "sbp", "dbp", "bmi"))


def multi_rule_from_sample(sample) -> MultiRuleAnswer:
    gender, age, sbp, dbp, b = project_schema(sample, _MULTI_RULE_FIELDS)
    return MultiRuleAnswer(float(age), gender, float(sbp), float(dbp), float(b))


@dataclass
class OlsModel:
    coef: np.ndarray
    intercept: float
    rank: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.coef.size:
            raise ValueError(f"expected {self.coef.size} features, got {X.shape[1]}")
        return X @ self.coef + self.intercept

    def to_json(self) -> str:
        return json.dumps({"coef": self.coef.tolist(), "intercept": self.intercept, "rank": self.rank})

    @classmethod
    def from_json(cls, text: str) -> "OlsModel":
        d = json.loads(text)
        return cls(np.array(d["coef"], dtype=float), float(d["intercept"]), int(d["rank"]))


def ols_fit(X, y) -> OlsModel:
    """Least squares with intercept; minimum-norm slopes when the design is rank deficient.

    Columns are centred first so the intercept is never traded off against
    collinear one-hot blocks.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size or y.size == 0:
        raise ValueError("X and y must be non-empty with matching rows")
    xm = X.mean(axis=0)
    ym = float(y.mean())
    coef, _, rank, _ = np.linalg.lstsq(X - xm, y - ym, rcond=None)
    return OlsModel(coef, ym - float(xm @ coef), int(rank))


def ols_predict(model: OlsModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return model.predict(X[None, :])[0]
    return model.predict(X)
