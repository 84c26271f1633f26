"""Uniform fit/predict wrapper over every model kind.

All fitted models accept raw encoded vectors (continuous values in their
natural units, one-hot categoricals); models that need standardized inputs
apply the stored reference statistics themselves.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import (
    OlsModel,
    multi_rule_classify,
    multi_rule_from_sample,
    multi_rule_score,
    ols_fit,
    weighted_random_predict,
    zero_rule_predict,
)
from .features import (
    FeatureSchema,
    LabelTask,
    StandardizationStats,
    derive_labels,
    encode_matrix,
    fit_standardization,
    get_schema,
    standardize_encoded,
)
from .net import MlpModel, TrainConfig, train_mlp
from .trees import GbdtConfig, GbdtModel, fit_gbdt

MODEL_KINDS = ("gbdt", "mlp", "ols", "zero_rule", "weighted_random", "multi_rule")
TASKS = ("dm", "dm_predm", "syntha1c")
CLASSIFIER_ONLY = ("zero_rule", "weighted_random", "multi_rule")
ENCODER_ONLY = ("ols",)
DECISION_THRESHOLD = 0.5


class ModelError(ValueError):
    pass


def check_combination(kind: str, task: str) -> None:
    if kind not in MODEL_KINDS:
        raise ModelError(f"unknown model {kind!r}; expected one of {MODEL_KINDS}")
    if task not in TASKS:
        raise ModelError(f"unknown task {task!r}; expected one of {TASKS}")
    if kind in CLASSIFIER_ONLY and task == "syntha1c":
        raise ModelError(f"{kind} is a classifier and cannot serve as a SynthA1c encoder")
    if kind in ENCODER_ONLY and task != "syntha1c":
        raise ModelError(f"{kind} is an encoder; use task 'syntha1c'")


@dataclass
class FittedModel:
    kind: str
    task: str
    schema: FeatureSchema
    stats: StandardizationStats
    estimator: GbdtModel | MlpModel | OlsModel | None = None
    extras: dict = field(default_factory=dict)

    @property
    def is_encoder(self) -> bool:
        return self.task == "syntha1c"

    def predict_encoded(self, X) -> np.ndarray:
        """Probability (classifiers) or HbA1c estimate (encoders) for raw encoded rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "gbdt":
            return self.estimator.predict(X)
        if self.kind in ("mlp", "ols"):
            return self.estimator.predict(standardize_encoded(X, self.schema, self.stats))
        if self.kind == "zero_rule":
            return np.ones(X.shape[0])
        if self.kind == "weighted_random":
            return np.full(X.shape[0], self.extras["positive_rate"])
        raise ModelError(f"{self.kind} does not operate on encoded vectors")

    def __call__(self, X) -> np.ndarray:
        return self.predict_encoded(X)

    def predict(self, samples: Sequence) -> np.ndarray:
        if self.kind == "multi_rule":
            return np.array([multi_rule_score(multi_rule_from_sample(s)) for s in samples], dtype=float)
        if self.kind == "weighted_random":
            return np.full(len(samples), self.extras["positive_rate"])
        return self.predict_encoded(encode_matrix(samples, self.schema))

    def predict_labels(self, samples: Sequence, task: str | None = None) -> np.ndarray:
        """Binary decisions; encoders are thresholded at the HbA1c cutoffs of ``task``."""
        task = task or self.task
        if task == "syntha1c":
            raise ModelError("labels need a classification task")
        if self.is_encoder:
            return self.predict(samples) >= LabelTask(task).cutoff
        if task != self.task:
            raise ModelError(f"model was trained for {self.task!r}, not {task!r}")
        if self.kind == "zero_rule":
            return zero_rule_predict(len(samples))
        if self.kind == "weighted_random":
            return weighted_random_predict(self.extras["positive_rate"], len(samples), self.extras["seed"])
        if self.kind == "multi_rule":
            return np.array([multi_rule_classify(int(p), task) for p in self.predict(samples)], dtype=bool)
        return self.predict(samples) >= DECISION_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "task": self.task,
            "schema": self.schema.variant,
            "stats": self.stats.to_dict(),
            "estimator": None if self.estimator is None else json.loads(self.estimator.to_json()),
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        kind = d["kind"]
        est = d.get("estimator")
        if est is not None:
            text = json.dumps(est)
            est = {"gbdt": GbdtModel, "mlp": MlpModel, "ols": OlsModel}[kind].from_json(text)
        return cls(kind, d["task"], get_schema(d["schema"]), StandardizationStats.from_dict(d["stats"]),
                   est, dict(d.get("extras", {})))


def targets_for(samples: Sequence, task: str) -> np.ndarray:
    y = np.array([s.target_hba1c for s in samples], dtype=float)
    if task == "syntha1c":
        return y
    return derive_labels(y, task).astype(float)


def fit_model(kind: str, task: str, samples: Sequence, schema: FeatureSchema,
              gbdt: GbdtConfig | None = None, mlp: TrainConfig | None = None,
              seed: int = 0, log: list | None = None) -> FittedModel:
    check_combination(kind, task)
    if not samples:
        raise ModelError("no training samples")
    stats = fit_standardization(samples, schema)
    y = targets_for(samples, task)
    objective = "squared" if task == "syntha1c" else "logistic"
    if kind == "gbdt":
        cfg = gbdt or GbdtConfig()
        if cfg.objective != objective:
            cfg = GbdtConfig(**{**cfg.__dict__, "objective": objective})
        est = fit_gbdt(encode_matrix(samples, schema), y, cfg, history=log)
        return FittedModel(kind, task, schema, stats, est)
    if kind == "mlp":
        X = encode_matrix(samples, schema, stats)
        est = train_mlp(X, y, mlp or TrainConfig(seed=seed), objective, log=log)
        return FittedModel(kind, task, schema, stats, est)
    if kind == "ols":
        est = ols_fit(encode_matrix(samples, schema, stats), y)
        return FittedModel(kind, task, schema, stats, est)
    extras = {}
    if kind == "weighted_random":
        extras = {"positive_rate": float(y.mean()), "seed": int(seed)}
    return FittedModel(kind, task, schema, stats, None, extras)
