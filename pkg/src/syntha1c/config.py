"""Run configuration with hyperparameter defaults per (model, task, schema).

GBDT defaults depend on the task and on the input schema. The FCNN has a
single tuned setting, used for classifiers and encoders alike.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cohort import SplitSpec
from .features import SCHEMA_VARIANTS
from .models import check_combination
from .net import TrainConfig, config_dict
from .trees import GbdtConfig

GBDT_CLASSIFY = {"n_trees": 32, "learning_rate": 0.1, "max_depth": 16, "reg_alpha": 1.0, "reg_lambda": 2.0}
GBDT_ENCODER = {
    "r": {"n_trees": 32, "learning_rate": 0.25, "max_depth": 6, "reg_alpha": 0.0, "reg_lambda": 1.0},
    "p": {"n_trees": 32, "learning_rate": 0.1, "max_depth": 8, "reg_alpha": 1.0, "reg_lambda": 4.0},
}
GBDT_ABLATION = {
    "cdp_only": {"n_trees": 32, "learning_rate": 0.1, "max_depth": 16, "reg_alpha": 2.0, "reg_lambda": 4.0},
    "idp_only": {"n_trees": 32, "learning_rate": 0.3, "max_depth": 16, "reg_alpha": 2.0, "reg_lambda": 4.0},
}
FCNN = {"epochs": 150, "learning_rate": 0.01, "lr_step": 25, "lr_gamma": 0.5, "batch_size": 128, "dropout": 0.0}


def default_gbdt(task: str, schema: str) -> GbdtConfig:
    if task == "syntha1c":
        base = GBDT_ENCODER["r" if schema in ("r", "union", "cdp_only", "idp_only") else "p"]
        return GbdtConfig(objective="squared", **base)
    return GbdtConfig(objective="logistic", **GBDT_ABLATION.get(schema, GBDT_CLASSIFY))


def default_mlp(seed: int) -> TrainConfig:
    return TrainConfig(seed=seed, **FCNN)


@dataclass
class SmoothnessSettings:
    q: int = 128
    radius: float = 0.1
    eval_cap: int | None = None


@dataclass
class RunConfig:
    schema: str = "r"
    task: str = "dm"
    model: str = "gbdt"
    seed: int = 0
    gbdt: dict = field(default_factory=dict)  # overrides on top of the defaults
    mlp: dict = field(default_factory=dict)
    split: dict = field(default_factory=lambda: {"holdout_count": 208})
    smoothness: SmoothnessSettings = field(default_factory=SmoothnessSettings)
    kl: dict = field(default_factory=lambda: {"bins": 10, "smoothing": 0.5, "joint": False})
    paths: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.schema not in SCHEMA_VARIANTS:
            raise ValueError(f"unknown schema {self.schema!r}; expected one of {SCHEMA_VARIANTS}")
        check_combination(self.model, self.task)
        self.gbdt_config()
        self.mlp_config()
        self.split_spec()
        return self

    def gbdt_config(self) -> GbdtConfig:
        base = asdict(default_gbdt(self.task, self.schema))
        return GbdtConfig(**{**base, **self.gbdt})

    def mlp_config(self) -> TrainConfig:
        base = config_dict(default_mlp(self.seed))
        return TrainConfig(**{**base, **self.mlp})

    def split_spec(self) -> SplitSpec:
        return SplitSpec(**{"seed": self.seed, **self.split})

    def resolved(self) -> dict:
        """Every effective setting, defaults included, for provenance records."""
        d = asdict(self)
        d["gbdt"] = asdict(self.gbdt_config())
        d["mlp"] = config_dict(self.mlp_config())
        d["split"] = asdict(self.split_spec())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("smoothness"), dict):
            d["smoothness"] = SmoothnessSettings(**d["smoothness"])
        return cls(**d).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
