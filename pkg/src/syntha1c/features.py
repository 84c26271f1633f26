"""Feature schemas and the encoding of samples into model inputs.

Feature ids double as the column names of the measurement CSVs, so a
schema can be resolved against an assembled sample without a mapping table.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

RACES = (
    "white",
    "hispanic",
    "black",
    "asian",
    "pacific_islander",
    "native_american",
    "other_unknown",
)
GENDERS = ("male", "female")

STATIC_FEATURES = ("race", "gender")
MEASUREMENT_FEATURES = (
    "hba1c",
    "age",
    "height_m",
    "weight_kg",
    "sbp",
    "dbp",
    "liver_hu",
    "spleen_hu",
    "subq_fat",
    "visc_fat",
)
TARGET_FEATURE = "hba1c"

PREDIABETES_CUTOFF = 5.7
DIABETES_CUTOFF = 6.5


class FeatureError(ValueError):
    pass


class LabelTask(str, enum.Enum):
    DM = "dm"
    DM_PLUS_PREDM = "dm_predm"

    @property
    def cutoff(self) -> float:
        return DIABETES_CUTOFF if self is LabelTask.DM else PREDIABETES_CUTOFF


def bmi(weight: float, height: float) -> float:
    """Body mass index in kg/m^2 from weight in kg and height in m."""
    if not (weight > 0 and height > 0):
        raise FeatureError(f"bmi needs positive weight and height, got {weight!r}, {height!r}")
    return weight / (height * height)


def shad(spleen: float, liver: float) -> float:
    """Spleen-hepatic attenuation difference (HU): spleen minus liver."""
    if not (math.isfinite(spleen) and math.isfinite(liver)):
        raise FeatureError("shad needs finite attenuations")
    return spleen - liver


def derive_label(hba1c: float, task: LabelTask | str) -> bool:
    """True when the HbA1c value is at or above the task's cutoff."""
    task = LabelTask(task)
    if not (math.isfinite(hba1c) and hba1c > 0):
        raise FeatureError(f"hba1c must be finite and positive, got {hba1c!r}")
    return hba1c >= task.cutoff


def derive_labels(hba1c: Iterable[float], task: LabelTask | str) -> np.ndarray:
    return np.array([derive_label(v, task) for v in hba1c], dtype=bool)


@dataclass(frozen=True)
class FeatureDescriptor:
    feature_id: str
    kind: str  # "CDP" | "IDP"
    dtype: str = "continuous"  # "continuous" | "categorical"
    vocabulary: tuple[str, ...] = ()
    sources: tuple[str, ...] = ()  # raw fields a derived feature is computed from

    @property
    def categorical(self) -> bool:
        return self.dtype == "categorical"

    @property
    def width(self) -> int:
        return len(self.vocabulary) if self.categorical else 1


CATALOG: dict[str, FeatureDescriptor] = {
    d.feature_id: d
    for d in (
        FeatureDescriptor("race", "CDP", "categorical", RACES),
        FeatureDescriptor("gender", "CDP", "categorical", GENDERS),
        FeatureDescriptor("age", "CDP"),
        FeatureDescriptor("sbp", "CDP"),
        FeatureDescriptor("dbp", "CDP"),
        FeatureDescriptor("height_m", "CDP"),
        FeatureDescriptor("weight_kg", "CDP"),
        FeatureDescriptor("bmi", "CDP", sources=("weight_kg", "height_m")),
        FeatureDescriptor("subq_fat", "IDP"),
        FeatureDescriptor("visc_fat", "IDP"),
        FeatureDescriptor("liver_hu", "IDP"),
        FeatureDescriptor("spleen_hu", "IDP"),
        FeatureDescriptor("shad", "IDP", sources=("spleen_hu", "liver_hu")),
    )
}

_R_IDS = (
    "race", "gender", "age", "sbp", "dbp", "height_m", "weight_kg",
    "subq_fat", "visc_fat", "liver_hu", "spleen_hu",
)
_P_IDS = ("race", "gender", "age", "sbp", "dbp", "bmi", "subq_fat", "visc_fat", "shad")
_VARIANT_IDS = {
    "r": _R_IDS,
    "p": _P_IDS,
    "p_prime": ("race", "gender", "age", "bmi"),
    "cdp_only": tuple(f for f in _R_IDS if CATALOG[f].kind == "CDP"),
    "idp_only": tuple(f for f in _R_IDS if CATALOG[f].kind == "IDP"),
    "union": (
        "race", "gender", "age", "sbp", "dbp", "height_m", "weight_kg", "bmi",
        "subq_fat", "visc_fat", "liver_hu", "spleen_hu", "shad",
    ),
}
SCHEMA_VARIANTS = tuple(_VARIANT_IDS)


@dataclass(frozen=True)
class FeatureSchema:
    variant: str
    descriptors: tuple[FeatureDescriptor, ...]

    def __post_init__(self):
        ids = self.feature_ids
        if len(set(ids)) != len(ids):
            raise FeatureError(f"duplicate feature ids in schema {self.variant!r}")

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def feature_ids(self) -> tuple[str, ...]:
        return tuple(d.feature_id for d in self.descriptors)

    @property
    def encoded_width(self) -> int:
        return sum(d.width for d in self.descriptors)

    @property
    def continuous_ids(self) -> tuple[str, ...]:
        return tuple(d.feature_id for d in self.descriptors if not d.categorical)

    def raw_fields(self) -> tuple[str, ...]:
        """Fields an assembled sample must carry for this schema to be projected."""
        out: list[str] = []
        for d in self.descriptors:
            for f in d.sources or (d.feature_id,):
                if f not in out:
                    out.append(f)
        return tuple(out)

    def slot_names(self) -> list[str]:
        names = []
        for d in self.descriptors:
            if d.categorical:
                names.extend(f"{d.feature_id}={v}" for v in d.vocabulary)
            else:
                names.append(d.feature_id)
        return names

    def continuous_mask(self) -> np.ndarray:
        return np.array(
            [not d.categorical for d in self.descriptors for _ in range(d.width)], dtype=bool
        )


def get_schema(variant: str) -> FeatureSchema:
    try:
        ids = _VARIANT_IDS[variant]
    except KeyError:
        raise FeatureError(
            f"unknown schema variant {variant!r}; expected one of {SCHEMA_VARIANTS}"
        ) from None
    return FeatureSchema(variant, tuple(CATALOG[f] for f in ids))


def custom_schema(name: str, feature_ids: Sequence[str]) -> FeatureSchema:
    unknown = [f for f in feature_ids if f not in CATALOG]
    if unknown:
        raise FeatureError(f"unknown feature ids {unknown}")
    return FeatureSchema(name, tuple(CATALOG[f] for f in feature_ids))


def _lookup(raw: Mapping[str, object], fid: str):
    if fid in raw:
        return raw[fid]
    desc = CATALOG.get(fid)
    if desc is None or not desc.sources:
        raise FeatureError(f"sample is missing raw field {fid!r}")
    args = [raw.get(s) for s in desc.sources]
    if any(a is None for a in args):
        missing = [s for s, a in zip(desc.sources, args) if a is None]
        raise FeatureError(f"cannot derive {fid!r}: missing {missing}")
    if fid == "bmi":
        return bmi(float(args[0]), float(args[1]))
    return shad(float(args[0]), float(args[1]))


def _as_mapping(sample) -> Mapping[str, object]:
    if isinstance(sample, Mapping):
        return sample
    return sample.as_dict()


def project_schema(sample, schema: FeatureSchema) -> tuple:
    """Values of ``schema``'s features, in schema order, derived where needed.

    ``sample`` is an assembled sample or any mapping of raw field -> value.
    Values already present under a derived id (e.g. a dataset that reports
    ``bmi`` directly) are used as-is.
    """
    raw = _as_mapping(sample)
    return tuple(_lookup(raw, fid) for fid in schema.feature_ids)


@dataclass(frozen=True)
class StandardizationStats:
    """Per-feature location/scale of a reference set, plus target scale."""

    variant: str
    feature_ids: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    target_mean: float
    target_std: float
    slot_scale: tuple[float, ...] = field(default=())  # sigma per encoded slot, 0 for one-hot

    def mean_of(self, fid: str) -> float:
        return self.means[self.feature_ids.index(fid)]

    def std_of(self, fid: str) -> float:
        return self.stds[self.feature_ids.index(fid)]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "feature_ids": list(self.feature_ids),
            "means": list(self.means),
            "stds": list(self.stds),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "slot_scale": list(self.slot_scale),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StandardizationStats":
        return cls(
            d["variant"],
            tuple(d["feature_ids"]),
            tuple(float(v) for v in d["means"]),
            tuple(float(v) for v in d["stds"]),
            float(d["target_mean"]),
            float(d["target_std"]),
            tuple(float(v) for v in d.get("slot_scale", ())),
        )


def fit_standardization(samples: Sequence, schema: FeatureSchema) -> StandardizationStats:
    """Population mean/SD of every continuous feature and of the HbA1c target."""
    if len(samples) < 2:
        raise FeatureError("standardization needs at least 2 samples")
    cont = schema.continuous_ids
    rows = [project_schema(s, schema) for s in samples]
    idx = [schema.feature_ids.index(f) for f in cont]
    cols = np.array([[float(r[i]) for i in idx] for r in rows], dtype=float).reshape(len(rows), len(idx))
    means = cols.mean(axis=0)
    stds = cols.std(axis=0)
    for f, s in zip(cont, stds):
        if not s > 0:
            raise FeatureError(f"feature {f!r} is constant in the reference set")
    y = np.array([float(s.target_hba1c) for s in samples])
    ystd = float(y.std())
    if not ystd > 0:
        raise FeatureError("target hba1c is constant in the reference set")
    scale_of = dict(zip(cont, stds))
    slot_scale = []
    for d in schema.descriptors:
        slot_scale.extend([0.0] * d.width if d.categorical else [float(scale_of[d.feature_id])])
    return StandardizationStats(
        schema.variant,
        cont,
        tuple(float(m) for m in means),
        tuple(float(s) for s in stds),
        float(y.mean()),
        ystd,
        tuple(slot_scale),
    )


def encode(sample, schema: FeatureSchema, stats: StandardizationStats | None = None) -> np.ndarray:
    """Dense vector: continuous slots (standardized when ``stats`` is given), one-hot categoricals."""
    values = project_schema(sample, schema)
    out = np.empty(schema.encoded_width)
    pos = 0
    for d, v in zip(schema.descriptors, values):
        if d.categorical:
            if v not in d.vocabulary:
                raise FeatureError(f"{d.feature_id}: category {v!r} not in vocabulary {d.vocabulary}")
            out[pos : pos + d.width] = 0.0
            out[pos + d.vocabulary.index(v)] = 1.0
        else:
            x = float(v)
            if stats is not None:
                x = (x - stats.mean_of(d.feature_id)) / stats.std_of(d.feature_id)
            out[pos] = x
        pos += d.width
    return out


def encode_matrix(samples: Sequence, schema: FeatureSchema, stats: StandardizationStats | None = None) -> np.ndarray:
    if not samples:
        return np.empty((0, schema.encoded_width))
    return np.vstack([encode(s, schema, stats) for s in samples])


def slot_affine(schema: FeatureSchema, stats: StandardizationStats) -> tuple[np.ndarray, np.ndarray]:
    """(offset, scale) per encoded slot so that standardized = (raw - offset) / scale.

    One-hot slots get offset 0 and scale 1, i.e. they pass through.
    """
    offset, scale = [], []
    for d in schema.descriptors:
        if d.categorical:
            offset.extend([0.0] * d.width)
            scale.extend([1.0] * d.width)
        else:
            offset.append(stats.mean_of(d.feature_id))
            scale.append(stats.std_of(d.feature_id))
    return np.array(offset), np.array(scale)


def standardize_encoded(X: np.ndarray, schema: FeatureSchema, stats: StandardizationStats) -> np.ndarray:
    offset, scale = slot_affine(schema, stats)
    return (np.asarray(X, dtype=float) - offset) / scale


def decode_continuous(vec: np.ndarray, schema: FeatureSchema, stats: StandardizationStats) -> dict[str, float]:
    """Invert the standardization of the continuous block of an encoded vector."""
    out = {}
    pos = 0
    for d in schema.descriptors:
        if not d.categorical:
            out[d.feature_id] = float(vec[pos]) * stats.std_of(d.feature_id) + stats.mean_of(d.feature_id)
        pos += d.width
    return out
