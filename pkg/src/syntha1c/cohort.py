"""Measurement ingestion and nearest-in-time sample assembly.

Seeded train/holdout splitting lives here too."""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import (
    CATALOG,
    GENDERS,
    MEASUREMENT_FEATURES,
    RACES,
    STATIC_FEATURES,
    TARGET_FEATURE,
    FeatureSchema,
)

EPOCH = dt.date(1970, 1, 1)
MEASUREMENT_HEADER = ("patient_id", "feature", "value", "date")
STATICS_HEADER = ("patient_id", "race", "gender")


class CohortError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def to_days(iso: str) -> int:
    return (dt.date.fromisoformat(iso) - EPOCH).days


def from_days(days: int) -> str:
    return (EPOCH + dt.timedelta(days=int(days))).isoformat()


@dataclass(frozen=True)
class MeasurementTimeline:
    patient_id: str
    feature_id: str
    dates: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise CohortError("dates and values differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise CohortError(
                f"timeline {self.patient_id}/{self.feature_id} must have strictly increasing dates"
            )

    def __len__(self) -> int:
        return len(self.dates)

    def nearest(self, day: int) -> int:
        """Index of the entry closest in time to ``day``; ties go to the earlier date."""
        if not self.dates:
            raise CohortError(f"empty timeline {self.patient_id}/{self.feature_id}")
        i = bisect.bisect_left(self.dates, day)
        if i == 0:
            return 0
        if i == len(self.dates):
            return i - 1
        before, after = day - self.dates[i - 1], self.dates[i] - day
        return i - 1 if before <= after else i


@dataclass(frozen=True)
class StaticAttributes:
    patient_id: str
    race: str
    gender: str


@dataclass(frozen=True)
class Sample:
    patient_id: str
    target_hba1c: float
    target_date: int
    feature_ids: tuple[str, ...]
    features: tuple
    daterange: int

    def as_dict(self) -> dict:
        return dict(zip(self.feature_ids, self.features))

    def get(self, fid: str):
        return self.features[self.feature_ids.index(fid)]


Timelines = Mapping[tuple[str, str], MeasurementTimeline]


def build_timelines(rows: Iterable[tuple[str, str, float, int]]) -> dict[tuple[str, str], MeasurementTimeline]:
    """Group (patient, feature, value, day) rows; duplicate dates are an error."""
    grouped: dict[tuple[str, str], dict[int, float]] = defaultdict(dict)
    for pid, fid, value, day in rows:
        entries = grouped[(pid, fid)]
        if day in entries:
            raise CohortError(f"duplicate measurement for patient {pid!r}, feature {fid!r}, day {day}")
        entries[day] = value
    out = {}
    for key in sorted(grouped):
        days = sorted(grouped[key])
        out[key] = MeasurementTimeline(key[0], key[1], tuple(days), tuple(grouped[key][d] for d in days))
    return out


def _read_rows(path: Path, header: tuple[str, ...]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if tuple(h.strip() for h in first) != header:
            raise CohortError(f"expected header {','.join(header)}, got {','.join(first)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortError(f"expected {len(header)} fields, got {len(row)}", lineno)
            yield lineno, [c.strip() for c in row]


def measurements_from_rows(rows: Iterable[tuple[int, Sequence[str]]]) -> dict[tuple[str, str], MeasurementTimeline]:
    """Parse (line number, [patient_id, feature, value, date]) string rows."""
    parsed = []
    seen: dict[tuple[str, str, int], int] = {}
    for lineno, (pid, fid, value, date) in rows:
        if fid not in MEASUREMENT_FEATURES:
            raise CohortError(f"unknown feature {fid!r}", lineno)
        try:
            x = float(value)
        except ValueError:
            raise CohortError(f"non-numeric value {value!r} for feature {fid!r}", lineno) from None
        if not math.isfinite(x):
            raise CohortError(f"non-finite value for feature {fid!r}", lineno)
        try:
            day = to_days(date)
        except ValueError:
            raise CohortError(f"bad ISO date {date!r}", lineno) from None
        key = (pid, fid, day)
        if key in seen:
            raise CohortError(
                f"duplicate measurement for patient {pid!r}, feature {fid!r}, date {date} "
                f"(first seen on line {seen[key]})",
                lineno,
            )
        seen[key] = lineno
        parsed.append((pid, fid, x, day))
    return build_timelines(parsed)


def load_measurements(path) -> dict[tuple[str, str], MeasurementTimeline]:
    return measurements_from_rows(_read_rows(Path(path), MEASUREMENT_HEADER))


def statics_from_rows(rows: Iterable[tuple[int, Sequence[str]]]) -> dict[str, StaticAttributes]:
    out: dict[str, StaticAttributes] = {}
    for lineno, (pid, race, gender) in rows:
        if race not in RACES:
            raise CohortError(f"unknown race label {race!r}", lineno)
        if gender not in GENDERS:
            raise CohortError(f"unknown gender label {gender!r}", lineno)
        if pid in out:
            raise CohortError(f"duplicate statics record for patient {pid!r}", lineno)
        out[pid] = StaticAttributes(pid, race, gender)
    return out


def load_statics(path) -> dict[str, StaticAttributes]:
    return statics_from_rows(_read_rows(Path(path), STATICS_HEADER))


def load_cohort(measurements_file, statics_file):
    return load_measurements(measurements_file), load_statics(statics_file)


def cohort_from_rows(measurement_rows: Sequence[Sequence[str]], statics_rows: Sequence[Sequence[str]]):
    """In-memory counterpart of :func:`load_cohort`; row numbering matches the CSV files."""
    return (
        measurements_from_rows(enumerate(measurement_rows, start=2)),
        statics_from_rows(enumerate(statics_rows, start=2)),
    )


def assemble_samples(timelines: Timelines, statics: Mapping[str, StaticAttributes], schema: FeatureSchema) -> list[Sample]:
    """One sample per HbA1c measurement, each feature taken from its nearest-in-time entry.

    Patients lacking any field the schema needs are dropped entirely. Output is
    ordered by (patient_id, target_date).
    """
    for fid in schema.feature_ids:
        if fid not in CATALOG:
            raise CohortError(f"schema references unknown feature {fid!r}")
    fields = schema.raw_fields()
    dated = [f for f in fields if f not in STATIC_FEATURES]
    for f in dated:
        if f not in MEASUREMENT_FEATURES or f == TARGET_FEATURE:
            raise CohortError(f"schema field {f!r} is not a measured feature")

    patients = sorted({pid for pid, _ in timelines})
    samples: list[Sample] = []
    for pid in patients:
        target = timelines.get((pid, TARGET_FEATURE))
        if target is None or not len(target):
            continue
        lines = [timelines.get((pid, f)) for f in dated]
        if any(t is None or not len(t) for t in lines):
            continue
        static = statics.get(pid)
        if any(f in STATIC_FEATURES for f in fields) and static is None:
            continue
        for day, y in zip(target.dates, target.values):
            picked = {}
            chosen_days = []
            for f, tl in zip(dated, lines):
                k = tl.nearest(day)
                picked[f] = tl.values[k]
                chosen_days.append(tl.dates[k])
            values = tuple(
                getattr(static, f) if f in STATIC_FEATURES else picked[f] for f in fields
            )
            drange = max(chosen_days) - min(chosen_days) if chosen_days else 0
            samples.append(Sample(pid, float(y), int(day), fields, values, int(drange)))
    return samples


def daterange_stats(samples: Sequence[Sample], bins: int = 20) -> dict:
    if not samples:
        raise CohortError("daterange statistics need at least one sample")
    d = sorted(s.daterange for s in samples)
    median = d[(len(d) - 1) // 2]
    counts, edges = np.histogram(d, bins=bins)
    return {
        "n": len(d),
        "median_days": median,
        "fraction_within_365": sum(x <= 365 for x in d) / len(d),
        "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
    }


@dataclass(frozen=True)
class SplitSpec:
    holdout_count: int | None = None
    holdout_fraction: float = 0.0
    validation_fraction: float = 0.0
    k_folds: int | None = None
    seed: int = 0
    patient_level: bool = False

    def __post_init__(self):
        for name in ("holdout_fraction", "validation_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise CohortError(f"{name} must lie in [0, 1), got {v}")
        if self.k_folds is not None and self.k_folds < 2:
            raise CohortError("k_folds must be at least 2")


@dataclass
class Split:
    train: list
    validation: list
    holdout: list
    folds: list[list] | None = None


def _partition_units(samples: Sequence, patient_level: bool) -> list[list[int]]:
    if not patient_level:
        return [[i] for i in range(len(samples))]
    groups: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        groups[s.patient_id].append(i)
    return [groups[k] for k in sorted(groups)]


def split_samples(samples: Sequence, spec: SplitSpec) -> Split:
    """Seeded holdout / validation / train partition, optionally with k folds over train."""
    n = len(samples)
    n_hold = spec.holdout_count if spec.holdout_count is not None else int(round(spec.holdout_fraction * n))
    n_val = int(round(spec.validation_fraction * n))
    if n_hold < 0 or n_hold > n:
        raise CohortError(f"holdout of {n_hold} exceeds dataset of {n}")
    if n_hold + n_val > n:
        raise CohortError(f"holdout {n_hold} + validation {n_val} exceeds dataset of {n}")

    rng = np.random.default_rng(spec.seed)
    units = _partition_units(samples, spec.patient_level)
    order = rng.permutation(len(units))

    def take(quota: int, start: int) -> tuple[list[int], int]:
        picked: list[int] = []
        pos = start
        while pos < len(order) and len(picked) < quota:
            picked.extend(units[order[pos]])
            pos += 1
        return picked, pos

    hold_idx, pos = take(n_hold, 0)
    val_idx, pos = take(n_val, pos)
    train_idx = [i for u in order[pos:] for i in units[u]]

    split = Split(
        train=[samples[i] for i in sorted(train_idx)],
        validation=[samples[i] for i in sorted(val_idx)],
        holdout=[samples[i] for i in sorted(hold_idx)],
    )
    if spec.k_folds:
        split.folds = kfold(split.train, spec.k_folds, spec.seed)
    return split


def kfold(samples: Sequence, k: int, seed: int = 0) -> list[list]:
    """k disjoint folds of near-equal size covering ``samples``."""
    if k < 2 or k > len(samples):
        raise CohortError(f"cannot form {k} folds from {len(samples)} samples")
    perm = np.random.default_rng(seed).permutation(len(samples))
    return [[samples[i] for i in sorted(chunk)] for chunk in np.array_split(perm, k)]


SAMPLE_META = ("patient_id", "target_date", "target_hba1c", "daterange")


def write_samples(path, samples: Sequence[Sample]) -> None:
    fields = samples[0].feature_ids if samples else ()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_META + tuple(fields))
        for s in samples:
            w.writerow([s.patient_id, from_days(s.target_date), repr(s.target_hba1c), s.daterange]
                       + [v if isinstance(v, str) else repr(float(v)) for v in s.features])


def read_samples(path) -> list[Sample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header[:4]) != SAMPLE_META:
            raise CohortError(f"samples file must start with {','.join(SAMPLE_META)}", 1)
        fields = tuple(header[4:])
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                values = tuple(v if f in STATIC_FEATURES else float(v) for f, v in zip(fields, row[4:]))
                out.append(Sample(row[0], float(row[2]), to_days(row[1]), fields, values, int(row[3])))
            except ValueError as exc:
                raise CohortError(str(exc), lineno) from None
        return out
