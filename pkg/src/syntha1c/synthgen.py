"""Seeded synthetic cohorts in the measurement/statics CSV layout.

Each patient has a slowly drifting latent state; body composition
follows BMI as it drifts. HbA1c is a fixed link of the state at the
lab date; vitals and CT-derived values are recorded at jittered dates
around the lab visits, so nearest-in-time assembly has real work to do.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .cohort import MEASUREMENT_HEADER, STATICS_HEADER, from_days, to_days
from .features import DIABETES_CUTOFF, GENDERS, PREDIABETES_CUTOFF, RACES

# Race mix and male share of the reference outpatient cohort.
DEFAULT_RACE_WEIGHTS = (720, 40, 1248, 36, 6, 5, 22)
DEFAULT_MALE_FRACTION = 880 / 2077
DEFAULT_DM_PREVALENCE = 1159 / 2077

SHIFTABLE = ("age", "bmi", "height_m", "sbp", "dbp", "visc_fat", "subq_fat", "liver_hu", "spleen_hu")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class LinkParams:
    """HbA1c = intercept + affine terms + hinge * softplus((bmi - hinge_at) / hinge_width)."""

    bmi: float = 0.07
    age: float = 0.025
    visc_fat: float = 0.006
    shad: float = 0.04
    hinge: float = 0.5
    hinge_at: float = 35.0
    hinge_width: float = 2.5
    bmi_ref: float = 30.0
    age_ref: float = 55.0
    visc_ref: float = 150.0
    offset: float = 0.0  # added after intercept calibration; models a population-level shift

    def value(self, intercept: float, bmi, age, visc, shad):
        bmi = np.asarray(bmi, dtype=float)
        return (
            intercept
            + self.offset
            + self.bmi * (bmi - self.bmi_ref)
            + self.age * (np.asarray(age) - self.age_ref)
            + self.visc_fat * (np.asarray(visc) - self.visc_ref)
            + self.shad * np.asarray(shad)
            + self.hinge * np.logaddexp(0.0, (bmi - self.hinge_at) / self.hinge_width)
        )


@dataclass(frozen=True)
class GeneratorSpec:
    n_patients: int = 389
    n_samples: int = 2077
    seed: int = 0
    first_day: str = "2010-01-01"
    last_first_day: str = "2018-01-01"
    mean_gap_days: float = 90.0
    visits_concentration: float = 0.8  # gamma shape of per-patient visit propensity
    race_weights: tuple[float, ...] = DEFAULT_RACE_WEIGHTS
    male_fraction: float = DEFAULT_MALE_FRACTION
    age_mean: float = 57.0
    age_sd: float = 12.0
    bmi_mean: float = 31.0
    bmi_sd: float = 6.5
    bmi_drift_sd: float = 0.6  # BMI units per year
    sbp_mean: float = 130.0
    sbp_sd: float = 14.0
    dbp_mean: float = 79.0
    dbp_sd: float = 9.0
    liver_mean: float = 56.0
    spleen_mean: float = 48.0
    measurement_noise: float = 1.0  # multiplier on all recording noise
    jitter_sd_days: float = 10.0
    outlier_prob: float = 0.08
    outlier_mean_days: float = 400.0
    idp_visit_fraction: float = 0.5
    link: LinkParams = LinkParams()
    noise_sd: float = 0.55
    patient_sd: float = 0.35
    target_dm_prevalence: float = DEFAULT_DM_PREVALENCE
    intercept: float | None = None  # None: calibrate to target_dm_prevalence
    shift: dict = field(default_factory=dict)  # feature -> (mean offset in SDs, scale factor)

    def validate(self) -> None:
        if self.n_patients < 1 or self.n_samples < self.n_patients:
            raise GeneratorError("need n_samples >= n_patients >= 1")
        if len(self.race_weights) != len(RACES) or min(self.race_weights) < 0 or sum(self.race_weights) <= 0:
            raise GeneratorError(f"race_weights must be {len(RACES)} non-negative weights")
        for name in ("male_fraction", "outlier_prob", "idp_visit_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise GeneratorError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.target_dm_prevalence < 1.0:
            raise GeneratorError("target_dm_prevalence must lie in (0, 1)")
        for name in ("age_sd", "bmi_sd", "sbp_sd", "dbp_sd", "mean_gap_days", "visits_concentration"):
            if not getattr(self, name) > 0:
                raise GeneratorError(f"{name} must be positive")
        for name in ("noise_sd", "patient_sd", "jitter_sd_days", "measurement_noise", "bmi_drift_sd"):
            if getattr(self, name) < 0:
                raise GeneratorError(f"{name} must be non-negative")
        for k, v in self.shift.items():
            if k not in SHIFTABLE:
                raise GeneratorError(f"cannot shift {k!r}; shiftable: {SHIFTABLE}")
            off, scale = v
            if not (math.isfinite(off) and math.isfinite(scale) and scale > 0):
                raise GeneratorError(f"shift for {k!r} must be finite with positive scale")
        if to_days(self.last_first_day) < to_days(self.first_day):
            raise GeneratorError("last_first_day precedes first_day")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["race_weights"] = list(self.race_weights)
        d["shift"] = {k: list(v) for k, v in self.shift.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        if "link" in d:
            d["link"] = LinkParams(**d["link"])
        if "race_weights" in d:
            d["race_weights"] = tuple(d["race_weights"])
        if "shift" in d:
            d["shift"] = {k: tuple(v) for k, v in d["shift"].items()}
        return cls(**d)


def _shifted(spec: GeneratorSpec, name: str, draw: np.ndarray, mean: float, sd: float) -> np.ndarray:
    """Apply a (mean offset in SDs, scale) knob to a draw centred on ``mean``."""
    off, scale = spec.shift.get(name, (0.0, 1.0))
    return mean + off * sd + scale * (draw - mean)


@dataclass
class _Patient:
    pid: str
    race: str
    gender: str
    t0: int
    age0: float
    height: float
    bmi0: float
    bmi_slope: float
    sbp0: float
    dbp0: float
    visc0: float
    subq0: float
    liver0: float
    spleen0: float
    effect: float

    def state(self, day):
        years = (np.asarray(day, dtype=float) - self.t0) / 365.25
        b = np.maximum(self.bmi0 + self.bmi_slope * years, 15.0)
        db = b - self.bmi0
        return {
            "age": self.age0 + years,
            "bmi": b,
            "visc_fat": np.maximum(self.visc0 + 9.0 * db, 5.0),
            "subq_fat": np.maximum(self.subq0 + 14.0 * db, 5.0),
            "liver_hu": self.liver0 - 0.5 * db,
            "spleen_hu": self.spleen0 + 0.0 * db,
            "sbp": self.sbp0 + 0.8 * db,
            "dbp": self.dbp0 + 0.5 * db,
        }


def _draw_patients(spec: GeneratorSpec, rng: np.random.Generator) -> list[_Patient]:
    n = spec.n_patients
    rw = np.asarray(spec.race_weights, dtype=float)
    races = rng.choice(len(RACES), size=n, p=rw / rw.sum())
    male = rng.random(n) < spec.male_fraction
    t_lo, t_hi = to_days(spec.first_day), to_days(spec.last_first_day)
    t0 = rng.integers(t_lo, t_hi + 1, size=n)

    age = _shifted(spec, "age", rng.normal(spec.age_mean, spec.age_sd, n), spec.age_mean, spec.age_sd)
    age = np.clip(age, 20.0, 85.0)
    h_mean = np.where(male, 1.76, 1.63)
    height = _shifted(spec, "height_m", rng.normal(h_mean, 0.07), h_mean, 0.07)
    height = np.clip(height, 1.4, 2.1)
    bmi = _shifted(spec, "bmi", spec.bmi_mean * np.exp(rng.normal(0, spec.bmi_sd / spec.bmi_mean, n)),
                   spec.bmi_mean, spec.bmi_sd)
    bmi = np.clip(bmi, 16.0, 65.0)
    slope = rng.normal(0.0, spec.bmi_drift_sd, n)

    visc_mean = 150.0 + 9.0 * (bmi - 30.0) + 35.0 * male + 1.5 * (age - 55.0)
    visc = np.maximum(_shifted(spec, "visc_fat", rng.normal(visc_mean, 45.0), visc_mean, 45.0), 5.0)
    subq_mean = 260.0 + 14.0 * (bmi - 30.0) - 60.0 * male
    subq = np.maximum(_shifted(spec, "subq_fat", rng.normal(subq_mean, 60.0), subq_mean, 60.0), 5.0)
    # fatty liver lowers liver attenuation, tracking visceral fat
    fat_z = 0.6 * (visc - visc_mean) / 45.0 + 0.6 * (bmi - 30.0) / 6.5 + 0.55 * rng.normal(size=n)
    liver_mean = spec.liver_mean - 6.0 * fat_z
    liver = _shifted(spec, "liver_hu", liver_mean + rng.normal(0, 3.0, n), spec.liver_mean, 8.0)
    spleen = _shifted(spec, "spleen_hu", rng.normal(spec.spleen_mean, 4.0, n), spec.spleen_mean, 4.0)
    sbp_mean = spec.sbp_mean + 0.6 * (bmi - 30.0) + 0.3 * (age - 55.0)
    sbp = _shifted(spec, "sbp", rng.normal(sbp_mean, spec.sbp_sd), spec.sbp_mean, spec.sbp_sd)
    dbp_mean = spec.dbp_mean + 0.4 * (bmi - 30.0)
    dbp = _shifted(spec, "dbp", rng.normal(dbp_mean, spec.dbp_sd), spec.dbp_mean, spec.dbp_sd)
    effect = rng.normal(0.0, spec.patient_sd, n) if spec.patient_sd > 0 else np.zeros(n)

    width = max(3, len(str(n)))
    return [
        _Patient(
            f"P{i + 1:0{width}d}", RACES[races[i]], GENDERS[0] if male[i] else GENDERS[1], int(t0[i]),
            float(age[i]), float(height[i]), float(bmi[i]), float(slope[i]), float(sbp[i]), float(dbp[i]),
            float(visc[i]), float(subq[i]), float(liver[i]), float(spleen[i]), float(effect[i]),
        )
        for i in range(n)
    ]


def _visit_counts(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    extra = spec.n_samples - spec.n_patients
    propensity = rng.gamma(spec.visits_concentration, 1.0, spec.n_patients)
    return 1 + rng.multinomial(extra, propensity / propensity.sum())


def _jitter(spec: GeneratorSpec, rng: np.random.Generator) -> int:
    if rng.random() < spec.outlier_prob:
        return int(round(rng.choice((-1, 1)) * rng.exponential(spec.outlier_mean_days)))
    return int(round(rng.normal(0.0, spec.jitter_sd_days))) if spec.jitter_sd_days > 0 else 0


def _free_day(day: int, taken: set[int]) -> int:
    step = 0
    while True:
        for cand in (day + step, day - step):
            if cand not in taken:
                taken.add(cand)
                return cand
        step += 1


def _r(x) -> float:
    return round(float(x), 6)


def generate(spec: GeneratorSpec = GeneratorSpec()):
    """Return (measurement rows, statics rows, ledger) for ``spec``.

    Rows are tuples matching the measurement and statics CSV headers. The
    ledger records the link parameters, the calibrated intercept and the
    per-group sample counts.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    patients = _draw_patients(spec, rng)
    counts = _visit_counts(spec, rng)
    noise = spec.measurement_noise

    visits = []  # (patient index, lab day)
    for i, (p, k) in enumerate(zip(patients, counts)):
        gaps = 1 + np.floor(rng.exponential(spec.mean_gap_days, int(k) - 1)).astype(int)
        days = p.t0 + np.concatenate(([0], np.cumsum(gaps)))
        visits.extend((i, int(d)) for d in days)

    # latent HbA1c before the intercept
    raw = np.empty(len(visits))
    for j, (i, day) in enumerate(visits):
        s = patients[i].state(day)
        st = {k: round(float(v), 6) for k, v in s.items()}
        raw[j] = spec.link.value(0.0, st["bmi"], st["age"], st["visc_fat"], st["spleen_hu"] - st["liver_hu"])
        raw[j] += patients[i].effect
    eps = rng.normal(0.0, spec.noise_sd, len(visits)) if spec.noise_sd > 0 else np.zeros(len(visits))
    if spec.intercept is None:
        # place the diabetes cutoff at the requested quantile of the noisy latent value
        intercept = float(DIABETES_CUTOFF - np.quantile(raw + eps + spec.link.offset, 1.0 - spec.target_dm_prevalence))
    else:
        intercept = float(spec.intercept)
    hba1c = np.clip(raw + eps + intercept + spec.link.offset, 3.5, 19.0)

    meas: list[tuple[str, str, str, str]] = []
    taken: dict[tuple[str, str], set[int]] = {}

    def record(p: _Patient, feature: str, value: float, day: int):
        d = _free_day(day, taken.setdefault((p.pid, feature), set()))
        meas.append((p.pid, feature, repr(_r(value)), from_days(d)))
        return d

    for j, (i, day) in enumerate(visits):
        p = patients[i]
        record(p, "hba1c", hba1c[j], day)
        exam = day + _jitter(spec, rng)
        s = p.state(exam)
        height = p.height + noise * rng.normal(0, 0.01)
        weight = float(s["bmi"]) * p.height ** 2 + noise * rng.normal(0, 0.8)
        for feat, val in (
            ("age", float(s["age"])),
            ("height_m", height),
            ("weight_kg", weight),
            ("sbp", float(s["sbp"]) + noise * rng.normal(0, 6.0)),
            ("dbp", float(s["dbp"]) + noise * rng.normal(0, 4.0)),
        ):
            record(p, feat, val, exam)
        first = j == 0 or visits[j - 1][0] != i
        if first or rng.random() < spec.idp_visit_fraction:
            scan = day + _jitter(spec, rng)
            s = p.state(scan)
            for feat, val, sd in (
                ("liver_hu", float(s["liver_hu"]), 2.0),
                ("spleen_hu", float(s["spleen_hu"]), 1.5),
                ("subq_fat", float(s["subq_fat"]), 8.0),
                ("visc_fat", float(s["visc_fat"]), 6.0),
            ):
                record(p, feat, val + noise * rng.normal(0, sd), scan)

    meas.sort(key=lambda r: (r[0], r[1], r[3]))
    statics = [(p.pid, p.race, p.gender) for p in patients]

    by_gender = {g: 0 for g in GENDERS}
    by_race = {r: 0 for r in RACES}
    for i, _ in visits:
        by_gender[patients[i].gender] += 1
        by_race[patients[i].race] += 1
    hb = np.array([_r(v) for v in hba1c])
    ledger = {
        "spec": spec.to_dict(),
        "intercept": intercept,
        "link": asdict(spec.link),
        "n_patients": spec.n_patients,
        "n_samples": len(visits),
        "dm_prevalence": float(np.mean(hb >= DIABETES_CUTOFF)),
        "dm_or_predm_prevalence": float(np.mean(hb >= PREDIABETES_CUTOFF)),
        "counts": {"gender": by_gender, "race": by_race},
        "samples_per_patient": {"max": int(counts.max()), "mean": float(counts.mean())},
    }
    return meas, statics, ledger


def shifted_spec(base: GeneratorSpec, base_ledger: dict, **changes) -> GeneratorSpec:
    """A spec sharing ``base``'s calibrated link, with population changes applied."""
    return replace(base, intercept=base_ledger["intercept"], **changes)


def inpatient_like(base: GeneratorSpec, base_ledger: dict, seed: int = 1) -> GeneratorSpec:
    """Same population with sicker visits: mild upward shifts of the covariates."""
    return shifted_spec(
        base, base_ledger, seed=seed, n_patients=380, n_samples=2066,
        shift={"age": (0.3, 1.0), "bmi": (0.2, 1.1), "sbp": (0.3, 1.1), "dbp": (0.2, 1.0)},
    )


def foreign_like(base: GeneratorSpec, base_ledger: dict, seed: int = 2) -> GeneratorSpec:
    """A different population: younger, heavier, other race mix, shifted HbA1c baseline."""
    return shifted_spec(
        base, base_ledger, seed=seed, n_patients=1000, n_samples=1000,
        race_weights=(0, 0, 0, 0, 0, 0, 1), male_fraction=0.55,
        shift={"age": (-0.8, 0.9), "bmi": (0.8, 1.2)},
        link=replace(base.link, offset=0.2),
    )


def write_cohort(out_dir, meas, statics, ledger) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"measurements": out / "measurements.csv", "statics": out / "statics.csv", "ledger": out / "ledger.json"}
    with open(paths["measurements"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_HEADER)
        w.writerows(meas)
    with open(paths["statics"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATICS_HEADER)
        w.writerows(statics)
    paths["ledger"].write_text(json.dumps(ledger, indent=2, sort_keys=True) + "\n")
    return paths
