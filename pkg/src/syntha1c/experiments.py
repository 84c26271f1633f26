"""End-to-end experiment drivers shared by the scripts and the acceptance tests."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .cohort import SplitSpec, assemble_samples, cohort_from_rows, daterange_stats, split_samples
from .config import default_gbdt, default_mlp
from .evaluation import classification_report, regression_report
from .features import derive_labels, encode_matrix, get_schema
from .models import FittedModel, fit_model
from .robustness import SmoothnessConfig, dataset_columns, empirical_kl, global_smoothness, rank_correlation
from .synthgen import GeneratorSpec, foreign_like, generate, inpatient_like

HOLDOUT = 208


def synthetic_samples(spec: GeneratorSpec, schema: str = "union"):
    """Generate a cohort in memory and assemble it; returns (samples, ledger)."""
    meas, statics, ledger = generate(spec)
    timelines, stat = cohort_from_rows(meas, statics)
    return assemble_samples(timelines, stat, get_schema(schema)), ledger


def _accuracy(model: FittedModel, samples, task: str) -> float:
    truth = derive_labels([s.target_hba1c for s in samples], task)
    return classification_report(model.predict_labels(samples, task), truth).accuracy


def run_desk_reproduction(seed: int = 0, task: str = "dm", schema: str = "r") -> dict:
    """Classifiers and a SynthA1c encoder on the default cohort, scored on a 208-sample holdout."""
    t0 = time.perf_counter()
    samples, ledger = synthetic_samples(GeneratorSpec(seed=seed))
    split = split_samples(samples, SplitSpec(holdout_count=HOLDOUT, seed=seed))
    sch = get_schema(schema)
    truth = derive_labels([s.target_hba1c for s in split.holdout], task)
    zero = classification_report(np.ones(len(truth), dtype=bool), truth).accuracy

    gbdt = fit_model("gbdt", task, split.train, sch, gbdt=default_gbdt(task, schema))
    mlp = fit_model("mlp", task, split.train, sch, mlp=default_mlp(seed))
    enc = fit_model("gbdt", "syntha1c", split.train, sch, gbdt=default_gbdt("syntha1c", schema))
    y = np.array([s.target_hba1c for s in split.holdout])
    reg = regression_report(enc.predict(split.holdout), y)
    return {
        "seed": seed,
        "task": task,
        "schema": schema,
        "n_samples": len(samples),
        "n_patients": len({s.patient_id for s in samples}),
        "n_train": len(split.train),
        "n_holdout": len(split.holdout),
        "dm_prevalence": ledger["dm_prevalence"],
        "median_daterange_days": daterange_stats(samples)["median_days"],
        "accuracy": {"zero_rule": zero, "gbdt": _accuracy(gbdt, split.holdout, task),
                     "mlp": _accuracy(mlp, split.holdout, task),
                     "syntha1c_gbdt": _accuracy(enc, split.holdout, task)},
        "encoder": {"rmse": reg.rmse, "pcc": reg.pcc},
        "seconds": time.perf_counter() - t0,
    }


@dataclass(frozen=True)
class CapacitySweep:
    depths: tuple[int, ...] = (2, 6, 16)
    schema: str = "p_prime"
    q: int = 64
    radius: float = 0.1
    eval_cap: int | None = 400


def run_smoothness_vs_ood(seed: int = 0, sweep: CapacitySweep = CapacitySweep()) -> dict:
    """GBDT encoders of increasing depth: training-set smoothness against error on shifted cohorts.

    Smoothness is measured on the training data; each shifted cohort shares
    the base cohort's calibrated HbA1c link. The KL divergence of every
    shifted cohort from the training data is reported alongside.
    """
    t0 = time.perf_counter()
    base = GeneratorSpec(seed=seed)
    meas, statics, ledger = generate(base)
    train = assemble_samples(*cohort_from_rows(meas, statics), get_schema(sweep.schema))
    shifted = {
        "inpatient_like": synthetic_samples(inpatient_like(base, ledger, seed=seed + 1), sweep.schema)[0],
        "foreign_like": synthetic_samples(foreign_like(base, ledger, seed=seed + 2), sweep.schema)[0],
    }
    sch = get_schema(sweep.schema)
    X = encode_matrix(train, sch)
    kl_features = ["race", "gender", "age", "bmi", "hba1c"]
    q_cols = dataset_columns(train, kl_features)
    kl = {name: empirical_kl(dataset_columns(s, kl_features), q_cols, kl_features).total
          for name, s in shifted.items()}

    rows = []
    for depth in sweep.depths:
        cfg = replace(default_gbdt("syntha1c", sweep.schema), max_depth=depth)
        model = fit_model("gbdt", "syntha1c", train, sch, gbdt=cfg)
        sc = SmoothnessConfig(model.stats, q=sweep.q, radius=sweep.radius, seed=seed, eval_cap=sweep.eval_cap)
        rep = global_smoothness(model, X, sc, len(sch), sch.variant)
        doubled = global_smoothness(lambda Z: 2.0 * model(Z), X, sc, len(sch), sch.variant)
        flat = global_smoothness(lambda Z: np.zeros(len(Z)), X, sc, len(sch), sch.variant)
        m = rep.global_smoothness
        row = {"depth": depth, "smoothness": m, "invariants": {
            "non_negative": bool(np.all(rep.mu >= 0)),
            "doubling_ratio": doubled.global_smoothness / m if m > 0 else None,
            "constant_is_zero": flat.global_smoothness == 0.0,
        }}
        for name, s in shifted.items():
            y = np.array([x.target_hba1c for x in s])
            row[f"rmse_{name}"] = regression_report(model.predict(s), y).rmse
        rows.append(row)
    corr = {name: rank_correlation([r["smoothness"] for r in rows], [r[f"rmse_{name}"] for r in rows])["spearman"]
            for name in shifted}
    return {"seed": seed, "schema": sweep.schema, "rows": rows, "spearman": corr, "kl": kl,
            "n_train": len(train), "n_test": {k: len(v) for k, v in shifted.items()},
            "seconds": time.perf_counter() - t0}
