from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from syntha1c.baselines import ols_fit
from syntha1c.cohort import daterange_stats
from syntha1c.experiments import synthetic_samples
from syntha1c.features import custom_schema, encode_matrix
from syntha1c.robustness import dataset_columns, empirical_kl
from syntha1c.synthgen import (
    DEFAULT_DM_PREVALENCE,
    GeneratorError,
    GeneratorSpec,
    LinkParams,
    foreign_like,
    generate,
    inpatient_like,
    shifted_spec,
    write_cohort,
)

SMALL = GeneratorSpec(n_patients=80, n_samples=400, seed=11)


def test_same_seed_same_rows():
    assert generate(SMALL) == generate(SMALL)
    assert generate(SMALL)[0] != generate(replace(SMALL, seed=12))[0]


def test_noiseless_link_is_identifiable():
    spec = replace(
        SMALL, noise_sd=0.0, patient_sd=0.0, jitter_sd_days=0.0, outlier_prob=0.0, measurement_noise=0.0,
        idp_visit_fraction=1.0, link=LinkParams(hinge=0.0),
    )
    samples, ledger = synthetic_samples(spec)
    schema = custom_schema("link", ("bmi", "age", "visc_fat", "shad"))
    X = encode_matrix(samples, schema)
    y = np.array([s.target_hba1c for s in samples])
    m = ols_fit(X, y)
    link = spec.link
    np.testing.assert_allclose(m.coef, [link.bmi, link.age, link.visc_fat, link.shad], atol=1e-4)
    assert np.max(np.abs(m.predict(X) - y)) < 1e-4
    assert all(s.daterange == 0 for s in samples)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_prevalence_is_calibrated(seed):
    _, _, ledger = generate(GeneratorSpec(seed=seed))
    assert abs(ledger["dm_prevalence"] - DEFAULT_DM_PREVALENCE) <= 0.05
    assert ledger["dm_or_predm_prevalence"] >= ledger["dm_prevalence"]


def test_ledger_counts_match_assembled_samples():
    samples, ledger = synthetic_samples(SMALL)
    assert len(samples) == ledger["n_samples"] == SMALL.n_samples
    by_gender = Counter(s.get("gender") for s in samples)
    by_race = Counter(s.get("race") for s in samples)
    assert {k: v for k, v in ledger["counts"]["gender"].items() if v} == dict(by_gender)
    assert {k: v for k, v in ledger["counts"]["race"].items() if v} == dict(by_race)


def test_default_cohort_shape():
    samples, ledger = synthetic_samples(GeneratorSpec(seed=0))
    assert len(samples) == 2077 and len({s.patient_id for s in samples}) == 389
    d = daterange_stats(samples)
    assert 0 < d["median_days"] <= 60
    assert d["fraction_within_365"] > 0.8


def test_bmi_shift_beats_iid_redraw():
    wins = 0
    for seed in range(20):
        base = replace(SMALL, seed=100 + seed)
        meas, statics, ledger = generate(base)
        ref, _ = synthetic_samples(base)
        redraw, _ = synthetic_samples(shifted_spec(base, ledger, seed=500 + seed))
        shifted, _ = synthetic_samples(shifted_spec(base, ledger, seed=500 + seed, shift={"bmi": (2.0, 1.0)}))
        q = dataset_columns(ref, ["bmi"])
        wins += (empirical_kl(dataset_columns(shifted, ["bmi"]), q, ["bmi"]).total
                 > empirical_kl(dataset_columns(redraw, ["bmi"]), q, ["bmi"]).total)
    assert wins >= 19


def test_shifted_presets_reuse_intercept():
    _, _, ledger = generate(SMALL)
    for make in (inpatient_like, foreign_like):
        spec = make(SMALL, ledger)
        assert spec.intercept == ledger["intercept"]
        _, _, shifted_ledger = generate(spec)
        assert shifted_ledger["intercept"] == ledger["intercept"]
    assert generate(foreign_like(SMALL, ledger))[2]["counts"]["race"]["other_unknown"] == 1000


def test_spec_validation_and_dict_roundtrip():
    with pytest.raises(GeneratorError):
        generate(replace(SMALL, n_samples=10))
    with pytest.raises(GeneratorError):
        generate(replace(SMALL, shift={"hba1c": (1.0, 1.0)}))
    spec = replace(SMALL, shift={"bmi": (1.0, 1.5)})
    assert GeneratorSpec.from_dict(spec.to_dict()) == spec


def test_write_cohort(tmp_path):
    meas, statics, ledger = generate(replace(SMALL, n_patients=5, n_samples=10))
    paths = write_cohort(tmp_path, meas, statics, ledger)
    assert paths["measurements"].read_text().splitlines()[0] == "patient_id,feature,value,date"
    assert len(paths["statics"].read_text().splitlines()) == 6
