import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syntha1c.features import (
    CATALOG,
    FeatureError,
    LabelTask,
    bmi,
    decode_continuous,
    derive_label,
    encode,
    encode_matrix,
    fit_standardization,
    get_schema,
    project_schema,
    shad,
    standardize_encoded,
)

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def test_bmi_and_shad_examples():
    assert bmi(80.0, 2.0) == pytest.approx(20.0)
    assert shad(50.0, 60.0) == pytest.approx(-10.0)
    with pytest.raises(FeatureError):
        bmi(70.0, 0.0)


@given(st.floats(30, 300), st.floats(1.0, 2.3))
def test_bmi_matches_formula(w, h):
    assert bmi(w, h) == pytest.approx(w / (h * h), rel=1e-12)


@given(finite, finite)
def test_shad_is_antisymmetric(a, b):
    assert shad(a, b) == -shad(b, a)


@pytest.mark.parametrize("value,dm,predm", [(6.5, True, True), (6.4999, False, True), (5.7, False, True),
                                            (5.6999, False, False)])
def test_labels_at_cutoffs(value, dm, predm):
    assert derive_label(value, LabelTask.DM) is dm
    assert derive_label(value, "dm_predm") is predm


@given(st.floats(3, 20))
def test_dm_implies_dm_predm(v):
    assert not derive_label(v, "dm") or derive_label(v, "dm_predm")


def test_schema_contents():
    assert get_schema("p_prime").feature_ids == ("race", "gender", "age", "bmi")
    r, cdp = get_schema("r"), get_schema("cdp_only")
    dropped = set(r.feature_ids) - set(cdp.feature_ids)
    assert dropped == {"subq_fat", "visc_fat", "liver_hu", "spleen_hu"}
    assert r.encoded_width - cdp.encoded_width == 4
    assert all(CATALOG[f].kind == "IDP" for f in get_schema("idp_only").feature_ids)
    with pytest.raises(FeatureError):
        get_schema("nope")


def test_projection_derives_and_prefers_given_values():
    raw = {"race": "white", "gender": "male", "age": 50.0, "weight_kg": 90.0, "height_m": 1.8}
    (_, _, _, b) = project_schema(raw, get_schema("p_prime"))
    assert b == pytest.approx(90 / 1.8 ** 2)
    assert project_schema({**raw, "bmi": 33.0}, get_schema("p_prime"))[3] == 33.0
    with pytest.raises(FeatureError):
        project_schema({"race": "white", "gender": "male", "age": 50.0}, get_schema("p_prime"))


def test_standardization_matches_two_pass_oracle(small_cohort):
    samples, _ = small_cohort
    schema = get_schema("p")
    stats = fit_standardization(samples, schema)
    for fid, m, s in zip(stats.feature_ids, stats.means, stats.stds):
        col = [float(project_schema(x, schema)[schema.feature_ids.index(fid)]) for x in samples]
        mean = math.fsum(col) / len(col)
        sd = math.sqrt(math.fsum((c - mean) ** 2 for c in col) / len(col))
        assert abs(m - mean) <= 1e-12 * max(1.0, abs(mean))
        assert abs(s - sd) <= 1e-12 * max(1.0, sd)


class Row(dict):
    """Mapping-style sample carrying its target as an attribute."""

    def __init__(self, target, **fields):
        super().__init__(fields)
        self.target_hba1c = target


def test_constant_column_rejected(small_cohort):
    samples, _ = small_cohort
    rows = [Row(s.target_hba1c, **{**s.as_dict(), "age": 40.0}) for s in samples]
    with pytest.raises(FeatureError, match="constant"):
        fit_standardization(rows, get_schema("p_prime"))


def test_encode_roundtrip_and_one_hot(small_cohort):
    samples, _ = small_cohort
    schema = get_schema("p")
    stats = fit_standardization(samples, schema)
    raw = encode_matrix(samples, schema)
    std = encode_matrix(samples, schema, stats)
    np.testing.assert_allclose(standardize_encoded(raw, schema, stats), std, atol=1e-12)
    mask = schema.continuous_mask()
    # each categorical block has exactly one hot slot
    assert np.all(std[:, ~mask].sum(axis=1) == len(schema) - len(schema.continuous_ids))
    for s, v in zip(samples[:50], std[:50]):
        back = decode_continuous(v, schema, stats)
        vals = dict(zip(schema.feature_ids, project_schema(s, schema)))
        for fid, x in back.items():
            assert abs(x - float(vals[fid])) <= 1e-9 * max(1.0, abs(float(vals[fid])))


def test_unknown_category_rejected():
    with pytest.raises(FeatureError):
        encode({"race": "martian", "gender": "male", "age": 1.0, "bmi": 20.0}, get_schema("p_prime"))


@settings(max_examples=30)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=12), st.floats(0.1, 5))
def test_slot_scales_follow_stds(ages, bmi_scale):
    schema = get_schema("p_prime")
    rows = [Row(5.0 + i, race="white", gender=("male", "female")[i % 2], age=40.0 + a + i,
                bmi=25.0 + bmi_scale * i) for i, a in enumerate(ages)]
    stats = fit_standardization(rows, schema)
    scale = np.array(stats.slot_scale)
    assert scale.size == schema.encoded_width
    cont = schema.continuous_mask()
    assert np.all(scale[~cont] == 0)
    np.testing.assert_allclose(scale[cont], stats.stds)
