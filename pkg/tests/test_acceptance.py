"""Acceptance criteria, one test each, with their runtime limits."""
import math

import numpy as np
import pytest

from syntha1c.baselines import MultiRuleAnswer, multi_rule_classify, multi_rule_score
from syntha1c.cohort import MeasurementTimeline, StaticAttributes, assemble_samples, build_timelines
from syntha1c.evaluation import bland_altman, classification_report, regression_report
from syntha1c.experiments import run_desk_reproduction, run_smoothness_vs_ood
from syntha1c.features import StandardizationStats, custom_schema
from syntha1c.models import fit_model
from syntha1c.net import gradient_check, init_mlp, min_abs_preactivation
from syntha1c.robustness import SmoothnessConfig, empirical_kl, global_smoothness, local_smoothness
from syntha1c.trees import GbdtConfig, fit_gbdt


def test_zero_rule_fixed_point(criterion, small_cohort):
    with criterion(1, "Zero-Rule fixed point", 1.0):
        truth = np.array([True] * 524 + [False] * 476)
        rep = classification_report(np.ones(1000, dtype=bool), truth)
        assert rep.as_percent() == {"recall": 100.0, "precision": 52.4, "specificity": 0.0, "accuracy": 52.4}
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 300))
            t = rng.random(n) < rng.random()
            if not t.any() or t.all():
                continue
            r = classification_report(np.ones(n, dtype=bool), t)
            p = t.sum() / n
            assert (r.recall, r.precision, r.specificity, r.accuracy) == (1.0, p, 0.0, p)
        samples, _ = small_cohort
        model = fit_model("zero_rule", "dm", samples, custom_schema("z", ("age",)))
        truth = np.array([s.target_hba1c >= 6.5 for s in samples])
        r = classification_report(model.predict_labels(samples), truth)
        assert (r.recall, r.specificity, r.precision) == (1.0, 0.0, truth.mean())


# Hand-computed sums. Rows: (age, gender, high blood pressure); columns: BMI 22, 27, 35, 45.
HAND_TABLE = {
    (35, "female", 0): (0, 1, 2, 3), (35, "female", 1): (1, 2, 3, 4),
    (35, "male", 0): (1, 2, 3, 4), (35, "male", 1): (2, 3, 4, 5),
    (45, "female", 0): (1, 2, 3, 4), (45, "female", 1): (2, 3, 4, 5),
    (45, "male", 0): (2, 3, 4, 5), (45, "male", 1): (3, 4, 5, 6),
    (55, "female", 0): (2, 3, 4, 5), (55, "female", 1): (3, 4, 5, 6),
    (55, "male", 0): (3, 4, 5, 6), (55, "male", 1): (4, 5, 6, 7),
    (65, "female", 0): (3, 4, 5, 6), (65, "female", 1): (4, 5, 6, 7),
    (65, "male", 0): (4, 5, 6, 7), (65, "male", 1): (5, 6, 7, 8),
}
BMI_COLUMNS = (22.0, 27.0, 35.0, 45.0)
BP_READINGS = {0: [(120.0, 70.0), (130.0, 80.0)], 1: [(131.0, 70.0), (120.0, 81.0), (150.0, 95.0)]}


def test_multi_rule_enumeration(criterion):
    with criterion(2, "Multi-Rule exhaustive enumeration", 1.0):
        assert len(HAND_TABLE) * len(BMI_COLUMNS) == 64
        for (age, gender, bp), row in HAND_TABLE.items():
            for bmi, expected in zip(BMI_COLUMNS, row):
                for sbp, dbp in BP_READINGS[bp]:
                    points = multi_rule_score(MultiRuleAnswer(age, gender, sbp, dbp, bmi))
                    assert points == expected, (age, gender, sbp, dbp, bmi)
                    assert multi_rule_classify(points, "dm") is (expected >= 5)
                    assert multi_rule_classify(points, "dm_predm") is (expected >= 3)


def test_mlp_gradient_check(criterion):
    with criterion(3, "MLP gradient check over 20 networks", 10.0):
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            head = ("sigmoid", "identity")[seed % 2]
            sizes = (int(rng.integers(2, 7)), int(rng.integers(2, 9)), int(rng.integers(2, 7)), 1)
            model = init_mlp(sizes, head, rng)
            for b in model.biases:
                b[:] = rng.normal(scale=0.1, size=b.shape)
            # central differences are invalid within h of a ReLU kink; redraw such inputs
            x = rng.normal(size=sizes[0])
            while min_abs_preactivation(model, x) < 1e-3:
                x = rng.normal(size=sizes[0])
            y = float(rng.integers(0, 2)) if head == "sigmoid" else float(rng.normal())
            worst = max(worst, gradient_check(model, x, y, h=1e-5))
        assert worst < 1e-4, worst


def test_gbdt_oracles(criterion):
    with criterion(4, "GBDT XOR, monotone loss, determinism", 30.0):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(200, 2))
        y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(float)
        xor = fit_gbdt(X, y, GbdtConfig(n_trees=10, max_depth=3, learning_rate=1.0, reg_alpha=0.0, reg_lambda=1.0))
        assert np.mean((xor.predict(X) >= 0.5) == y) == 1.0

        Xl = np.linspace(-2, 2, 100)[:, None]
        hist: list = []
        fit_gbdt(Xl, 1.5 * Xl[:, 0] - 0.3, GbdtConfig("squared", n_trees=30, max_depth=4), history=hist)
        assert all(b <= a for a, b in zip(hist, hist[1:]))
        assert hist[-1] < hist[0]

        cfg = GbdtConfig(n_trees=12, max_depth=6)
        assert fit_gbdt(X, y, cfg).to_json().encode() == fit_gbdt(X, y, cfg).to_json().encode()


def _stats(scale, target_std=1.0):
    return StandardizationStats("t", ("x",), (0.0,), (scale,), 0.0, target_std, (scale,))


def test_smoothness_closed_form(criterion):
    with criterion(5, "Smoothness closed form", 10.0):
        X = np.random.default_rng(1).normal(size=(40, 1))
        cfg = SmoothnessConfig(_stats(2.0, 0.5), q=64, seed=3)
        const = global_smoothness(lambda Z: np.full(len(Z), 7.0), X, cfg, 1)
        assert const.global_smoothness == 0.0 and np.all(const.mu == 0.0)

        w, sx, sy = -1.7, 2.0, 0.5
        big = SmoothnessConfig(_stats(sx, sy), q=10_000, seed=5)
        mu = local_smoothness(lambda Z: w * Z[:, 0], [0.4], big)
        assert abs(mu - abs(w) * sx / sy) <= 0.02 * abs(w) * sx / sy

        f = lambda Z: np.sin(3 * Z[:, 0]) + Z[:, 0] ** 2
        a = global_smoothness(f, X, cfg, 1)
        b = global_smoothness(lambda Z: 2 * f(Z), X, cfg, 1)
        np.testing.assert_allclose(b.mu, 2 * a.mu, rtol=1e-12)


def test_kl_divergence(criterion):
    with criterion(6, "KL divergence identity, sign, ordering", 30.0):
        rng = np.random.default_rng(0)
        P = {"a": rng.normal(size=300).tolist(), "r": rng.choice(["x", "y", "z"], 300).tolist()}
        assert empirical_kl(P, P, ["a", "r"]).total <= 1e-9
        for seed in range(100):
            r = np.random.default_rng(seed)
            p = {"a": r.normal(r.normal(), r.uniform(0.5, 2), 60).tolist()}
            q = {"a": r.normal(r.normal(), r.uniform(0.5, 2), 90).tolist()}
            assert empirical_kl(p, q, ["a"]).total >= 0.0
        wins = 0
        for seed in range(20):
            r = np.random.default_rng(1000 + seed)
            q = {"a": r.normal(size=400).tolist()}
            near = {"a": r.normal(0.1, 1.0, 400).tolist()}
            far = {"a": r.normal(3.0, 1.0, 400).tolist()}
            wins += empirical_kl(far, q, ["a"]).total > empirical_kl(near, q, ["a"]).total
        assert wins >= 19


def test_nearest_in_time_assembly(criterion):
    with criterion(7, "Nearest-in-time assembly vs brute force", 5.0):
        rng = np.random.default_rng(7)
        schema = custom_schema("acc", ("gender", "sbp"))
        ties = 0
        for case in range(1000):
            target = int(rng.integers(0, 200))
            dates = set(int(d) for d in rng.integers(-20, 220, size=int(rng.integers(1, 8))))
            if case % 3 == 0:
                gap = int(rng.integers(1, 15))  # equidistant pair around the lab date
                dates = {d for d in dates if abs(d - target) > gap} | {target - gap, target + gap}
            dates = sorted(dates)
            values = [float(i) for i in range(len(dates))]
            rows = [("p", "sbp", v, d) for v, d in zip(values, dates)] + [("p", "hba1c", 6.0, target)]
            (sample,) = assemble_samples(build_timelines(rows), {"p": StaticAttributes("p", "white", "male")}, schema)
            best = min(range(len(dates)), key=lambda i: (abs(dates[i] - target), dates[i]))
            gaps = [abs(d - target) for d in dates]
            ties += gaps.count(min(gaps)) > 1
            assert sample.get("sbp") == values[best]
        assert ties > 100


def test_metric_oracles(criterion):
    with criterion(8, "Metric oracles", 5.0):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n = int(rng.integers(2, 40))
            p = rng.normal(6, 1, n)
            t = rng.normal(6, 1, n)
            rep = regression_report(p, t)
            rmse = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, t)) / n)
            mp, mt = sum(p) / n, sum(t) / n
            pcc = sum((a - mp) * (b - mt) for a, b in zip(p, t)) / math.sqrt(
                sum((a - mp) ** 2 for a in p) * sum((b - mt) ** 2 for b in t))
            assert abs(rep.rmse - rmse) <= 1e-10 and abs(rep.pcc - pcc) <= 1e-10
            pl, tl = rng.random(n) < 0.5, rng.random(n) < 0.5
            c = classification_report(pl, tl)
            tp = sum(a and b for a, b in zip(pl, tl))
            fp = sum(a and not b for a, b in zip(pl, tl))
            tn = sum(not a and not b for a, b in zip(pl, tl))
            fn = n - tp - fp - tn
            for got, num, den in ((c.recall, tp, tp + fn), (c.precision, tp, tp + fp),
                                  (c.specificity, tn, tn + fp), (c.accuracy, tp + tn, n)):
                assert got is None if den == 0 else abs(got - num / den) <= 1e-10
        t = rng.normal(6, 1, 50)
        assert regression_report(t, t).pcc == 1.0
        p = t + rng.normal(0.1, 0.3, 50)
        ba = bland_altman(p, t)
        d = p - t
        bias = sum(d) / 50
        sd = math.sqrt(sum((x - bias) ** 2 for x in d) / 50)
        assert abs(ba["bias"] - bias) <= 1e-10 and abs(ba["sd"] - sd) <= 1e-10
        assert abs(ba["limits"][0] - (bias - 1.96 * sd)) <= 1e-10
        assert abs(ba["limits"][1] - (bias + 1.96 * sd)) <= 1e-10


def test_desk_scale_reproduction(criterion):
    with criterion(9, "Desk-scale end-to-end shape", 60.0):
        r = run_desk_reproduction(seed=0)
        print(r)
        assert (r["n_samples"], r["n_patients"], r["n_train"], r["n_holdout"]) == (2077, 389, 1869, 208)
        acc = r["accuracy"]
        assert acc["gbdt"] >= acc["zero_rule"] + 0.10
        assert acc["mlp"] >= acc["zero_rule"] + 0.10
        assert r["encoder"]["pcc"] >= 0.5


def test_smoothness_vs_ood_harness(criterion):
    with criterion(10, "Smoothness vs OOD harness", 60.0):
        a = run_smoothness_vs_ood(seed=0)
        b = run_smoothness_vs_ood(seed=0)
        a.pop("seconds"), b.pop("seconds")
        assert a == b
        assert [r["depth"] for r in a["rows"]] == [2, 6, 16]
        for row in a["rows"]:
            inv = row["invariants"]
            assert inv["non_negative"] and inv["constant_is_zero"]
            assert inv["doubling_ratio"] == pytest.approx(2.0, rel=1e-12)
            assert math.isfinite(row["smoothness"]) and row["smoothness"] > 0
        for name, rho in a["spearman"].items():
            assert rho is None or -1.0 <= rho <= 1.0
        assert set(a["spearman"]) == {"inpatient_like", "foreign_like"}
