"""Monte-Carlo manifold smoothness and binned KL divergence between datasets.

Smoothness is measured in the raw encoded input space: a perturbation is
drawn in per-feature standardized units and mapped back through the
reference standard deviations, so the model sees ordinary inputs while the
denominator is the norm of the standardized step.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .features import StandardizationStats, custom_schema, project_schema

Predictor = Callable[[np.ndarray], np.ndarray]


class RobustnessError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothnessConfig:
    stats: StandardizationStats
    q: int = 128
    radius: float = 0.1
    seed: int = 0
    eval_cap: int | None = None
    sigma_y: float | None = None  # override of the reference target SD
    chunk_points: int = 256

    def __post_init__(self):
        if self.q < 1:
            raise RobustnessError("q must be >= 1")
        if not self.radius > 0:
            raise RobustnessError("radius must be positive")
        if not self.stats.slot_scale:
            raise RobustnessError("stats carry no per-slot scales; fit them with a schema")

    @property
    def output_scale(self) -> float:
        return self.sigma_y if self.sigma_y is not None else self.stats.target_std

    def echo(self) -> dict:
        return {
            "q": self.q,
            "radius": self.radius,
            "seed": self.seed,
            "eval_cap": self.eval_cap,
            "sigma_y": self.output_scale,
            "sigma_y_source": "override" if self.sigma_y is not None else "reference_target_sd",
            "stats": self.stats.to_dict(),
        }


def _scales(config: SmoothnessConfig, dim: int) -> tuple[np.ndarray, np.ndarray]:
    scale = np.asarray(config.stats.slot_scale, dtype=float)
    if scale.size != dim:
        raise RobustnessError(f"stats describe {scale.size} slots but inputs have {dim}")
    cont = np.flatnonzero(scale > 0)
    if cont.size == 0:
        raise RobustnessError("no continuous coordinate to perturb")
    return cont, scale[cont]


def _draw_steps(rng: np.random.Generator, q: int, k: int, radius: float) -> np.ndarray:
    z = rng.normal(0.0, radius, size=(q, k))
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms < 1e-9):
        bad = norms < 1e-9
        z[bad] = rng.normal(0.0, radius, size=(int(bad.sum()), k))
        norms = np.linalg.norm(z, axis=1)
    return z


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _mu_batch(model: Predictor, X: np.ndarray, indices: Sequence[int], config: SmoothnessConfig) -> np.ndarray:
    n, dim = X.shape
    cont, sig = _scales(config, dim)
    q = config.q
    steps = np.empty((n, q, cont.size))
    for j, idx in enumerate(indices):
        steps[j] = _draw_steps(_point_rng(config.seed, idx), q, cont.size, config.radius)
    pert = np.repeat(X[:, None, :], q, axis=1)
    pert[:, :, cont] += steps * sig
    y0 = np.asarray(model(X), dtype=float).reshape(n)
    yk = np.asarray(model(pert.reshape(n * q, dim)), dtype=float).reshape(n, q)
    ratio = np.abs(yk - y0[:, None]) / config.output_scale / np.linalg.norm(steps, axis=2)
    return ratio.mean(axis=1)


def local_smoothness(model: Predictor, x, config: SmoothnessConfig, index: int = 0) -> float:
    """Monte-Carlo estimate of mean |output change| / ||standardized step|| around ``x``.

    ``index`` selects the per-point random substream, so the same point gets
    the same draws whether evaluated alone or inside :func:`global_smoothness`.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(_mu_batch(model, x, [index], config)[0])


@dataclass
class SmoothnessReport:
    mu: np.ndarray
    config: dict
    cardinality: int
    variant: str = ""
    indices: list[int] = field(default_factory=list)

    @property
    def global_smoothness(self) -> float:
        return float(np.mean(self.mu))

    def to_dict(self) -> dict:
        return {
            "global_smoothness": self.global_smoothness,
            "global_smoothness_x100": 100.0 * self.global_smoothness,
            "cardinality": self.cardinality,
            "variant": self.variant,
            "n_points": int(self.mu.size),
            "indices": list(self.indices),
            "mu": self.mu.tolist(),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def eval_indices(n: int, config: SmoothnessConfig) -> list[int]:
    if config.eval_cap is None or config.eval_cap >= n:
        return list(range(n))
    pick = np.random.default_rng([config.seed, 2**31 - 1]).choice(n, config.eval_cap, replace=False)
    return sorted(int(i) for i in pick)


def global_smoothness(model: Predictor, X, config: SmoothnessConfig, cardinality: int,
                      variant: str = "") -> SmoothnessReport:
    """Mean local smoothness over a dataset (or a seeded subset of ``eval_cap`` rows).

    ``cardinality`` is the size of the feature set the model consumes; reports
    with different cardinalities are not comparable.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise RobustnessError("empty dataset")
    idx = eval_indices(X.shape[0], config)
    mus = []
    for start in range(0, len(idx), config.chunk_points):
        chunk = idx[start : start + config.chunk_points]
        mus.append(_mu_batch(model, X[chunk], chunk, config))
    return SmoothnessReport(np.concatenate(mus), config.echo(), cardinality, variant, idx)


def compare_smoothness(a: SmoothnessReport, b: SmoothnessReport) -> float:
    """Difference of global smoothness, refused across feature sets of different size."""
    if a.cardinality != b.cardinality:
        raise RobustnessError(
            f"smoothness is not comparable across feature sets of cardinality "
            f"{a.cardinality} and {b.cardinality}"
        )
    return a.global_smoothness - b.global_smoothness


def rank_correlation(smoothness: Sequence[float], errors: Sequence[float]) -> dict:
    """Spearman correlation between global smoothness values and OOD errors."""
    s = np.asarray(smoothness, dtype=float)
    e = np.asarray(errors, dtype=float)
    if s.size != e.size or s.size < 2:
        raise RobustnessError("need at least two (smoothness, error) pairs")
    if np.ptp(s) == 0 or np.ptp(e) == 0:
        rho = None
    else:
        rho = float(sps.spearmanr(s, e).statistic)
    return {"spearman": rho, "n": int(s.size)}


# --- distribution shift ---------------------------------------------------


@dataclass
class ShiftReport:
    per_feature: dict[str, float]
    total: float
    binning: dict

    def to_dict(self) -> dict:
        return {"per_feature": self.per_feature, "total": self.total, "binning": self.binning}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _kl(p_counts: np.ndarray, q_counts: np.ndarray, smoothing: float) -> float:
    p = p_counts + smoothing
    q = q_counts + smoothing
    p = p / p.sum()
    q = q / q.sum()
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _is_categorical(values) -> bool:
    return any(isinstance(v, str) for v in values)


def _cell_codes(p_vals, q_vals, bins: int, vocabulary: Sequence[str] | None):
    """Integer cell index per row of both datasets plus the number of cells."""
    if vocabulary is not None or _is_categorical(p_vals) or _is_categorical(q_vals):
        vocab = list(vocabulary) if vocabulary is not None else sorted(set(map(str, p_vals)) | set(map(str, q_vals)))
        lookup = {v: i for i, v in enumerate(vocab)}
        try:
            return (np.array([lookup[str(v)] for v in p_vals]), np.array([lookup[str(v)] for v in q_vals]),
                    len(vocab), {"kind": "categorical", "cells": vocab})
        except KeyError as exc:
            raise RobustnessError(f"category {exc.args[0]!r} outside vocabulary") from None
    p = np.asarray(p_vals, dtype=float)
    q = np.asarray(q_vals, dtype=float)
    lo = float(min(p.min(), q.min()))
    hi = float(max(p.max(), q.max()))
    if hi <= lo:
        return np.zeros(p.size, dtype=int), np.zeros(q.size, dtype=int), 1, {"kind": "continuous", "edges": [lo, hi]}
    edges = np.linspace(lo, hi, bins + 1)
    # right-closed last bin so the maximum lands inside
    pc = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, bins - 1)
    qc = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, bins - 1)
    return pc, qc, bins, {"kind": "continuous", "edges": edges.tolist()}


def empirical_kl(p_data: Mapping[str, Sequence], q_data: Mapping[str, Sequence], features: Sequence[str],
                 bins: int = 10, smoothing: float = 0.5, joint: bool = False,
                 vocabularies: Mapping[str, Sequence[str]] | None = None) -> ShiftReport:
    """D(P || Q) from histograms, Q being the reference (training) dataset.

    Continuous features use ``bins`` equal-width bins over the combined
    support; categorical features use one cell per category. Every cell gets
    ``smoothing`` pseudo-counts. By default the total is the sum of per-feature
    marginal divergences; ``joint=True`` histograms all features together.
    """
    vocabularies = vocabularies or {}
    if not features:
        raise RobustnessError("no features given")
    for f in features:
        if f not in p_data or f not in q_data:
            raise RobustnessError(f"feature {f!r} absent from one of the datasets")
    n_p, n_q = len(p_data[features[0]]), len(q_data[features[0]])
    if n_p == 0 or n_q == 0:
        raise RobustnessError("both datasets must be non-empty")

    codes = {f: _cell_codes(p_data[f], q_data[f], bins, vocabularies.get(f)) for f in features}
    binning = {"bins": bins, "smoothing": smoothing, "joint": joint,
               "features": {f: c[3] for f, c in codes.items()}}
    per_feature = {}
    for f, (pc, qc, ncell, _) in codes.items():
        per_feature[f] = _kl(np.bincount(pc, minlength=ncell).astype(float),
                             np.bincount(qc, minlength=ncell).astype(float), smoothing)
    if not joint:
        return ShiftReport(per_feature, float(sum(per_feature.values())), binning)

    sizes = [codes[f][2] for f in features]
    total_cells = math.prod(sizes)
    p_flat = np.ravel_multi_index([codes[f][0] for f in features], sizes)
    q_flat = np.ravel_multi_index([codes[f][1] for f in features], sizes)
    total = _kl(np.bincount(p_flat, minlength=total_cells).astype(float),
                np.bincount(q_flat, minlength=total_cells).astype(float), smoothing)
    return ShiftReport(per_feature, total, binning)


def dataset_columns(samples: Sequence, features: Sequence[str]) -> dict[str, list]:
    """Column view of assembled samples; ``hba1c`` maps to the target, derived ids are computed."""
    cols: dict[str, list] = {f: [] for f in features}
    other = [f for f in features if f != "hba1c"]
    schema = custom_schema("columns", other) if other else None
    for s in samples:
        if schema is not None:
            for f, v in zip(other, project_schema(s, schema)):
                cols[f].append(v)
        if "hba1c" in cols:
            cols["hba1c"].append(s.target_hba1c)
    return cols
