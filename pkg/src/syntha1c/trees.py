"""Second-order gradient-boosted regression trees with exact greedy splits.

Trees are grown level by level. At each level every feature column is
scanned once in pre-sorted order, grouped by node, so one pass of numpy
work evaluates every candidate split of every open node.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


class GbdtError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtConfig:
    objective: str = "logistic"  # "logistic" | "squared"
    n_trees: int = 32
    learning_rate: float = 0.1
    max_depth: int = 16
    reg_alpha: float = 1.0
    reg_lambda: float = 2.0
    min_samples_leaf: int = 1
    min_child_weight: float = 0.0

    def __post_init__(self):
        if self.objective not in ("logistic", "squared"):
            raise GbdtError(f"unknown objective {self.objective!r}")
        if self.n_trees < 0 or self.max_depth < 0:
            raise GbdtError("n_trees and max_depth must be non-negative")
        if self.reg_alpha < 0 or self.reg_lambda < 0:
            raise GbdtError("regularization must be non-negative")


@dataclass
class Tree:
    """Flat node arrays; a node is a leaf when ``feature[i] == -1``."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_leaf(self, weight: float = 0.0) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(weight))
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = feat[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, feat[n]] < thr[n]
            node[r] = np.where(go_left, left[n], right[n])
            active = feat[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value)[self.apply(X)]

    def to_record(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": self.value[i]}
        return {
            "feature": self.feature[i],
            "threshold": self.threshold[i],
            "left": self.to_record(self.left[i]),
            "right": self.to_record(self.right[i]),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Tree":
        tree = cls()

        def rec_add(r):
            i = tree.add_leaf(r.get("leaf", 0.0))
            if "leaf" not in r:
                tree.feature[i] = int(r["feature"])
                tree.threshold[i] = float(r["threshold"])
                tree.left[i] = rec_add(r["left"])
                tree.right[i] = rec_add(r["right"])
            return i

        rec_add(rec)
        return tree


@dataclass
class GbdtModel:
    config: GbdtConfig
    base_score: float
    n_features: int
    trees: list[Tree] = field(default_factory=list)

    def raw_margin(self, X, n_trees: int | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise GbdtError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees[:n_trees]:
            out += self.config.learning_rate * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        """Probability for the logistic objective, raw value for squared."""
        margin = self.raw_margin(X)
        if self.config.objective == "logistic":
            return _sigmoid(margin)
        return margin

    def to_json(self) -> str:
        doc = {
            "objective": self.config.objective,
            "base_score": self.base_score,
            "learning_rate": self.config.learning_rate,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "trees": [t.to_record() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        return cls(
            GbdtConfig(**doc["config"]),
            float(doc["base_score"]),
            int(doc["n_features"]),
            [Tree.from_record(t) for t in doc["trees"]],
        )


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def soft_threshold(g, alpha: float):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def leaf_weight(G: float, H: float, alpha: float, lam: float) -> float:
    return float(-soft_threshold(G, alpha) / (H + lam))


def _tie_tol(gain):
    return 1e-12 * (1.0 + np.abs(gain))


def _score(G, H, alpha, lam):
    t = soft_threshold(G, alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(H + lam > 0, t * t / (H + lam), 0.0)


def gradients(objective: str, y: np.ndarray, margin: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if objective == "logistic":
        p = _sigmoid(margin)
        return p - y, p * (1.0 - p)
    return margin - y, np.ones_like(y)


def loss(objective: str, y: np.ndarray, margin: np.ndarray) -> float:
    if objective == "logistic":
        # log(1 + e^m) - y m, computed stably
        return float(np.mean(np.logaddexp(0.0, margin) - y * margin))
    return float(np.mean((margin - y) ** 2))


def _base_score(objective: str, y: np.ndarray) -> float:
    if objective == "logistic":
        p = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        return math.log(p / (1 - p))
    return float(y.mean())


def build_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, config: GbdtConfig,
               order: np.ndarray | None = None) -> Tree:
    """Grow one tree on gradient statistics.

    ``order`` holds a stable argsort of each column of ``X`` and may be
    passed in to avoid re-sorting across boosting rounds.
    """
    n, d = X.shape
    alpha, lam = config.reg_alpha, config.reg_lambda
    if order is None:
        order = np.argsort(X, axis=0, kind="stable")
    tree = Tree()
    root = tree.add_leaf()
    node_of = np.zeros(n, dtype=np.int64)  # tree node id per row; -1 once settled in a leaf
    open_nodes = [root]

    for depth in range(config.max_depth + 1):
        if not open_nodes:
            break
        k = len(open_nodes)
        slot = np.full(tree.n_nodes, -1, dtype=np.int64)
        slot[open_nodes] = np.arange(k)
        row_slot = np.where(node_of >= 0, slot[np.maximum(node_of, 0)], -1)
        live = row_slot >= 0
        G = np.bincount(row_slot[live], weights=g[live], minlength=k)
        H = np.bincount(row_slot[live], weights=h[live], minlength=k)
        cnt = np.bincount(row_slot[live], minlength=k)

        best_gain = np.zeros(k)
        best_feat = np.full(k, -1, dtype=np.int64)
        best_thr = np.zeros(k)

        if depth < config.max_depth:
            parent_score = _score(G, H, alpha, lam)
            for f in range(d):
                o = order[:, f]
                s = row_slot[o]
                o = o[s >= 0]
                s = s[s >= 0]
                regroup = np.argsort(s, kind="stable")
                o, s = o[regroup], s[regroup]
                if o.size < 2:
                    continue
                xs = X[o, f]
                cg = np.cumsum(g[o])
                ch = np.cumsum(h[o])
                starts = np.searchsorted(s, np.arange(k))
                base_g = np.where(starts > 0, cg[np.maximum(starts - 1, 0)], 0.0)
                base_h = np.where(starts > 0, ch[np.maximum(starts - 1, 0)], 0.0)
                GL = cg[:-1] - base_g[s[:-1]]
                HL = ch[:-1] - base_h[s[:-1]]
                sp = s[:-1]
                GR = G[sp] - GL
                HR = H[sp] - HL
                pos_in_node = np.arange(o.size - 1) - starts[sp]
                nl = pos_in_node + 1
                nr = cnt[sp] - nl
                valid = (s[1:] == sp) & (xs[1:] > xs[:-1])
                valid &= (nl >= config.min_samples_leaf) & (nr >= config.min_samples_leaf)
                if config.min_child_weight > 0:
                    valid &= (HL >= config.min_child_weight) & (HR >= config.min_child_weight)
                if not valid.any():
                    continue
                gain = 0.5 * (_score(GL, HL, alpha, lam) + _score(GR, HR, alpha, lam) - parent_score[sp])
                gain = np.where(valid, gain, -np.inf)
                seg_max = np.full(k, -np.inf)
                np.maximum.at(seg_max, sp, gain)
                # gains equal up to rounding count as ties: lowest threshold, then lowest feature wins
                hit = np.flatnonzero(gain >= seg_max[sp] - _tie_tol(seg_max[sp]))
                nodes_hit, first = np.unique(sp[hit], return_index=True)
                pos = hit[first]
                better = seg_max[nodes_hit] > best_gain[nodes_hit] + _tie_tol(best_gain[nodes_hit])
                nodes_hit, pos = nodes_hit[better], pos[better]
                lo, hi = xs[pos], xs[pos + 1]
                thr = 0.5 * (lo + hi)
                thr = np.where((thr > lo) & (thr <= hi), thr, hi)
                best_gain[nodes_hit] = seg_max[nodes_hit]
                best_feat[nodes_hit] = f
                best_thr[nodes_hit] = thr

        next_open = []
        for j, nid in enumerate(open_nodes):
            if best_feat[j] >= 0 and best_gain[j] > 0:
                left = tree.add_leaf()
                right = tree.add_leaf()
                tree.feature[nid] = int(best_feat[j])
                tree.threshold[nid] = float(best_thr[j])
                tree.left[nid] = left
                tree.right[nid] = right
                rows = np.flatnonzero(row_slot == j)
                goes_left = X[rows, best_feat[j]] < best_thr[j]
                node_of[rows[goes_left]] = left
                node_of[rows[~goes_left]] = right
                next_open.extend((left, right))
            else:
                tree.value[nid] = leaf_weight(G[j], H[j], alpha, lam)
                node_of[row_slot == j] = -1
        open_nodes = next_open
    return tree


def fit_gbdt(X, y, config: GbdtConfig = GbdtConfig(), history: list | None = None) -> GbdtModel:
    """Boost ``config.n_trees`` trees. Per-round training loss is appended to ``history``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise GbdtError("need a non-empty 2-D design matrix")
    if y.shape != (X.shape[0],):
        raise GbdtError("targets must be a vector matching the rows of X")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise GbdtError("inputs must be finite")
    if config.objective == "logistic" and not np.all((y == 0) | (y == 1)):
        raise GbdtError("logistic objective needs 0/1 targets")

    model = GbdtModel(config, _base_score(config.objective, y), X.shape[1])
    margin = np.full(X.shape[0], model.base_score)
    order = np.argsort(X, axis=0, kind="stable")
    if history is not None:
        history.append(loss(config.objective, y, margin))
    for _ in range(config.n_trees):
        g, h = gradients(config.objective, y, margin)
        tree = build_tree(X, g, h, config, order)
        model.trees.append(tree)
        margin = margin + config.learning_rate * tree.predict(X)
        if history is not None:
            history.append(loss(config.objective, y, margin))
    return model


def predict_gbdt(model: GbdtModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return model.predict(X[None, :])[0]
    return model.predict(X)
