"""Ensembles of extremely randomized regression trees.

At every node each feature gets one threshold drawn uniformly inside its
current range; the candidate with the lowest impurity wins. Trees are grown
until nodes are pure, hold a single row, or have no non-constant feature.
Leaves store the mean target under both criteria; the criterion only decides
which random split is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet

CRITERIA = ("mse", "mae")


@dataclass(frozen=True)
class ExtraTreesConfig:
    n_estimators: int = 10
    criterion: str = "mse"
    bootstrap: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")


# Best setup reported for the ensembles on the reference data.
BEST_EXTRATREES = ExtraTreesConfig(n_estimators=50, criterion="mae", bootstrap=True)


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.size

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": float(self.value[node]), "n": int(self.n_samples[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def visit(node):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            count.append(0)
            if "value" in node:
                value[i] = node["value"]
                count[i] = node.get("n", 0)
            else:
                feature[i] = node["feature"]
                threshold[i] = node["threshold"]
                left[i] = visit(node["left"])
                right[i] = visit(node["right"])
            return i

        visit(d)
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(value, dtype=float),
            np.array(count, dtype=np.int64),
        )


@dataclass
class Forest:
    config: ExtraTreesConfig
    n_features: int
    trees: list[Tree] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": {
                "n_estimators": self.config.n_estimators,
                "criterion": self.config.criterion,
                "bootstrap": self.config.bootstrap,
                "seed": self.config.seed,
            },
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        return cls(
            ExtraTreesConfig(**d["config"]),
            int(d["n_features"]),
            [Tree.from_dict(t) for t in d["trees"]],
        )


@numba.njit(cache=True, nogil=True)
def _abs_dev_sum(buf, count):
    # sum |v - median(v)| over buf[:count]; buf is sorted in place
    if count == 0:
        return 0.0
    v = np.sort(buf[:count])
    half = count // 2
    if count % 2 == 1:
        med = v[half]
    else:
        med = 0.5 * (v[half - 1] + v[half])
    total = 0.0
    for i in range(count):
        total += abs(v[i] - med)
    return total


@numba.njit(cache=True, nogil=True)
def _build_tree(X, y, samples, uniforms, use_mae):
    m = samples.size
    d = X.shape[1]
    max_nodes = 2 * m - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    n_samples = np.zeros(max_nodes, dtype=np.int64)

    idx = samples.copy()
    buf_left = np.empty(m)
    buf_right = np.empty(m)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    top = 1
    node_count = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_start[top]
        e = stack_end[top]
        count = e - s
        n_samples[node] = count

        first = y[idx[s]]
        total = 0.0
        constant = True
        for i in range(s, e):
            t = y[idx[i]]
            total += t
            if t != first:
                constant = False
        value[node] = first if constant else total / count
        if count < 2 or constant:
            continue

        best_score = np.inf
        best_f = -1
        best_t = 0.0
        for f in range(d):
            lo = X[idx[s], f]
            hi = lo
            for i in range(s + 1, e):
                v = X[idx[i], f]
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            if not hi > lo:
                continue
            t = lo + uniforms[node, f] * (hi - lo)
            if not (lo < t and t < hi):
                t = lo + 0.5 * (hi - lo)
                if not (lo < t and t < hi):
                    continue
            if use_mae:
                nl = 0
                nr = 0
                for i in range(s, e):
                    r = idx[i]
                    if X[r, f] <= t:
                        buf_left[nl] = y[r]
                        nl += 1
                    else:
                        buf_right[nr] = y[r]
                        nr += 1
                score = _abs_dev_sum(buf_left, nl) + _abs_dev_sum(buf_right, nr)
            else:
                nl = 0
                sl = 0.0
                sr = 0.0
                for i in range(s, e):
                    r = idx[i]
                    if X[r, f] <= t:
                        nl += 1
                        sl += y[r]
                    else:
                        sr += y[r]
                nr = count - nl
                # SSE_left + SSE_right up to the node's constant sum of squares
                score = -(sl * sl / nl + sr * sr / nr)
            if score < best_score:
                best_score = score
                best_f = f
                best_t = t
        if best_f < 0:
            continue

        # partition idx[s:e] so rows going left come first
        i = s
        j = e - 1
        while i <= j:
            if X[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = node_count
        right[node] = node_count + 1
        stack_node[top] = node_count + 1
        stack_start[top] = i
        stack_end[top] = e
        top += 1
        stack_node[top] = node_count
        stack_start[top] = s
        stack_end[top] = i
        top += 1
        node_count += 2

    return (
        feature[:node_count],
        threshold[:node_count],
        left[:node_count],
        right[:node_count],
        value[:node_count],
        n_samples[:node_count],
    )


@numba.njit(cache=True, nogil=True)
def _apply_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for q in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[q, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[q] = value[node]
    return out


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream per tree, derived from (seed, tree index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), tree_index])))


def fit_tree(X: np.ndarray, y: np.ndarray, criterion: str, bootstrap: bool, rng: np.random.Generator) -> Tree:
    n, d = X.shape
    samples = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    # one uniform per (node, feature), drawn whether or not the feature is usable
    uniforms = rng.random((2 * n - 1, d))
    arrays = _build_tree(X, y, samples.astype(np.int64), uniforms, criterion == "mae")
    return Tree(*arrays)


def fit(X, y, cfg: ExtraTreesConfig = ExtraTreesConfig()) -> Forest:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.shape[0] == 0:
        raise EmptyTrainingSet("extra-trees needs at least one training row")
    trees = [
        fit_tree(X, y, cfg.criterion, cfg.bootstrap, tree_rng(cfg.seed, t))
        for t in range(cfg.n_estimators)
    ]
    return Forest(cfg, X.shape[1], trees)


def tree_predictions(forest: Forest, X) -> np.ndarray:
    """Per-tree predictions, shape ``(n_trees, n_queries)``."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    if X.shape[1] != forest.n_features:
        raise DimensionMismatch(forest.n_features, X.shape[1])
    return np.stack(
        [_apply_tree(t.feature, t.threshold, t.left, t.right, t.value, X) for t in forest.trees]
    )


def predict(forest: Forest, X) -> np.ndarray:
    return tree_predictions(forest, X).mean(axis=0)


def warmup() -> None:
    """Trigger JIT compilation so it does not land inside timed fits."""
    X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]])
    y = np.array([0.0, 1.0, 3.0])
    for criterion in CRITERIA:
        predict(fit(X, y, ExtraTreesConfig(1, criterion)), X)
