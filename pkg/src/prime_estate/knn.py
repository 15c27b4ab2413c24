"""k-nearest-neighbour regression with an exact KD-tree for Euclidean distance."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, KTooLarge

METRICS = ("minkowski2", "cosine")
WEIGHTS = ("uniform", "inverse_distance")
LEAF_SIZE = 32


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    metric: str = "minkowski2"
    weights: str = "uniform"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.weights not in WEIGHTS:
            raise ValueError(f"unknown weights {self.weights!r}")


# Best setup reported for k-NN on the reference data.
BEST_KNN = KnnConfig(k=50, metric="minkowski2", weights="inverse_distance")


def _sq_dist(rows: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Every path computes distances through here so results agree bit for bit.
    diff = rows - q
    return np.einsum("ij,ij->i", diff, diff)


class KDTree:
    """Median split on the dimension of widest spread, leaves of at most ``leaf_size`` rows.

    Nodes are stored in flat arrays; ``split_dim == -1`` marks a leaf whose
    rows are ``order[start:end]``.
    """

    def __init__(self, data: np.ndarray, leaf_size: int = LEAF_SIZE):
        self.data = np.ascontiguousarray(data, dtype=float)
        self.leaf_size = leaf_size
        n = self.data.shape[0]
        self.order = np.arange(n)
        self.start: list[int] = []
        self.end: list[int] = []
        self.split_dim: list[int] = []
        self.split_val: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.lower: list[np.ndarray] = []
        self.upper: list[np.ndarray] = []
        self._build(0, n)

    @property
    def node_count(self) -> int:
        return len(self.start)

    def _new_node(self, start, end, lo, hi) -> int:
        self.start.append(start)
        self.end.append(end)
        self.split_dim.append(-1)
        self.split_val.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.lower.append(lo)
        self.upper.append(hi)
        return len(self.start) - 1

    def _build(self, start: int, end: int) -> int:
        idx = self.order[start:end]
        pts = self.data[idx]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        node = self._new_node(start, end, lo, hi)
        count = end - start
        spread = hi - lo
        if count <= self.leaf_size or not np.any(spread > 0):
            return node
        dim = int(np.argmax(spread))
        mid = count // 2
        part = np.argpartition(pts[:, dim], mid)
        self.order[start:end] = idx[part]
        self.split_dim[node] = dim
        self.split_val[node] = float(self.data[self.order[start + mid], dim])
        self.left[node] = self._build(start, start + mid)
        self.right[node] = self._build(start + mid, end)
        return node

    def _box_sq_dist(self, node: int, q: np.ndarray) -> float:
        gap = np.maximum(self.lower[node] - q, 0.0) + np.maximum(q - self.upper[node], 0.0)
        return float(gap @ gap)

    def query(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` nearest rows to ``q`` ordered by (squared distance, row index)."""
        # max-heap of the current best k as (-d2, -index)
        best: list[tuple[float, int]] = []
        frontier = [(0.0, 0)]
        while frontier:
            bound, node = heapq.heappop(frontier)
            if len(best) == k and bound > -best[0][0] * (1 + 1e-12):
                break
            if self.split_dim[node] == -1:
                rows = self.order[self.start[node] : self.end[node]]
                d2 = _sq_dist(self.data[rows], q)
                for dist, row in zip(d2.tolist(), rows.tolist()):
                    item = (-dist, -row)
                    if len(best) < k:
                        heapq.heappush(best, item)
                    elif item > best[0]:
                        heapq.heapreplace(best, item)
                continue
            for child in (self.left[node], self.right[node]):
                heapq.heappush(frontier, (self._box_sq_dist(child, q), child))
        ranked = sorted((-d, -i) for d, i in best)
        return np.array([d for d, _ in ranked]), np.array([i for _, i in ranked], dtype=int)


@dataclass
class KnnModel:
    config: KnnConfig
    train: np.ndarray
    target: np.ndarray
    index: KDTree | None = None
    row_norms: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.train.shape[1]


def fit(X, y, cfg: KnnConfig = KnnConfig()) -> KnnModel:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise EmptyTrainingSet("k-NN needs at least one training row")
    if cfg.k > X.shape[0]:
        raise KTooLarge(cfg.k, X.shape[0])
    if cfg.metric == "minkowski2":
        return KnnModel(cfg, X, y, index=KDTree(X))
    return KnnModel(cfg, X, y, row_norms=np.sqrt(np.einsum("ij,ij->i", X, X)))


def _select(dist: np.ndarray, k: int) -> np.ndarray:
    # stable sort on distance keeps the lower row index first among ties
    return np.argsort(dist, kind="stable")[:k]


def cosine_distances(model: KnnModel, q: np.ndarray) -> np.ndarray:
    qn = float(np.sqrt(q @ q))
    dots = model.train @ q
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = 1.0 - dots / (model.row_norms * qn)
    # an all-zero vector is at distance 1 from everything
    dist[(model.row_norms == 0) | (qn == 0)] = 1.0
    return dist


def neighbors(model: KnnModel, q: np.ndarray, brute: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Distances and row indices of the k nearest training rows to one query."""
    k = model.config.k
    if model.config.metric == "cosine":
        dist = cosine_distances(model, q)
        idx = _select(dist, k)
        return dist[idx], idx
    if brute or model.index is None:
        d2 = _sq_dist(model.train, q)
        idx = _select(d2, k)
        return np.sqrt(d2[idx]), idx
    d2, idx = model.index.query(q, k)
    return np.sqrt(d2), idx


def _aggregate(dist: np.ndarray, targets: np.ndarray, weights: str) -> float:
    if weights == "uniform":
        return float(np.mean(targets))
    zero = dist == 0
    if zero.any():
        return float(np.mean(targets[zero]))
    w = 1.0 / dist
    return float(np.sum(w * targets) / np.sum(w))


def predict(model: KnnModel, X, brute: bool = False) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(model.n_features, X.shape[1])
    out = np.empty(X.shape[0])
    for i, q in enumerate(X):
        dist, idx = neighbors(model, q, brute=brute)
        out[i] = _aggregate(dist, model.target[idx], model.config.weights)
    return out
