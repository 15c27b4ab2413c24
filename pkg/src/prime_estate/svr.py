"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved over the 2n variables (alpha, alpha*) with sequential
pairwise updates. Each step picks the maximal KKT-violating pair (first-order
working set selection) and updates it analytically, as in LIBSVM's solver.
Kernel columns are recomputed on demand; nothing is cached.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, NoConvergence

TAU = 1e-12


@dataclass(frozen=True)
class SvrConfig:
    c_penalty: float = 1.0
    gamma: float | str = "auto"  # "auto" -> 1 / n_features
    epsilon: float = 0.1
    tolerance: float = 1e-3
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if not self.c_penalty > 0:
            raise ValueError("c_penalty must be > 0")
        if self.gamma != "auto" and not float(self.gamma) > 0:
            raise ValueError("gamma must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    def resolved_gamma(self, n_features: int) -> float:
        return 1.0 / n_features if self.gamma == "auto" else float(self.gamma)


# The only configuration evaluated on the reference data.
DEFAULT_SVR = SvrConfig()


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha - alpha* for each support vector
    bias: float
    gamma: float
    n_features: int
    iterations: int
    kkt_gap: float
    converged: bool
    beta: np.ndarray  # alpha - alpha* for every training row


def rbf_column(X: np.ndarray, x: np.ndarray, gamma: float) -> np.ndarray:
    diff = X - x
    return np.exp(-gamma * np.einsum("ij,ij->i", diff, diff))


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dual_objective(beta: np.ndarray, K: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    """-1/2 b'Kb - eps*sum|b| + y'b (to be maximised)."""
    return float(-0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + y @ beta)


def fit(X, y, cfg: SvrConfig = SvrConfig()) -> SvrModel:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n == 0:
        raise EmptyTrainingSet("SVR needs at least one training row")
    gamma = cfg.resolved_gamma(d)
    C = cfg.c_penalty

    z = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    grad = np.concatenate([cfg.epsilon - y, cfg.epsilon + y])
    qd = 1.0  # K(x, x) for the RBF kernel

    converged = False
    gap = np.inf
    it = 0
    while it < cfg.max_iterations:
        up = ((z > 0) & (a < C)) | ((z < 0) & (a > 0))
        low = ((z > 0) & (a > 0)) | ((z < 0) & (a < C))
        score = -z * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap < cfg.tolerance:
            converged = True
            break
        it += 1

        ki = rbf_column(X, X[i % n], gamma)
        kj = ki if i % n == j % n else rbf_column(X, X[j % n], gamma)
        kij = ki[j % n]
        ai, aj = a[i], a[j]
        if z[i] != z[j]:
            quad = max(2 * qd - 2 * kij, TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(2 * qd - 2 * kij, TAU)
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        di, dj = ai - a[i], aj - a[j]
        a[i], a[j] = ai, aj
        # Q[t, s] = z_t z_s K(t mod n, s mod n)
        grad += z * (z[i] * di * np.concatenate([ki, ki]) + z[j] * dj * np.concatenate([kj, kj]))

    if not converged:
        warnings.warn(
            NoConvergence(f"SMO stopped after {it} iterations with KKT gap {gap:.3g}"), stacklevel=2
        )

    bias = -_rho(a, z, grad, C)
    beta = a[:n] - a[n:]
    sv = np.flatnonzero(beta != 0)
    return SvrModel(
        support_vectors=X[sv].copy(),
        dual_coef=beta[sv].copy(),
        bias=bias,
        gamma=gamma,
        n_features=d,
        iterations=it,
        kkt_gap=float(gap),
        converged=converged,
        beta=beta,
    )


def _rho(a, z, grad, C) -> float:
    yg = z * grad
    free = (a > 0) & (a < C)
    if free.any():
        return float(yg[free].mean())
    at_upper = a >= C
    at_lower = a <= 0
    ub_mask = (at_upper & (z < 0)) | (at_lower & (z > 0))
    lb_mask = (at_upper & (z > 0)) | (at_lower & (z < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def predict(model: SvrModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(model.n_features, X.shape[1])
    if model.dual_coef.size == 0:
        return np.full(X.shape[0], model.bias)
    K = rbf_kernel(X, model.support_vectors, model.gamma)
    return K @ model.dual_coef + model.bias
