"""Exploratory statistics: correlations, per-zone summaries, polynomial fits and OLS."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from .dataset import FeatureMatrix, RawListing
from .errors import DataError, RankDeficient, Singular, Underdetermined, ZeroVariance

TARGET = "price"


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    values: np.ndarray
    methods: tuple[tuple[str, ...], ...]

    def to_rows(self) -> list[list]:
        rows = [["variable", *self.names]]
        for name, line in zip(self.names, self.values):
            rows.append([name, *(float(v) for v in line)])
        return rows


def _is_binary(v: np.ndarray) -> bool:
    return bool(np.all((v == 0) | (v == 1)))


def correlation_matrix(m: FeatureMatrix, variables: Sequence[str] | None = None) -> CorrelationMatrix:
    """Pairwise correlations of continuous and binary columns (``"price"`` selects the target).

    Binary-continuous pairs are point-biserial coefficients, which is the
    Pearson coefficient of the 0/1 coding; they are tagged separately.
    """
    if variables is None:
        variables = [c.name for c in m.columns if c.block is None] + [TARGET]
    data = []
    for name in variables:
        v = m.target if name == TARGET else m.column(name)
        if np.all(v == v[0]):
            raise ZeroVariance(name)
        data.append(np.asarray(v, dtype=float))
    X = np.column_stack(data)
    centered = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(centered**2, axis=0))
    values = (centered.T @ centered) / np.outer(norms, norms)
    values = np.clip((values + values.T) / 2, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)

    binary = [_is_binary(col) for col in data]
    methods = tuple(
        tuple("point_biserial" if binary[i] != binary[j] else "pearson" for j in range(len(data)))
        for i in range(len(data))
    )
    return CorrelationMatrix(tuple(variables), values, methods)


@dataclass(frozen=True)
class PolyFit:
    order: int
    coefficients: np.ndarray  # ascending powers: c0 + c1 x + ...
    r2: float

    def predict(self, x) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coefficients)


def _solve_normal_equations(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    gram = A.T @ A
    rhs = A.T @ y
    q, r, piv = scipy.linalg.qr(gram, pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[-1] <= diag[0] * 1e-12 * gram.shape[0]:
        raise RankDeficient("normal equations are rank deficient")
    z = scipy.linalg.solve_triangular(r, q.T @ rhs)
    coef = np.empty_like(z)
    coef[piv] = z
    return coef


def poly_fit(x, y, order: int) -> PolyFit:
    """Least-squares polynomial of the given order on the monomial basis."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size <= order + 1:
        raise Underdetermined(f"need more than {order + 1} points for order {order}")
    if np.unique(x).size < order + 1:
        raise RankDeficient(f"need at least {order + 1} distinct x values")

    # fit in a centred/scaled variable, then map back to powers of x
    centre = (x.max() + x.min()) / 2
    half = (x.max() - x.min()) / 2
    t = (x - centre) / half
    coef_t = _solve_normal_equations(np.vander(t, order + 1, increasing=True), y)
    P = np.polynomial.polynomial
    coef = np.zeros(order + 1)
    basis = np.array([1.0])
    step = np.array([-centre / half, 1.0 / half])
    for c in coef_t:
        coef[: basis.size] += c * basis
        basis = P.polymul(basis, step)
    fitted = P.polyval(x, coef)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ZeroVariance("y")
    return PolyFit(order, coef, float(1.0 - np.sum((y - fitted) ** 2) / ss_tot))


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass
class OlsFit:
    names: list[str]
    coef: np.ndarray
    residuals: np.ndarray
    leverage: np.ndarray
    se: dict[str, np.ndarray]
    p: dict[str, np.ndarray]
    n: int
    k: int
    r2: float
    dropped: list[str] = field(default_factory=list)

    def stars(self, estimator: str = "nonrobust") -> list[str]:
        return [_stars(p) for p in self.p[estimator]]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.coef

    def to_dict(self) -> dict:
        d = {
            "names": list(self.names),
            "coef": self.coef.tolist(),
            "n": self.n,
            "k": self.k,
            "r2": self.r2,
            "dropped": list(self.dropped),
        }
        for est, se in self.se.items():
            d[f"se_{est}"] = se.tolist()
        d["p"] = {est: p.tolist() for est, p in self.p.items()}
        d["stars"] = {est: self.stars(est) for est in self.p}
        return d


ESTIMATORS = ("nonrobust", "hc0", "hc1", "hc2", "hc3")


def ols(X, y, names: Sequence[str] | None = None) -> OlsFit:
    """OLS with classical and White-family (HC0-HC3) standard errors.

    ``X`` must already contain the intercept column and have full column
    rank; see :func:`ols_design` for building one from a feature matrix.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise Underdetermined(f"{n} observations for {k} regressors")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * 1e-10:
        raise Singular("design matrix is not of full column rank")
    coef = scipy.linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ coef
    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    bread = r_inv @ r_inv.T  # (X'X)^-1
    leverage = np.sum(q**2, axis=1)

    dof = n - k
    sigma2 = resid @ resid / dof
    e2 = resid**2
    # a leverage of one forces a zero residual; treat 0/0 as 0
    with np.errstate(divide="ignore", invalid="ignore"):
        one_minus_h = 1.0 - leverage
        hc2_w = np.where(one_minus_h > 1e-12, e2 / one_minus_h, 0.0)
        hc3_w = np.where(one_minus_h > 1e-12, e2 / one_minus_h**2, 0.0)

    def sandwich(w):
        meat = (X * w[:, None]).T @ X
        return np.sqrt(np.maximum(np.diag(bread @ meat @ bread), 0.0))

    se = {"nonrobust": np.sqrt(np.diag(bread) * sigma2)}
    se["hc0"] = sandwich(e2)
    se["hc1"] = se["hc0"] * np.sqrt(n / dof)
    se["hc2"] = sandwich(hc2_w)
    se["hc3"] = sandwich(hc3_w)

    pvals = {}
    for est, s in se.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(s > 0, coef / s, np.inf * np.sign(coef))
        pvals[est] = 2.0 * stats.t.sf(np.abs(t), dof)

    ss_tot = np.sum((y - y.mean()) ** 2)
    fit_r2 = float(1.0 - resid @ resid / ss_tot) if ss_tot > 0 else float("nan")
    return OlsFit(
        names=list(names) if names is not None else [f"x{i}" for i in range(k)],
        coef=coef,
        residuals=resid,
        leverage=leverage,
        se=se,
        p=pvals,
        n=n,
        k=k,
        r2=fit_r2,
    )


def ols_design(m: FeatureMatrix) -> tuple[np.ndarray, list[str], list[str]]:
    """Intercept + features, with one category dropped per one-hot block.

    Columns that are constant in ``m`` are dropped as well, since they are
    collinear with the intercept. Returns ``(X, kept_names, dropped_names)``.
    """
    keep, dropped = [], []
    blocks: dict[str, list[int]] = {}
    for j, col in enumerate(m.columns):
        if col.block is not None:
            blocks.setdefault(col.block, []).append(j)
    last_of_block = {idx[-1] for idx in blocks.values()}
    for j, col in enumerate(m.columns):
        v = m.rows[:, j]
        if j in last_of_block or np.all(v == v[0]):
            dropped.append(col.name)
        else:
            keep.append(j)
    X = np.column_stack([np.ones(m.n_rows), m.rows[:, keep]])
    return X, ["const"] + [m.columns[j].name for j in keep], dropped


def ols_from_matrix(m: FeatureMatrix) -> OlsFit:
    X, names, dropped = ols_design(m)
    fit = ols(X, m.target, names)
    fit.dropped = dropped
    return fit


@dataclass(frozen=True)
class DistributionSummary:
    zone: int
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float


def zone_summaries(listings: Sequence[RawListing], field: str = "price") -> list[DistributionSummary]:
    """Box-plot statistics per zone; price is reported in millions of euros."""
    attr = {"price": "price_eur", "constructed_area": "constructed_area_sqm"}.get(field)
    if attr is None:
        raise ValueError(f"unsupported field {field!r}")
    scale = 1e6 if field == "price" else 1.0
    groups: dict[int, list[float]] = {}
    for x in listings:
        if x.zone is None:
            raise DataError(f"{x.id}: zone is absent")
        value = getattr(x, attr)
        if value is not None:
            groups.setdefault(x.zone, []).append(value / scale)
    out = []
    for zone in sorted(groups):
        v = np.asarray(groups[zone])
        q1, med, q3 = np.percentile(v, [25, 50, 75], method="midpoint")
        out.append(
            DistributionSummary(zone, v.size, float(v.min()), float(q1), float(med), float(q3), float(v.max()), float(v.mean()))
        )
    return out
