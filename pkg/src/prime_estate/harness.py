"""Cross-validation protocol, hyperparameter grid, timing and opportunity flagging."""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import eda, extratrees, knn, mlp, svr
from .dataset import (
    FeatureMatrix,
    Normalizer,
    RawListing,
    Vocabulary,
    apply_normalizer,
    encode,
    fit_normalizer,
)
from .errors import ExperimentFailed, ModelError, PrimeEstateError, RankDeficient, TooFewRows
from .metrics import MetricBundle, evaluate

N_FOLDS = 5
STOCHASTIC_REPETITIONS = 30


# --- algorithms ---------------------------------------------------------------


def _fit_ols(train: FeatureMatrix, cfg: dict):
    X, names, _ = eda.ols_design(train)
    keep = [train.names.index(nm) for nm in names[1:]]
    try:
        coef = eda.ols(X, train.target, names).coef
    except RankDeficient:
        coef = np.linalg.lstsq(X, train.target, rcond=None)[0]
    return keep, coef


def _predict_ols(model, rows):
    keep, coef = model
    return coef[0] + rows[:, keep] @ coef[1:]


def _fit_area_line(train: FeatureMatrix, cfg: dict):
    return eda.poly_fit(train.column("constructed_area"), train.target, 1), train.names.index(
        "constructed_area"
    )


def _predict_area_line(model, rows):
    fit, col = model
    return fit.predict(rows[:, col])


@dataclass(frozen=True)
class Algorithm:
    name: str
    config_cls: type | None
    stochastic: bool
    fit: Callable[[FeatureMatrix, Any], Any]
    predict: Callable[[Any, np.ndarray], np.ndarray]


ALGORITHMS: dict[str, Algorithm] = {
    "svr": Algorithm(
        "svr", svr.SvrConfig, False,
        lambda m, cfg: svr.fit(m.rows, m.target, cfg), svr.predict,
    ),
    "knn": Algorithm(
        "knn", knn.KnnConfig, False,
        lambda m, cfg: knn.fit(m.rows, m.target, cfg), knn.predict,
    ),
    "extratrees": Algorithm(
        "extratrees", extratrees.ExtraTreesConfig, True,
        lambda m, cfg: extratrees.fit(m.rows, m.target, cfg), extratrees.predict,
    ),
    "mlp": Algorithm(
        "mlp", mlp.MlpConfig, True,
        lambda m, cfg: mlp.fit(m.rows, m.target, cfg), mlp.predict,
    ),
    # linear baselines, outside the grid
    "ols": Algorithm("ols", None, False, _fit_ols, _predict_ols),
    "linear_area": Algorithm("linear_area", None, False, _fit_area_line, _predict_area_line),
}


def warmup() -> None:
    extratrees.warmup()


# --- specs and grid -------------------------------------------------------------


def _canonical(value):
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    config: tuple[tuple[str, Any], ...] = ()
    normalized: bool = False

    @classmethod
    def make(cls, algorithm: str, normalized: bool = False, **config) -> "ModelSpec":
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        items = tuple(
            sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in config.items())
        )
        return cls(algorithm, items, bool(normalized))

    @property
    def params(self) -> dict:
        return dict(self.config)

    @property
    def spec_id(self) -> str:
        body = ",".join(f"{k}={json.dumps(_canonical(v))}" for k, v in self.config)
        return f"{self.algorithm}({body})|normalized={str(self.normalized).lower()}"

    @property
    def stochastic(self) -> bool:
        return ALGORITHMS[self.algorithm].stochastic

    def build_config(self, seed: int | None = None):
        algo = ALGORITHMS[self.algorithm]
        if algo.config_cls is None:
            return self.params
        params = self.params
        if "hidden_layers" in params:
            params["hidden_layers"] = tuple(params["hidden_layers"])
        if algo.stochastic and seed is not None:
            params["seed"] = seed
        return algo.config_cls(**params)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "config": {k: _canonical(v) for k, v in self.config},
            "normalized": self.normalized,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls.make(d["algorithm"], d.get("normalized", False), **d.get("config", {}))


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = N_FOLDS
    seed: int = 0
    stochastic_repetitions: int = STOCHASTIC_REPETITIONS

    def repetitions(self, spec: ModelSpec) -> int:
        return self.stochastic_repetitions if spec.stochastic else 1


@dataclass(frozen=True)
class GridEntry:
    spec: ModelSpec
    repetitions: int
    n_folds: int = N_FOLDS

    @property
    def n_experiments(self) -> int:
        return self.repetitions * self.n_folds


GRID_VALUES = {
    "svr": {},
    "knn": {"k": (5, 10, 20, 50), "metric": knn.METRICS, "weights": knn.WEIGHTS},
    "extratrees": {"n_estimators": (10, 20, 50), "criterion": extratrees.CRITERIA, "bootstrap": (True, False)},
    "mlp": {"hidden_layers": mlp.ARCHITECTURES},
}


def algorithm_configs(algorithm: str) -> list[dict]:
    values = GRID_VALUES[algorithm]
    keys = list(values)
    return [dict(zip(keys, combo)) for combo in itertools.product(*values.values())]


def enumerate_grid(plan: CvPlan = CvPlan()) -> list[GridEntry]:
    """Every configuration crossed with normalized on/off."""
    entries = []
    for algorithm in GRID_VALUES:
        for config in algorithm_configs(algorithm):
            for normalized in (True, False):
                spec = ModelSpec.make(algorithm, normalized, **config)
                entries.append(GridEntry(spec, plan.repetitions(spec), plan.n_folds))
    return entries


def desk_grid(repetitions: int = 5) -> list[GridEntry]:
    """Small grid for quick runs.

    The best configuration of each algorithm, the full k-NN sweep (cheap), the
    mse counterpart of the best forest, and the two linear baselines.
    """
    specs = [ModelSpec.make("svr")]
    specs += [ModelSpec.make("knn", nz, **cfg) for cfg in algorithm_configs("knn") for nz in (False, True)]
    specs += [
        ModelSpec.make("extratrees", n_estimators=50, criterion=c, bootstrap=True) for c in ("mae", "mse")
    ]
    specs += [
        ModelSpec.make("mlp", hidden_layers=(256, 128)),
        ModelSpec.make("linear_area"),
        ModelSpec.make("ols"),
    ]
    return [GridEntry(s, repetitions if s.stochastic else 1) for s in specs]


def experiment_counts(entries: Iterable[GridEntry]) -> dict[str, int]:
    counts = {name: 0 for name in GRID_VALUES}
    for e in entries:
        counts[e.spec.algorithm] = counts.get(e.spec.algorithm, 0) + e.n_experiments
    counts["sum"] = sum(counts.values())
    return counts


# --- folds and seeds ------------------------------------------------------------


def make_folds(n_rows: int, seed: int, n_folds: int = N_FOLDS) -> np.ndarray:
    """Fold id per row: seeded shuffle, then contiguous near-equal slices.

    The first ``n_rows % n_folds`` folds receive one extra row.
    """
    if n_rows < n_folds:
        raise TooFewRows(f"{n_rows} rows cannot fill {n_folds} folds")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n_rows)
    base, extra = divmod(n_rows, n_folds)
    sizes = [base + (1 if f < extra else 0) for f in range(n_folds)]
    folds = np.empty(n_rows, dtype=int)
    start = 0
    for f, size in enumerate(sizes):
        folds[perm[start : start + size]] = f
        start += size
    return folds


def mix_seed(base_seed: int, spec_id: str, repetition: int, fold: int) -> int:
    """Fixed 64-bit hash of the experiment coordinate."""
    key = f"{base_seed}|{spec_id}|{repetition}|{fold}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


# --- experiments -----------------------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    repetition: int
    fold: int
    metrics: MetricBundle
    train_time_s: float | None = None
    predict_time_s: float | None = None

    def to_dict(self) -> dict:
        return {
            "repetition": self.repetition,
            "fold": self.fold,
            "metrics": self.metrics.to_dict(),
            "train_time_s": self.train_time_s,
            "predict_time_s": self.predict_time_s,
        }

    @classmethod
    def from_dict(cls, d) -> "FoldResult":
        return cls(d["repetition"], d["fold"], MetricBundle.from_dict(d["metrics"]), d.get("train_time_s"), d.get("predict_time_s"))


def _mean_std(values: Sequence[float]) -> dict | None:
    if not values or any(v is None for v in values):
        return None
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


@dataclass
class ExperimentReport:
    spec: ModelSpec
    repetitions: int
    per_fold: list[FoldResult]
    macro: MetricBundle = field(init=False)
    macro_std: MetricBundle | None = field(init=False)
    train_time_s: dict | None = field(init=False)
    predict_time_s: dict | None = field(init=False)

    def __post_init__(self):
        self.per_fold = sorted(self.per_fold, key=lambda r: (r.repetition, r.fold))
        per_rep = {}
        for r in self.per_fold:
            per_rep.setdefault(r.repetition, []).append(r.metrics)
        # mean over folds within a repetition, then mean/std across repetitions
        rep_means = np.array(
            [[np.mean([getattr(b, f) for b in bundles]) for f in MetricBundle.FIELDS] for bundles in per_rep.values()]
        )
        self.macro = MetricBundle(*rep_means.mean(axis=0).tolist())
        self.macro_std = MetricBundle(*rep_means.std(axis=0).tolist()) if self.spec.stochastic else None
        self.train_time_s = _mean_std([r.train_time_s for r in self.per_fold])
        self.predict_time_s = _mean_std([r.predict_time_s for r in self.per_fold])

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "spec_id": self.spec.spec_id,
            "repetitions": self.repetitions,
            "per_fold": [r.to_dict() for r in self.per_fold],
            "macro": self.macro.to_dict(),
            "macro_std": self.macro_std.to_dict() if self.macro_std else None,
            "train_time_s": self.train_time_s,
            "predict_time_s": self.predict_time_s,
        }

    @classmethod
    def from_dict(cls, d) -> "ExperimentReport":
        return cls(ModelSpec.from_dict(d["spec"]), d["repetitions"], [FoldResult.from_dict(r) for r in d["per_fold"]])


def _split(data: FeatureMatrix, folds: np.ndarray, fold: int, normalized: bool):
    train = data.take(np.flatnonzero(folds != fold))
    test = data.take(np.flatnonzero(folds == fold))
    if normalized:
        state = fit_normalizer(train)
        train, test = apply_normalizer(state, train), apply_normalizer(state, test)
    return train, test


def run_fold(
    data: FeatureMatrix,
    spec: ModelSpec,
    folds: np.ndarray,
    fold: int,
    repetition: int,
    base_seed: int,
    record_timing: bool = True,
) -> FoldResult:
    algo = ALGORITHMS[spec.algorithm]
    train, test = _split(data, folds, fold, spec.normalized)
    cfg = spec.build_config(mix_seed(base_seed, spec.spec_id, repetition, fold))
    try:
        t0 = time.perf_counter()
        model = algo.fit(train, cfg)
        t1 = time.perf_counter()
        pred = algo.predict(model, test.rows)
        t2 = time.perf_counter()
    except PrimeEstateError as exc:
        raise ExperimentFailed(spec.spec_id, repetition, fold, exc) from exc
    return FoldResult(
        repetition,
        fold,
        evaluate(test.target, pred),
        (t1 - t0) if record_timing else None,
        (t2 - t1) if record_timing else None,
    )


def run_experiment(
    data: FeatureMatrix,
    spec: ModelSpec,
    plan: CvPlan = CvPlan(),
    base_seed: int = 0,
    repetitions: int | None = None,
    record_timing: bool = True,
) -> ExperimentReport:
    reps = plan.repetitions(spec) if repetitions is None else repetitions
    folds = make_folds(data.n_rows, plan.seed, plan.n_folds)
    results = [
        run_fold(data, spec, folds, f, r, base_seed, record_timing)
        for r in range(reps)
        for f in range(plan.n_folds)
    ]
    return ExperimentReport(spec, reps, results)


_WORKER_DATA: FeatureMatrix | None = None


def _init_worker(data: FeatureMatrix) -> None:
    global _WORKER_DATA
    _WORKER_DATA = data
    warmup()


def _run_job(job) -> tuple[int, list[FoldResult]]:
    entry_index, spec, repetition, plan, base_seed, record_timing = job
    folds = make_folds(_WORKER_DATA.n_rows, plan.seed, plan.n_folds)
    return entry_index, [
        run_fold(_WORKER_DATA, spec, folds, f, repetition, base_seed, record_timing)
        for f in range(plan.n_folds)
    ]


def run_grid(
    data: FeatureMatrix,
    entries: Sequence[GridEntry],
    plan: CvPlan = CvPlan(),
    base_seed: int = 0,
    workers: int = 1,
    record_timing: bool = True,
) -> list[ExperimentReport]:
    """Run every entry; reports come back in entry order whatever the worker count."""
    jobs = [
        (i, e.spec, r, plan, base_seed, record_timing)
        for i, e in enumerate(entries)
        for r in range(e.repetitions)
    ]
    collected: dict[int, list[FoldResult]] = {i: [] for i in range(len(entries))}
    if workers <= 1:
        _init_worker(data)
        outputs = map(_run_job, jobs)
        for i, results in outputs:
            collected[i].extend(results)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(data,)) as pool:
            for i, results in pool.map(_run_job, jobs):
                collected[i].extend(results)
    return [ExperimentReport(e.spec, e.repetitions, collected[i]) for i, e in enumerate(entries)]


def reports_to_json(reports: Sequence[ExperimentReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


def reports_from_json(text: str) -> list[ExperimentReport]:
    return [ExperimentReport.from_dict(d) for d in json.loads(text)]


def flatten_reports(reports: Sequence[ExperimentReport]) -> list[dict]:
    """One row per (spec, repetition, fold)."""
    rows = []
    for rep in reports:
        for r in rep.per_fold:
            rows.append(
                {
                    "spec_id": rep.spec.spec_id,
                    "algorithm": rep.spec.algorithm,
                    "normalized": rep.spec.normalized,
                    "repetition": r.repetition,
                    "fold": r.fold,
                    **r.metrics.to_dict(),
                    "train_time_s": r.train_time_s,
                    "predict_time_s": r.predict_time_s,
                }
            )
    return rows


# --- summaries ---------------------------------------------------------------------


def summary_table(reports: Sequence[ExperimentReport], top: int | None = None) -> list[dict]:
    """Rows sorted by ascending macro MSE; std columns only for stochastic models."""
    rows = []
    for rep in sorted(reports, key=lambda r: r.macro.mse):
        row = {"spec_id": rep.spec.spec_id, "algorithm": rep.spec.algorithm}
        for f in MetricBundle.FIELDS:
            row[f] = getattr(rep.macro, f)
            row[f"{f}_std"] = getattr(rep.macro_std, f) if rep.macro_std else None
        rows.append(row)
    return rows[:top] if top else rows


def timing_table(reports: Sequence[ExperimentReport]) -> list[dict]:
    """Mean/std train and predict times grouped by (algorithm, parameter, value)."""
    groups: dict[tuple, dict[str, list[float]]] = {}
    for rep in reports:
        params = rep.spec.params or {"-": "-"}
        for key, value in params.items():
            g = groups.setdefault(
                (rep.spec.algorithm, key, json.dumps(_canonical(value))), {"train": [], "predict": []}
            )
            for r in rep.per_fold:
                if r.train_time_s is not None:
                    g["train"].append(r.train_time_s)
                    g["predict"].append(r.predict_time_s)
    rows = []
    for (algorithm, key, value), g in groups.items():
        if not g["train"]:
            continue
        t, p = np.asarray(g["train"]), np.asarray(g["predict"])
        rows.append(
            {
                "algorithm": algorithm,
                "parameter": key,
                "value": json.loads(value),
                "train_mean_s": float(t.mean()),
                "train_std_s": float(t.std()),
                "predict_mean_s": float(p.mean()),
                "predict_std_s": float(p.std()),
                "n": int(t.size),
            }
        )
    return rows


# --- trained models and opportunity flags ------------------------------------------


@dataclass
class TrainedModel:
    """A fitted model plus everything needed to encode fresh listings for it."""

    spec: ModelSpec
    model: Any
    vocabulary: Vocabulary
    normalizer: Normalizer | None = None

    def predict_matrix(self, m: FeatureMatrix) -> np.ndarray:
        if self.normalizer is not None:
            m = apply_normalizer(self.normalizer, m)
        return np.asarray(ALGORITHMS[self.spec.algorithm].predict(self.model, m.rows))

    def predict_listings(self, listings: Sequence[RawListing]) -> np.ndarray:
        m = encode(listings, self.vocabulary, strict=False, require_target=False)
        return self.predict_matrix(m)

    def to_dict(self) -> dict:
        if self.spec.algorithm != "extratrees":
            raise ModelError("only extra-trees models can be serialized")
        return {
            "spec": self.spec.to_dict(),
            "vocabulary": self.vocabulary.to_dict(),
            "normalizer": self.normalizer.to_dict() if self.normalizer else None,
            "forest": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "TrainedModel":
        spec = ModelSpec.from_dict(d["spec"])
        if spec.algorithm != "extratrees":
            raise ModelError("only extra-trees models can be deserialized")
        return cls(
            spec,
            extratrees.Forest.from_dict(d["forest"]),
            Vocabulary.from_dict(d["vocabulary"]),
            Normalizer.from_dict(d["normalizer"]) if d.get("normalizer") else None,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_model(listings: Sequence[RawListing], spec: ModelSpec, seed: int = 0) -> TrainedModel:
    vocab = Vocabulary.from_listings(listings)
    m = encode(listings, vocab)
    normalizer = None
    if spec.normalized:
        normalizer = fit_normalizer(m)
        m = apply_normalizer(normalizer, m)
    model = ALGORITHMS[spec.algorithm].fit(m, spec.build_config(seed))
    return TrainedModel(spec, model, vocab, normalizer)


@dataclass(frozen=True)
class OpportunityFlag:
    listing_id: str
    listed_price: float
    predicted_price: float
    discount: float
    flagged: bool


DEFAULT_TAU = 0.10


def flag_opportunities(model: TrainedModel, listings: Sequence[RawListing], tau: float = DEFAULT_TAU) -> list[OpportunityFlag]:
    """Listings whose price sits at least ``tau`` below the model's estimate are flagged.

    discount = (predicted - listed) / predicted; output is sorted by
    descending discount.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    priced = [x for x in listings if x.price_eur is not None]
    predicted = model.predict_listings(priced)
    flags = [
        flag_from_prediction(x.id, x.price_eur / 1e6, float(pred), tau)
        for x, pred in zip(priced, predicted)
    ]
    flags.sort(key=lambda f: (-f.discount, f.listing_id))
    return flags


def flag_from_prediction(listing_id: str, listed: float, predicted: float, tau: float) -> OpportunityFlag:
    discount = (predicted - listed) / predicted if predicted > 0 else -np.inf
    return OpportunityFlag(listing_id, listed, predicted, float(discount), bool(discount >= tau))
