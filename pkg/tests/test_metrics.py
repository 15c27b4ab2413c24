import math

import numpy as np
import pytest

from prime_estate import metrics
from prime_estate.errors import DataError, ZeroVariance
from prime_estate.metrics import MetricBundle, evaluate

from oracles import metrics as oracle_metrics


def random_sets(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 300))
        y = rng.lognormal(0.5, 0.5, n)
        yhat = y + rng.normal(0, rng.uniform(0.01, 0.5), n)
        yield y, yhat


def test_matches_oracle_on_random_sets():
    for y, yhat in random_sets(200, seed=1):
        got = evaluate(y, yhat).to_dict()
        want = oracle_metrics(y, yhat)
        for name in MetricBundle.FIELDS:
            assert math.isclose(got[name], want[name], rel_tol=1e-12, abs_tol=1e-15), name


def test_hand_computed_example():
    y = [1.0, 2.0, 3.0, 4.0]
    yhat = [1.5, 2.0, 2.0, 5.0]
    b = evaluate(y, yhat)
    assert b.mae == pytest.approx(0.625)
    # |err| = .5, 0, 1, 1 -> median of the middle two (.5, 1)
    assert b.medae == pytest.approx(0.75)
    assert b.mse == pytest.approx((0.25 + 1 + 1) / 4)
    assert b.r2 == pytest.approx(1 - 2.25 / 5)
    res = np.array([-0.5, 0, 1, -1])
    assert b.e_var == pytest.approx(1 - res.var() / 1.25)


def test_anchor_values_exact():
    y = np.random.default_rng(3).normal(size=57)
    assert metrics.r2(y, y) == 1.0
    assert metrics.r2(y, np.full_like(y, y.mean())) == 0.0
    assert metrics.explained_variance(y, y + 3.0) == 1.0


def test_explained_variance_ignores_bias_r2_does_not():
    y = np.arange(10.0)
    assert metrics.explained_variance(y, y + 1) == 1.0
    assert metrics.r2(y, y + 1) < 1.0


def test_zero_variance_target():
    with pytest.raises(ZeroVariance):
        metrics.r2([2.0, 2.0], [1.0, 3.0])
    with pytest.raises(ZeroVariance):
        metrics.explained_variance([2.0, 2.0], [1.0, 3.0])


@pytest.mark.parametrize("y, yhat", [([1.0, 2.0], [1.0]), ([], []), ([1.0, np.nan], [1.0, 2.0])])
def test_invalid_inputs(y, yhat):
    with pytest.raises(DataError):
        metrics.mean_absolute_error(y, yhat)


def test_bundle_round_trip():
    b = evaluate([1.0, 2.0, 4.0], [1.0, 2.5, 3.0])
    assert MetricBundle.from_dict(b.to_dict()) == b
