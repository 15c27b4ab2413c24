import numpy as np
import pytest

from prime_estate import mlp
from prime_estate.errors import DimensionMismatch, NonFiniteLoss
from prime_estate.mlp import MlpConfig

from gradcheck import checked_nets


def test_gradients_match_finite_differences():
    errors = list(checked_nets(25, seed=0))
    assert max(errors) < 1e-5


def test_loss_value_by_hand():
    model = mlp.MlpModel([np.array([[2.0]]), np.array([[1.0]])], [np.array([0.0]), np.array([0.5])])
    X = np.array([[1.0], [-1.0]])
    y = np.array([3.0, 0.0])
    # outputs 2.5 and 0.5; squared errors .25 and .25; ||W||^2 = 5
    assert mlp.loss(model, X, y, 0.1) == pytest.approx(0.25 / 2 + 0.1 * 5 / 4)


def test_parameter_count():
    model = mlp.init_model(107, (256, 128), np.random.default_rng(0))
    assert model.n_parameters == 107 * 256 + 256 + 256 * 128 + 128 + 128 + 1


def test_glorot_bounds():
    model = mlp.init_model(10, (30,), np.random.default_rng(0))
    assert np.abs(model.weights[0]).max() <= np.sqrt(6 / 40)
    assert np.abs(model.weights[1]).max() <= np.sqrt(6 / 31)


def test_learns_linear_map():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(400, 1))
    y = 2 * X[:, 0]
    model = mlp.fit(X, y, MlpConfig(hidden_layers=(16,), batch_size=50, max_epochs=1000, tol=1e-7, seed=2))
    Q = np.linspace(-0.9, 0.9, 20)[:, None]
    assert np.mean(np.abs(mlp.predict(model, Q) - 2 * Q[:, 0])) < 0.05
    assert model.loss_history[-1] < 0.01 * model.loss_history[0]


def test_early_stopping_and_determinism():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(120, 4)), rng.normal(size=120)
    cfg = MlpConfig(hidden_layers=(8,), max_epochs=500, tol=1e-3, seed=5)
    a, b = mlp.fit(X, y, cfg), mlp.fit(X, y, cfg)
    assert a.loss_history == b.loss_history
    assert all(np.array_equal(w1, w2) for w1, w2 in zip(a.weights, b.weights))
    assert len(a.loss_history) < 500
    # stopped because the last `patience` epochs brought no gain beyond tol
    h = a.loss_history
    for i in range(len(h) - cfg.patience, len(h)):
        assert h[i] > min(h[:i]) - cfg.tol


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss():
    X = np.array([[1e200], [1e200]])
    with pytest.raises(NonFiniteLoss):
        mlp.fit(X, np.array([1e200, -1e200]), MlpConfig(hidden_layers=(4,), max_epochs=3))


def test_dimension_mismatch():
    model = mlp.init_model(3, (4,), np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        mlp.predict(model, np.zeros((1, 2)))
