"""Central finite differences for the network loss."""

import numpy as np

from prime_estate import mlp

H = 1e-6


def random_net(rng):
    d = int(rng.integers(1, 6))
    layers = tuple(int(w) for w in rng.integers(1, 8, size=rng.integers(1, 4)))
    model = mlp.init_model(d, layers, rng)
    n = int(rng.integers(1, 10))
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    return model, X, y, float(rng.choice([0.0, 1e-4, 0.1]))


def kink_margin(model, X):
    """Smallest |pre-activation| over all hidden units and rows."""
    h = X
    margin = np.inf
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ W + b
        margin = min(margin, float(np.abs(z).min()))
        h = np.maximum(z, 0)
    return margin


def numeric_gradient(model, X, y, alpha):
    grads = []
    for p in model.weights + model.biases:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + H
            up = mlp.loss(model, X, y, alpha)
            p[idx] = old - H
            down = mlp.loss(model, X, y, alpha)
            p[idx] = old
            g[idx] = (up - down) / (2 * H)
        grads.append(g)
    return grads


def relative_error(model, X, y, alpha):
    _, gw, gb = mlp.loss_gradient(model, X, y, alpha)
    analytic = np.concatenate([g.ravel() for g in gw + gb])
    numeric = np.concatenate([g.ravel() for g in numeric_gradient(model, X, y, alpha)])
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)


def checked_nets(count, seed):
    """Yield (relative error) for ``count`` nets whose inputs sit away from ReLU kinks."""
    rng = np.random.default_rng(seed)
    done = 0
    while done < count:
        model, X, y, alpha = random_net(rng)
        if kink_margin(model, X) < 1e-3:
            continue
        done += 1
        yield relative_error(model, X, y, alpha)
