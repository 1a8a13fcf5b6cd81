"""Multinomial logistic regression: loss, gradients, SGD and constant estimates.

A model is a flat vector of length ``num_classes * (dim + 1)``; reshaped
row-major it is a ``(num_classes, dim + 1)`` matrix whose last column holds
the biases.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._errors import InvalidArgumentError

__all__ = [
    "AssumptionConstants",
    "BatchSampler",
    "n_params",
    "logits",
    "predict_proba",
    "loss",
    "gradient",
    "loss_and_gradient",
    "batched_gradients",
    "sgd_step",
    "accuracy",
    "global_loss",
    "client_gradients",
    "estimate_constants",
]


@dataclass(frozen=True)
class AssumptionConstants:
    """Empirical smoothness ``L``, gradient noise ``sigma`` and non-IIDness ``kappa``.

    These are maxima over probe points, so they lower-bound the true suprema.
    """

    L: float
    sigma: float
    kappa: float


def n_params(dim, num_classes):
    return num_classes * (dim + 1)


def _unflatten(w, dim, num_classes):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n_params(dim, num_classes),):
        raise InvalidArgumentError(
            f"model has {w.size} parameters, expected {n_params(dim, num_classes)}"
        )
    return w.reshape(num_classes, dim + 1)


def logits(w, X, num_classes):
    X = np.asarray(X, dtype=np.float64)
    Wm = _unflatten(w, X.shape[1], num_classes)
    return X @ Wm[:, :-1].T + Wm[:, -1]


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(w, X, num_classes):
    return _softmax(logits(w, X, num_classes))


def _check_indices(data, indices):
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidArgumentError("need a non-empty index subset")
    if idx.min() < 0 or idx.max() >= data.n_samples:
        raise InvalidArgumentError("sample index out of range")
    return idx


def loss(w, data, indices):
    """Mean cross-entropy over ``data[indices]``."""
    idx = _check_indices(data, indices)
    z = logits(w, data.features[idx], data.num_classes)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[np.arange(idx.size), data.labels[idx]]))


def gradient(w, data, batch):
    """Gradient of the mean cross-entropy over the batch, flattened like ``w``."""
    idx = _check_indices(data, batch)
    X = data.features[idx]
    resid = predict_proba(w, X, data.num_classes)
    resid[np.arange(idx.size), data.labels[idx]] -= 1.0
    Xb = np.hstack([X, np.ones((idx.size, 1))])
    return (resid.T @ Xb / idx.size).ravel()


def loss_and_gradient(w, data, indices=None):
    """Mean cross-entropy, its gradient and the accuracy from a single pass."""
    if indices is None:
        X, y = data.features, data.labels
    else:
        idx = _check_indices(data, indices)
        X, y = data.features[idx], data.labels[idx]
    n = y.size
    z = logits(w, X, data.num_classes)
    pred = np.argmax(z, axis=1)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    tot = e.sum(axis=1)
    rows = np.arange(n)
    value = float(np.mean(np.log(tot) - z[rows, y]))
    resid = e / tot[:, None]
    resid[rows, y] -= 1.0
    grad = np.hstack([resid.T @ X, resid.sum(axis=0)[:, None]]) / n
    return value, grad.ravel(), float(np.mean(pred == y))


def batched_gradients(Ws, X, y, num_classes):
    """Per-client mini-batch gradients in one pass.

    Parameters
    ----------
    Ws : ndarray, shape (C, n_params)
        One model per row.
    X : ndarray, shape (C, b, dim)
    y : ndarray, shape (C, b)

    Returns
    -------
    ndarray, shape (C, n_params)
    """
    C, b, dim = X.shape
    Wm = Ws.reshape(C, num_classes, dim + 1)
    z = np.einsum("cbf,ckf->cbk", X, Wm[:, :, :-1]) + Wm[:, None, :, -1]
    resid = _softmax(z)
    rows = np.arange(C)[:, None]
    resid[rows, np.arange(b)[None, :], y] -= 1.0
    gw = np.einsum("cbk,cbf->ckf", resid, X) / b
    gb = resid.sum(axis=1)[:, :, None] / b
    return np.concatenate([gw, gb], axis=2).reshape(C, -1)


def sgd_step(w, g, eta):
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if w.shape != g.shape:
        raise InvalidArgumentError(f"shape mismatch {w.shape} vs {g.shape}")
    if not eta > 0:
        raise InvalidArgumentError("learning rate must be positive")
    return w - eta * g


def accuracy(w, data, indices=None):
    idx = np.arange(data.n_samples) if indices is None else _check_indices(data, indices)
    pred = np.argmax(logits(w, data.features[idx], data.num_classes), axis=1)
    return float(np.mean(pred == data.labels[idx]))


def global_loss(w, data, plan=None):
    """Data-weighted loss ``sum_i m_i F_i(w)``, i.e. the mean over all assigned samples."""
    if plan is None:
        return loss(w, data, np.arange(data.n_samples))
    return loss(w, data, np.concatenate([np.asarray(ix) for ix in plan.client_indices]))


def client_gradients(w, data, plan):
    """Full-shard gradients ``grad F_i(w)`` stacked by client, plus the weights ``m_i``."""
    grads = np.stack([gradient(w, data, ix) for ix in plan.client_indices])
    sizes = plan.sizes().astype(np.float64)
    return grads, sizes / sizes.sum()


class BatchSampler:
    """Epoch-style mini-batches without replacement for one client.

    Each epoch draws a fresh permutation of the shard; batches are consecutive
    slices, and a tail shorter than ``batch_size`` is dropped. Indices within a
    batch are returned sorted.
    """

    def __init__(self, indices, batch_size, rng):
        self.indices = np.asarray(indices, dtype=np.int64)
        if not 1 <= batch_size <= self.indices.size:
            raise InvalidArgumentError(
                f"batch size {batch_size} must be in [1, shard size {self.indices.size}]"
            )
        self.batch_size = int(batch_size)
        self.rng = rng
        self._perm = None
        self._pos = 0

    def next(self):
        if self._perm is None or self._pos + self.batch_size > self._perm.size:
            self._perm = self.indices[self.rng.permutation(self.indices.size)]
            self._pos = 0
        out = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return np.sort(out)


def estimate_constants(data, plan, probe_points, seed, batch_size=10, radius=1.0, n_batches=20):
    """Empirical ``L``, ``sigma`` and ``kappa`` from random probe models.

    Probes are drawn uniformly from the ball of ``radius`` around the origin.

    - ``L``: the largest ``||grad F_i(w1) - grad F_i(w2)|| / ||w1 - w2||`` over
      probe pairs and clients.
    - ``sigma``: the largest root-mean-square deviation of ``n_batches``
      mini-batch gradients from the full-shard gradient (batches drawn without
      replacement; a batch covering the shard gives exactly zero).
    - ``kappa``: the largest ``||grad F_i(w) - grad F(w)||`` over probes and clients.
    """
    if probe_points < 2:
        raise InvalidArgumentError("need at least two probe points")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    M = n_params(data.dim, data.num_classes)

    probes = []
    while len(probes) < probe_points:
        v = rng.standard_normal(M)
        v *= radius * rng.random() ** (1.0 / M) / np.linalg.norm(v)
        if any(np.array_equal(v, p) for p in probes):
            continue
        probes.append(v)

    per_probe = [client_gradients(w, data, plan) for w in probes]

    L_hat = 0.0
    for (a, (ga, _)), (b, (gb, _)) in combinations(zip(probes, per_probe), 2):
        dist = np.linalg.norm(a - b)
        if dist == 0.0:
            continue
        L_hat = max(L_hat, float(np.max(np.linalg.norm(ga - gb, axis=1)) / dist))

    kappa_hat = 0.0
    for grads, m in per_probe:
        glob = m @ grads
        kappa_hat = max(kappa_hat, float(np.max(np.linalg.norm(grads - glob, axis=1))))

    sigma_hat = 0.0
    for w, (grads, _) in zip(probes, per_probe):
        for i, ix in enumerate(plan.client_indices):
            ix = np.asarray(ix)
            b = min(batch_size, ix.size)
            dev = []
            for _ in range(n_batches):
                pick = ix if b == ix.size else np.sort(ix[rng.choice(ix.size, b, replace=False)])
                dev.append(np.sum((gradient(w, data, pick) - grads[i]) ** 2))
            sigma_hat = max(sigma_hat, float(np.sqrt(np.mean(dev))))

    return AssumptionConstants(L_hat, sigma_hat, kappa_hat)
