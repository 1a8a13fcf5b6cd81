"""Synthetic datasets, Dirichlet non-IID partitioning and client-to-server assignment."""

import csv
from dataclasses import dataclass

import numpy as np

from ._errors import InvalidArgumentError
from ._rng import philox

__all__ = [
    "LabeledDataset",
    "ClusterAssignment",
    "PartitionPlan",
    "generate_synthetic",
    "dirichlet_partition",
    "largest_remainder",
    "assign_clusters",
    "label_tv_distance",
    "export_csv",
]

_MEAN_SEED = 0x5EED


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],) or X.shape[0] < 1:
            raise InvalidArgumentError("features must be (N, F) with one label per row, N >= 1")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("features must be finite")
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise InvalidArgumentError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class ClusterAssignment:
    n_clients: int
    n_servers: int
    server_of: tuple

    def __post_init__(self):
        server_of = tuple(int(s) for s in self.server_of)
        if len(server_of) != self.n_clients:
            raise InvalidArgumentError("assignment must map every client")
        if any(s < 0 or s >= self.n_servers for s in server_of):
            raise InvalidArgumentError("server index out of range")
        if set(server_of) != set(range(self.n_servers)):
            raise InvalidArgumentError("every server needs at least one client")
        object.__setattr__(self, "server_of", server_of)

    def members(self, d):
        return [i for i, s in enumerate(self.server_of) if s == d]

    def clusters(self):
        return [self.members(d) for d in range(self.n_servers)]


@dataclass(frozen=True)
class PartitionPlan:
    """Per-client lists of sample indices, sorted ascending."""

    client_indices: tuple

    @property
    def n_clients(self):
        return len(self.client_indices)

    def sizes(self):
        return np.array([len(ix) for ix in self.client_indices], dtype=np.int64)

    def validate(self, n_samples):
        flat = np.concatenate([np.asarray(ix, dtype=np.int64) for ix in self.client_indices])
        if any(len(ix) == 0 for ix in self.client_indices):
            raise InvalidArgumentError("every client needs at least one sample")
        if flat.size != n_samples or not np.array_equal(np.sort(flat), np.arange(n_samples)):
            raise InvalidArgumentError("partition must cover every sample exactly once")
        return self


def _class_means(num_classes, dim, separation):
    if num_classes <= dim:
        return separation * np.eye(num_classes, dim)
    directions = np.random.Generator(np.random.Philox(_MEAN_SEED)).normal(size=(num_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return separation * directions


def generate_synthetic(num_classes, dim, per_class, separation, seed):
    """Gaussian blobs with unit covariance, one per class.

    Class ``l`` is centred at ``separation * e_l`` when ``num_classes <= dim``;
    otherwise at ``separation`` times a fixed set of random unit directions
    (independent of ``seed``, so train and test draws share their means).
    Samples are ordered by class.
    """
    if num_classes < 2 or dim < 1 or per_class < 1 or not separation > 0:
        raise InvalidArgumentError("need num_classes >= 2, dim >= 1, per_class >= 1, separation > 0")
    rng = philox(seed)
    means = _class_means(num_classes, dim, separation)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, num_classes)


def largest_remainder(proportions, total):
    """Integer counts summing to ``total``, closest to ``proportions * total``.

    Leftover units go to the largest fractional parts; ties favour lower index.
    """
    raw = np.asarray(proportions, dtype=np.float64) * total
    counts = np.floor(raw).astype(np.int64)
    short = int(total - counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(labels, num_clients, concentration, seed):
    """Split sample indices across clients with per-class Dirichlet proportions.

    For each class a proportion vector is drawn from ``Dir(concentration)``
    (normalised Gamma variates from a Philox stream), turned into counts with
    the largest-remainder rule and filled from a shuffled copy of that class's
    indices. Clients left empty receive one sample from the currently
    most-loaded client.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if num_clients < 1 or not concentration > 0:
        raise InvalidArgumentError("need num_clients >= 1 and concentration > 0")
    if labels.size < num_clients:
        raise InvalidArgumentError(f"{labels.size} samples cannot fill {num_clients} clients")
    rng = philox(seed)
    buckets = [[] for _ in range(num_clients)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        g = rng.gamma(concentration, size=num_clients)
        total = g.sum()
        p = g / total if total > 0 else np.full(num_clients, 1.0 / num_clients)
        counts = largest_remainder(p, idx.size)
        for j, chunk in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
            buckets[j].extend(chunk.tolist())

    for j in range(num_clients):
        if not buckets[j]:
            donor = max(range(num_clients), key=lambda c: (len(buckets[c]), -c))
            buckets[j].append(buckets[donor].pop())

    return PartitionPlan(tuple(tuple(sorted(b)) for b in buckets))


def assign_clusters(client_count, server_count, policy="contiguous"):
    """Map clients to edge servers.

    ``contiguous`` gives server ``d`` a block of consecutive clients
    (client ``i`` -> ``floor(i * D / C)``); ``round_robin`` maps ``i -> i mod D``.
    """
    if client_count < server_count or server_count < 1:
        raise InvalidArgumentError("need client_count >= server_count >= 1")
    i = np.arange(client_count)
    if policy == "contiguous":
        server_of = (i * server_count) // client_count
    elif policy == "round_robin":
        server_of = i % server_count
    else:
        raise InvalidArgumentError(f"unknown cluster policy {policy!r}")
    return ClusterAssignment(client_count, server_count, tuple(server_of.tolist()))


def label_tv_distance(labels, plan, num_classes):
    """Mean over clients of the total-variation distance to the global label mix."""
    labels = np.asarray(labels)
    glob = np.bincount(labels, minlength=num_classes) / labels.size
    dists = []
    for ix in plan.client_indices:
        local = np.bincount(labels[list(ix)], minlength=num_classes) / len(ix)
        dists.append(0.5 * np.abs(local - glob).sum())
    return float(np.mean(dists))


def export_csv(path, data, plan=None):
    """One row per sample: ``index, client, class, f0, f1, ...`` (client -1 if unassigned)."""
    owner = np.full(data.n_samples, -1, dtype=np.int64)
    if plan is not None:
        for j, ix in enumerate(plan.client_indices):
            owner[list(ix)] = j
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "client", "class"] + [f"f{k}" for k in range(data.dim)])
        for n in range(data.n_samples):
            w.writerow([n, owner[n], data.labels[n]] + [repr(float(v)) for v in data.features[n]])
