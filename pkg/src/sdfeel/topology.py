"""Edge-server graphs, gossip mixing matrices and the per-iteration transitions.

Conventions: a model matrix ``W`` has one *column* per client (shape
``(M, C)``), so every linear aggregation acts by right-multiplication,
``W @ T``. Server-level mixing follows the same convention: with cluster models
stacked as columns of ``W_hat`` (shape ``(M, D)``), one sharing round is
``W_hat @ P``, i.e. server ``d`` receives ``sum_j P[j, d] * w_hat_j``.
"""

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ._errors import InvalidArgumentError, InvalidTopologyError
from .spectral import matrix_power, sym_eigen

__all__ = [
    "ServerGraph",
    "ClusterSizes",
    "MixingMatrix",
    "SelectionMatrices",
    "ring",
    "complete",
    "ring_with_chords",
    "erdos_renyi",
    "laplacian",
    "build_mixing_matrix",
    "spectral_gap",
    "build_selection_matrices",
    "transition_matrix",
    "exact_averaging_matrix",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServerGraph:
    """Undirected, connected graph over ``n_servers`` edge servers."""

    n_servers: int
    edges: tuple

    def __post_init__(self):
        if self.n_servers < 2:
            raise InvalidTopologyError(f"need at least 2 servers, got {self.n_servers}")
        seen = set()
        for e in self.edges:
            i, j = (int(x) for x in e)
            if i == j:
                raise InvalidTopologyError(f"self-loop at server {i}")
            if not (0 <= i < self.n_servers and 0 <= j < self.n_servers):
                raise InvalidTopologyError(f"edge ({i}, {j}) out of range")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidTopologyError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))
        if not self.is_connected():
            raise InvalidTopologyError("server graph is disconnected")

    def neighbors(self, d):
        out = [j for i, j in self.edges if i == d] + [i for i, j in self.edges if j == d]
        return sorted(out)

    def adjacency(self):
        A = np.zeros((self.n_servers, self.n_servers))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def is_connected(self):
        adj = {d: [] for d in range(self.n_servers)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        queue = deque([0])
        while queue:
            for nxt in adj[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == self.n_servers

    def with_edge(self, i, j):
        return ServerGraph(self.n_servers, self.edges + ((i, j),))


@dataclass(frozen=True)
class ClusterSizes:
    """Per-server data mass ``|S~_d|`` (sample counts)."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.float64)
        if counts.ndim != 1 or counts.size == 0 or np.any(counts <= 0):
            raise InvalidArgumentError("cluster sizes must be a non-empty vector of positive counts")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def equal(cls, n_servers, size=1.0):
        return cls(np.full(n_servers, float(size)))

    @property
    def total(self):
        return float(self.counts.sum())

    @property
    def fractions(self):
        return self.counts / self.total

    @property
    def is_equal(self):
        return bool(np.all(self.counts == self.counts[0]))


@dataclass(frozen=True)
class MixingMatrix:
    """Gossip matrix ``P`` with its spectral quantity ``zeta = |lambda_2(P)|``.

    ``symmetrizer`` holds ``diag(Omega)^{1/2}``; ``diag(s) P diag(1/s)`` is
    symmetric, which is how the spectrum is computed when cluster sizes differ.
    """

    matrix: np.ndarray
    zeta: float
    eigenvalues: np.ndarray
    symmetrizer: np.ndarray = field(repr=False)

    @property
    def n_servers(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SelectionMatrices:
    """Client-to-server aggregation ``V`` (C x D) and broadcast ``B`` (D x C)."""

    V: np.ndarray
    B: np.ndarray
    weights: np.ndarray  # m_i = |S_i| / |S|

    @property
    def H1(self):
        return self.V @ self.B

    def H2(self, mixing, alpha):
        P = mixing.matrix if isinstance(mixing, MixingMatrix) else np.asarray(mixing)
        return self.V @ matrix_power(P, alpha) @ self.B

    @property
    def M(self):
        return np.outer(self.weights, np.ones(self.weights.size))


def ring(n):
    return ServerGraph(n, tuple((d, (d + 1) % n) for d in range(n)) if n > 2 else ((0, 1),))


def complete(n):
    return ServerGraph(n, tuple(combinations(range(n), 2)))


def ring_with_chords(n, k, seed=0):
    """Ring plus ``k`` distinct random chords; graph is deterministic in ``seed``."""
    base = ring(n)
    present = set(base.edges)
    candidates = [e for e in combinations(range(n), 2) if e not in present]
    if k > len(candidates):
        raise InvalidTopologyError(f"ring of {n} admits at most {len(candidates)} chords")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=k, replace=False) if k else []
    return ServerGraph(n, base.edges + tuple(candidates[i] for i in sorted(picks)))


def erdos_renyi(n, p, seed=0, max_tries=10000):
    """G(n, p) resampled until connected."""
    rng = np.random.default_rng(seed)
    pairs = list(combinations(range(n), 2))
    for _ in range(max_tries):
        keep = rng.random(len(pairs)) < p
        edges = tuple(e for e, k in zip(pairs, keep) if k)
        try:
            return ServerGraph(n, edges)
        except InvalidTopologyError:
            continue
    raise InvalidTopologyError(f"no connected G({n}, {p}) after {max_tries} draws")


def laplacian(g):
    """Combinatorial Laplacian ``deg - adjacency``."""
    if not g.is_connected():
        raise InvalidTopologyError("server graph is disconnected")
    A = g.adjacency()
    return np.diag(A.sum(axis=1)) - A


def build_mixing_matrix(g, sizes=None):
    """Optimal-diffusion gossip matrix for the server graph.

    ``P = I - 2 / (lambda_1(L') + lambda_{D-1}(L')) * L'`` with ``L' = L Omega``
    and ``Omega = diag(|S| / |S~_d|)``. ``L'`` is similar to the symmetric
    ``Omega^{1/2} L Omega^{1/2}``, so its (real) spectrum comes from the
    symmetric solver. The columns of ``P`` always sum to one and
    ``P @ (|S~_d| / |S|) = (|S~_d| / |S|)``; ``P`` is symmetric only when all
    cluster sizes are equal.
    """
    D = g.n_servers
    if sizes is None:
        sizes = ClusterSizes.equal(D)
    if sizes.counts.size != D:
        raise InvalidArgumentError(f"{sizes.counts.size} cluster sizes for {D} servers")
    L = laplacian(g)
    omega = sizes.total / sizes.counts
    s = np.sqrt(omega)
    lam = sym_eigen(s[:, None] * L * s[None, :]).eigenvalues
    denom = lam[0] + lam[D - 2]
    assert denom > 0, "connected graph must have a positive Laplacian spectrum"
    P = np.eye(D) - (2.0 / denom) * (L * omega[None, :])

    p_eigs = np.sort(1.0 - (2.0 / denom) * lam)[::-1]
    zeta = float(np.sort(np.abs(p_eigs))[::-1][1])
    if not sizes.is_equal:
        warnings.warn(
            "unequal cluster sizes: mixing matrix is column-stochastic but not symmetric",
            stacklevel=2,
        )
    return MixingMatrix(P, zeta, p_eigs, s)


def spectral_gap(P):
    """Second-largest eigenvalue magnitude of a mixing matrix.

    Accepts a :class:`MixingMatrix` (any cluster sizes) or a plain symmetric
    array.
    """
    if isinstance(P, MixingMatrix):
        s = P.symmetrizer
        S = s[:, None] * P.matrix / s[None, :]
        S = 0.5 * (S + S.T)
    else:
        S = np.asarray(P, dtype=np.float64)
    mags = np.sort(np.abs(sym_eigen(S).eigenvalues))[::-1]
    return float(mags[1]) if mags.size > 1 else 0.0


def build_selection_matrices(assignment, sample_sizes):
    """Selection matrices from a client-to-server map and client sample counts.

    ``V[i, d] = |S_i| / |S~_d|`` if client ``i`` belongs to server ``d``;
    ``B[d, i] = 1`` under the same condition.
    """
    servers = np.asarray(assignment.server_of)
    counts = np.asarray(sample_sizes, dtype=np.float64)
    C, D = assignment.n_clients, assignment.n_servers
    if servers.shape != (C,) or np.any(servers < 0) or np.any(servers >= D):
        raise InvalidArgumentError("every client must be assigned to exactly one server")
    if counts.shape != (C,) or np.any(counts <= 0):
        raise InvalidArgumentError("need one positive sample count per client")
    B = np.zeros((D, C))
    B[servers, np.arange(C)] = 1.0
    cluster_mass = B @ counts
    if np.any(cluster_mass == 0):
        raise InvalidArgumentError("every server needs at least one client")
    V = B.T * (counts / cluster_mass[servers])[:, None]
    return SelectionMatrices(V, B, counts / counts.sum())


def transition_matrix(k, schedule, sel, P):
    """Linear map applied to the client-model matrix at iteration ``k`` (1-based)."""
    if k < 1:
        raise InvalidArgumentError("iterations are numbered from 1")
    t1, t2 = schedule.tau1, schedule.tau2
    if k % (t1 * t2) == 0:
        return sel.H2(P, schedule.alpha)
    if k % t1 == 0:
        return sel.H1
    return np.eye(sel.V.shape[0])


def exact_averaging_matrix(sizes):
    """Mixing matrix ``m~ 1^T``: one round yields the exact global weighted mean."""
    frac = sizes.fractions
    return np.outer(frac, np.ones(frac.size))
