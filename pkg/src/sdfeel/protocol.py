"""SD-FEEL training and the FedAvg / FEEL / HierFAVG baselines.

All four schemes share one engine. Clients hold rows of a ``(C, n_params)``
array; every ``intra_period`` iterations each server aggregates its cluster,
every ``global_period`` iterations the server models are additionally mixed
``alpha`` times with a server-level matrix, and the result is broadcast back.
The schemes differ only in cluster layout, mixing matrix, participation and
latency charges:

=========  ================  ==============  ==============  ==========================
scheme     clusters          intra period    global period   server mixing
=========  ================  ==============  ==============  ==========================
sdfeel     assignment        tau1            tau1*tau2       gossip ``P``, ``alpha``
hierfavg   assignment        tau1            tau1*tau2       exact weighted mean
fedavg     one (cloud)       tau1*tau2       tau1*tau2       none
feel       one (edge)        tau1            tau1            none; ``s`` clients/round
=========  ================  ==============  ==============  ==========================

Aggregations always reduce in ascending client index order.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._errors import ConfigError, InvalidArgumentError, InvalidStateError
from .data import ClusterAssignment, PartitionPlan
from .latency import LatencyConstants, scheme_charges
from .learner import accuracy, batched_gradients, BatchSampler, loss_and_gradient, n_params
from .spectral import matrix_power, weighted_col_norm_sq
from .topology import (
    ClusterSizes,
    build_mixing_matrix,
    build_selection_matrices,
    exact_averaging_matrix,
)

__all__ = [
    "AggregationSchedule",
    "TrainingSettings",
    "FederatedProblem",
    "TraceRecord",
    "SimulationState",
    "RunResult",
    "intra_cluster_aggregate",
    "broadcast",
    "inter_cluster_aggregate",
    "apply_dropout",
    "feel_schedule",
    "run_sdfeel",
    "run_fedavg",
    "run_feel",
    "run_hierfavg",
    "run_scheme",
    "evolution_oracle",
    "synchronous_sgd",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("scheme", "k", "sim_time_s", "train_loss", "test_acc",
                 "consensus_E_k", "grad_sq_norm", "seed")


@dataclass(frozen=True)
class AggregationSchedule:
    tau1: int = 2
    tau2: int = 1
    alpha: int = 5

    def __post_init__(self):
        for name in ("tau1", "tau2", "alpha"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgumentError(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def period(self):
        return self.tau1 * self.tau2


@dataclass(frozen=True)
class TrainingSettings:
    schedule: AggregationSchedule = field(default_factory=AggregationSchedule)
    eta: float = 0.01
    batch_size: int = 10
    iterations: int = 1000
    beta: float = 1.0
    eval_every: int = 0  # 0 -> every tau1*tau2 iterations
    seed: int = 0
    schedule_size: int = 5  # FEEL clients per round
    latency: LatencyConstants = field(default_factory=LatencyConstants)

    def __post_init__(self):
        if self.iterations < 1 or self.iterations % self.schedule.period:
            raise ConfigError(
                f"iterations={self.iterations} must be a positive multiple of "
                f"tau1*tau2={self.schedule.period}"
            )
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"dropout beta must lie in (0, 1], got {self.beta!r}")
        if self.eta < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.eta!r}")
        if self.batch_size < 1 or self.eval_every < 0:
            raise ConfigError("batch_size must be >= 1 and eval_every >= 0")

    @property
    def cadence(self):
        return self.eval_every or self.schedule.period


@dataclass(frozen=True)
class FederatedProblem:
    """Training data split across clients, clients grouped under servers."""

    train: object
    plan: PartitionPlan
    assignment: ClusterAssignment
    test: object = None

    def __post_init__(self):
        if self.plan.n_clients != self.assignment.n_clients:
            raise InvalidArgumentError("partition and assignment disagree on the client count")

    @property
    def client_sizes(self):
        return self.plan.sizes().astype(np.float64)

    @property
    def weights(self):
        s = self.client_sizes
        return s / s.sum()

    @property
    def cluster_sizes(self):
        s = self.client_sizes
        return ClusterSizes(np.array([s[m].sum() for m in self.assignment.clusters()]))

    def selection(self):
        return build_selection_matrices(self.assignment, self.client_sizes)


@dataclass(frozen=True)
class TraceRecord:
    scheme: str
    k: int
    sim_time_s: float
    train_loss: float
    test_acc: float
    consensus_E_k: float
    grad_sq_norm: float
    seed: int

    def row(self):
        return [self.scheme, self.k] + [repr(float(getattr(self, c))) for c in TRACE_COLUMNS[2:7]] + [self.seed]


@dataclass
class SimulationState:
    models: np.ndarray  # (C, n_params), row i is client i
    cluster_models: np.ndarray  # (D, n_params)
    k: int = 0


@dataclass
class RunResult:
    scheme: str
    trace: list
    final_models: np.ndarray
    weights: np.ndarray
    history: list = None  # client-model arrays after iterations 0..K
    gradients: list = None  # gradients applied in iterations 1..K

    @property
    def u_final(self):
        return self.weights @ self.final_models

    def model_matrices(self):
        """Client-model matrices ``W_k`` of shape ``(n_params, C)``."""
        return [h.T for h in self.history]


def intra_cluster_aggregate(models, sizes):
    """Data-size weighted mean of a cluster's client models."""
    models = np.asarray(models, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.float64)
    if models.shape[0] == 0:
        raise InvalidStateError("cannot aggregate an empty cluster")
    total = sizes.sum()
    out = np.zeros(models.shape[1])
    for w, s in zip(models, sizes):
        out += (s / total) * w
    return out


def broadcast(cluster_model, cluster, state):
    """Overwrite every client model in ``cluster`` with the cluster model."""
    for i in cluster:
        state.models[i] = cluster_model
    return state


def inter_cluster_aggregate(cluster_models, P, alpha, neighbors=None):
    """``alpha`` rounds of neighbour mixing: ``w_d <- sum_j P[j, d] w_j``.

    ``neighbors[d]`` lists the servers (other than ``d``) that ``d`` hears
    from; by default every ``j`` with ``P[j, d] != 0``.
    """
    P = P.matrix if hasattr(P, "matrix") else np.asarray(P, dtype=np.float64)
    cur = np.asarray(cluster_models, dtype=np.float64)
    D = cur.shape[0]
    if neighbors is None:
        sources = [sorted(set(np.flatnonzero(P[:, d]).tolist()) | {d}) for d in range(D)]
    else:
        sources = [sorted(set(neighbors[d]) | {d}) for d in range(D)]
    for _ in range(alpha):
        nxt = np.zeros_like(cur)
        for d in range(D):
            for j in sources[d]:
                nxt[d] += P[j, d] * cur[j]
        cur = nxt
    return cur


def apply_dropout(round_participants, beta, rng):
    """Keep each participant independently with probability ``beta``."""
    if not 0.0 < beta <= 1.0:
        raise InvalidArgumentError(f"beta must lie in (0, 1], got {beta!r}")
    participants = list(round_participants)
    keep = rng.random(len(participants)) < beta
    return [i for i, k in zip(participants, keep) if k]


def feel_schedule(rng, n_clients, size):
    """Clients scheduled in one FEEL round: ``size`` of them, uniformly without replacement."""
    if size > n_clients:
        raise ConfigError(f"cannot schedule {size} of {n_clients} clients")
    return sorted(rng.choice(n_clients, size=size, replace=False).tolist())


def _evaluate(scheme, k, t, u, models, weights, problem, indices, seed):
    train = problem.train
    with np.errstate(over="ignore"):
        E = weighted_col_norm_sq((models - u).T, weights)
    value, g, train_acc = loss_and_gradient(u, train, indices)
    if not (np.isfinite(E) and np.isfinite(value)):
        raise FloatingPointError(f"{scheme}: run diverged at iteration {k} (loss or consensus overflowed)")
    acc = train_acc if problem.test is None else accuracy(u, problem.test)
    return TraceRecord(scheme, k, float(t), value, acc, E, float(g @ g), seed)


def _engine(scheme, problem, settings, clusters, mixing=None, neighbors=None,
            intra_period=1, global_period=1, alpha=1, schedule_size=None, record=False,
            w0=None):
    train = problem.train
    plan = problem.plan
    C = plan.n_clients
    dim, K_cls = train.dim, train.num_classes
    sizes = problem.client_sizes
    weights = sizes / sizes.sum()
    seed = settings.seed
    if w0 is None:
        w0 = np.zeros(n_params(dim, K_cls))
    w0 = np.asarray(w0, dtype=np.float64)

    min_shard = int(sizes.min())
    if settings.batch_size > min_shard:
        raise ConfigError(
            f"train.batch_size={settings.batch_size} exceeds the smallest client shard "
            f"({min_shard} samples)"
        )
    samplers = [BatchSampler(ix, settings.batch_size, _rng.stream(seed, _rng.CLIENT, i))
                for i, ix in enumerate(plan.client_indices)]
    dropout_rng = _rng.stream(seed, _rng.DROPOUT)
    schedule_rng = _rng.stream(seed, _rng.SCHEDULE)
    charges = scheme_charges(scheme, settings.schedule, settings.latency)
    all_indices = np.concatenate([np.asarray(ix) for ix in plan.client_indices])
    if all_indices.size == train.n_samples:
        all_indices = None  # plan covers the dataset; skip the gather

    state = SimulationState(np.tile(w0, (C, 1)), np.tile(w0, (len(clusters), 1)))
    history = [state.models.copy()] if record else None
    grads_log = [] if record else None
    trace = [_evaluate(scheme, 0, 0.0, weights @ state.models, state.models, weights,
                       problem, all_indices, seed)]
    cadence = settings.cadence
    X, y = train.features, train.labels
    active = np.ones(C, dtype=bool)

    for k in range(1, settings.iterations + 1):
        if (k - 1) % intra_period == 0:
            pool = list(range(C))
            if schedule_size is not None:
                pool = feel_schedule(schedule_rng, C, schedule_size)
            if settings.beta < 1.0:
                pool = apply_dropout(pool, settings.beta, dropout_rng)
            active = np.zeros(C, dtype=bool)
            active[pool] = True

        batch = np.stack([s.next() for s in samplers])
        G = batched_gradients(state.models, X[batch], y[batch], K_cls)
        G[~active] = 0.0
        state.models = state.models - settings.eta * G
        state.k = k

        if k % intra_period == 0:
            for d, members in enumerate(clusters):
                live = [i for i in members if active[i]]
                if live:
                    state.cluster_models[d] = intra_cluster_aggregate(state.models[live], sizes[live])
            if mixing is not None and k % global_period == 0:
                state.cluster_models = inter_cluster_aggregate(
                    state.cluster_models, mixing, alpha, neighbors)
            for d, members in enumerate(clusters):
                broadcast(state.cluster_models[d], members, state)

        if record:
            history.append(state.models.copy())
            grads_log.append(G)
        if not np.all(np.isfinite(state.models)):
            raise FloatingPointError(f"{scheme}: model diverged at iteration {k}")
        if k % cadence == 0 or k == settings.iterations:
            u = weights @ state.models
            trace.append(_evaluate(scheme, k, charges.elapsed(k), u, state.models, weights,
                                   problem, all_indices, seed))

    return RunResult(scheme, trace, state.models, weights, history, grads_log)


def run_sdfeel(problem, graph, settings, record=False, w0=None):
    """Semi-decentralized training over the edge-server ``graph``.

    Local SGD every iteration, intra-cluster aggregation every ``tau1``
    iterations and, every ``tau1*tau2`` iterations, ``alpha`` rounds of gossip
    with the optimal-diffusion mixing matrix before the broadcast.
    """
    if graph.n_servers != problem.assignment.n_servers:
        raise ConfigError("graph and assignment disagree on the server count")
    mixing = build_mixing_matrix(graph, problem.cluster_sizes)
    neighbors = [graph.neighbors(d) for d in range(graph.n_servers)]
    sched = settings.schedule
    return _engine("sdfeel", problem, settings, problem.assignment.clusters(), mixing,
                   neighbors, sched.tau1, sched.period, sched.alpha, record=record, w0=w0)


def run_hierfavg(problem, settings, record=False, w0=None):
    """Edge aggregation every ``tau1``; cloud-level exact weighted averaging every ``tau1*tau2``."""
    sched = settings.schedule
    mixing = exact_averaging_matrix(problem.cluster_sizes)
    return _engine("hierfavg", problem, settings, problem.assignment.clusters(), mixing,
                   None, sched.tau1, sched.period, 1, record=record, w0=w0)


def run_fedavg(problem, settings, record=False, w0=None):
    """Cloud aggregation over all clients every ``tau = tau1*tau2`` iterations."""
    tau = settings.schedule.period
    everyone = [list(range(problem.plan.n_clients))]
    return _engine("fedavg", problem, settings, everyone, None, None, tau, tau,
                   record=record, w0=w0)


def run_feel(problem, settings, record=False, w0=None):
    """One edge server over all clients, scheduling ``schedule_size`` of them per round.

    A round lasts ``tau1`` iterations. Unscheduled clients are frozen at the
    last broadcast model and do not enter the aggregation.
    """
    C = problem.plan.n_clients
    if settings.schedule_size > C:
        raise ConfigError(f"feel.schedule_size={settings.schedule_size} exceeds the {C} clients")
    t1 = settings.schedule.tau1
    return _engine("feel", problem, settings, [list(range(C))], None, None, t1, t1,
                   schedule_size=settings.schedule_size, record=record, w0=w0)


def run_scheme(scheme, problem, graph, settings, **kwargs):
    if scheme == "sdfeel":
        return run_sdfeel(problem, graph, settings, **kwargs)
    runners = {"fedavg": run_fedavg, "feel": run_feel, "hierfavg": run_hierfavg}
    if scheme not in runners:
        raise ConfigError(f"unknown scheme {scheme!r}")
    return runners[scheme](problem, settings, **kwargs)


def evolution_oracle(W0, gradients, eta, schedule, sel, P):
    """Replay a run as ``W_k = (W_{k-1} - eta G_k) T_k`` for ``k = 1..K``.

    Parameters
    ----------
    W0 : ndarray, shape (n_params, C)
        Initial client-model matrix, one column per client.
    gradients : sequence of ndarray, shape (C, n_params)
        Gradients applied in iterations ``1..K``, as recorded by a run.
    eta : float
    schedule : AggregationSchedule
    sel : SelectionMatrices
    P : MixingMatrix or ndarray

    Returns
    -------
    list of ndarray
        ``[W_0, W_1, ..., W_K]``, each of shape (n_params, C).
    """
    W = np.asarray(W0, dtype=np.float64)
    C = sel.V.shape[0]
    if W.shape[1] != C:
        raise InvalidArgumentError(f"W0 has {W.shape[1]} columns for {C} clients")
    P = P.matrix if hasattr(P, "matrix") else np.asarray(P, dtype=np.float64)
    # Transitions repeat with period tau1*tau2.
    H1 = sel.H1
    H2 = sel.V @ matrix_power(P, schedule.alpha) @ sel.B
    I = np.eye(C)
    out = [W]
    for k, G in enumerate(gradients, start=1):
        G = np.asarray(G, dtype=np.float64)
        if G.shape != (C, W.shape[0]):
            raise InvalidArgumentError(f"gradient {k} has shape {G.shape}")
        if k % schedule.period == 0:
            T = H2
        elif k % schedule.tau1 == 0:
            T = H1
        else:
            T = I
        W = (W - eta * G.T) @ T
        out.append(W)
    return out


def synchronous_sgd(problem, settings, w0=None):
    """Single-model mini-batch SGD on the pooled data with the clients' batch draws.

    Each step averages the clients' mini-batch gradients with weights ``m_i``
    using the same per-client streams as the federated runs. Returns the
    model after every step, ``[w_0, ..., w_K]``.
    """
    train, plan = problem.train, problem.plan
    weights = problem.weights
    w = np.zeros(n_params(train.dim, train.num_classes)) if w0 is None else np.asarray(w0, float)
    samplers = [BatchSampler(ix, settings.batch_size, _rng.stream(settings.seed, _rng.CLIENT, i))
                for i, ix in enumerate(plan.client_indices)]
    out = [w.copy()]
    for _ in range(settings.iterations):
        batch = np.stack([s.next() for s in samplers])
        G = batched_gradients(np.tile(w, (plan.n_clients, 1)), train.features[batch],
                              train.labels[batch], train.num_classes)
        w = w - settings.eta * (weights @ G)
        out.append(w.copy())
    return out


def write_trace_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            writer.writerow(r.row())
