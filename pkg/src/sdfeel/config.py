"""Run configuration: a TOML file of dotted ``section.key`` settings.

Every key is optional; omitted keys take the defaults below.

=========================  ============  ==============================================
key                        default       meaning
=========================  ============  ==============================================
scheme                     ``sdfeel``    ``sdfeel``, ``fedavg``, ``feel``, ``hierfavg`` or ``all``
seed                       0             master seed
output                     ``results``   output directory
clients.count              50            number of clients ``C``
clients.servers            10            number of edge servers ``D``
clients.assignment         contiguous    ``contiguous`` or ``round_robin``
topology.kind              ring          ``ring``, ``complete``, ``chords`` or ``file``
topology.chords            2             chords added when ``kind = "chords"``
topology.chord_seed        0             seed for chord placement
topology.edges             []            ``[[i, j], ...]`` when ``kind = "file"``
data.num_classes           10
data.dim                   10            feature dimension
data.per_class             1000          training samples per class
data.test_per_class        200           test samples per class (0 disables the test set)
data.separation            3.0           distance of the class means from the origin
data.concentration         0.5           Dirichlet concentration of the label split
schedule.tau1              2             local iterations per intra-cluster aggregation
schedule.tau2              1             intra-cluster aggregations per inter-cluster one
schedule.alpha             5             gossip rounds per inter-cluster aggregation
train.eta                  0.01          learning rate
train.batch_size           10
train.iterations           1000          ``K``; a multiple of ``tau1 * tau2``
train.beta                 1.0           per-round participation probability
train.eval_every           0             trace cadence; 0 means every ``tau1 * tau2``
train.feel_clients         5             clients scheduled per FEEL round
latency.*                                see :class:`sdfeel.latency.LatencyConstants`
bounds.probe_points        6             probe models for estimating ``L, sigma, kappa``
bounds.reference_steps     5000          gradient-descent steps for the reference loss
bounds.enabled             true          compute constants and the bound for the sidecar
=========================  ============  ==============================================

Example::

    scheme = "all"
    schedule.tau1 = 5
    schedule.alpha = 1
    [train]
    eta = 0.5
    iterations = 500
"""

import sys
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import _rng
from ._errors import ConfigError, InvalidArgumentError
from .data import assign_clusters, dirichlet_partition, generate_synthetic
from .latency import LatencyConstants
from .protocol import AggregationSchedule, FederatedProblem, TrainingSettings
from .topology import ServerGraph, complete, ring, ring_with_chords

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ClientsSpec",
    "TopologySpec",
    "DataSpec",
    "TrainSpec",
    "BoundsSpec",
    "RunConfig",
    "SweepSpec",
    "parse_config",
    "config_from_mapping",
    "SWEEP_AXES",
    "SCHEME_CHOICES",
]

SCHEME_CHOICES = ("sdfeel", "fedavg", "feel", "hierfavg", "all")
TOPOLOGY_KINDS = ("ring", "complete", "chords", "file")

# sweep axis -> dotted config key
SWEEP_AXES = {
    "tau1": "schedule.tau1",
    "tau2": "schedule.tau2",
    "alpha": "schedule.alpha",
    "beta": "train.beta",
    "eta": "train.eta",
    "batch_size": "train.batch_size",
    "iterations": "train.iterations",
    "topology": "topology.kind",
    "concentration": "data.concentration",
    "scheme": "scheme",
}


@dataclass(frozen=True)
class ClientsSpec:
    count: int = 50
    servers: int = 10
    assignment: str = "contiguous"


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "ring"
    chords: int = 2
    chord_seed: int = 0
    edges: tuple = ()


@dataclass(frozen=True)
class DataSpec:
    num_classes: int = 10
    dim: int = 10
    per_class: int = 1000
    test_per_class: int = 200
    separation: float = 3.0
    concentration: float = 0.5


@dataclass(frozen=True)
class TrainSpec:
    eta: float = 0.01
    batch_size: int = 10
    iterations: int = 1000
    beta: float = 1.0
    eval_every: int = 0
    feel_clients: int = 5


@dataclass(frozen=True)
class BoundsSpec:
    probe_points: int = 6
    reference_steps: int = 5000
    enabled: bool = True


_SECTIONS = {
    "clients": ClientsSpec,
    "topology": TopologySpec,
    "data": DataSpec,
    "schedule": AggregationSchedule,
    "train": TrainSpec,
    "latency": LatencyConstants,
    "bounds": BoundsSpec,
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved, validated settings for one run (or one ``scheme = "all"`` batch)."""

    scheme: str = "sdfeel"
    seed: int = 0
    output: str = "results"
    clients: ClientsSpec = field(default_factory=ClientsSpec)
    topology: TopologySpec = field(default_factory=TopologySpec)
    data: DataSpec = field(default_factory=DataSpec)
    schedule: AggregationSchedule = field(default_factory=AggregationSchedule)
    train: TrainSpec = field(default_factory=TrainSpec)
    latency: LatencyConstants = field(default_factory=LatencyConstants)
    bounds: BoundsSpec = field(default_factory=BoundsSpec)

    @property
    def schemes(self):
        return SCHEME_CHOICES[:-1] if self.scheme == "all" else (self.scheme,)

    def to_dict(self):
        d = asdict(self)
        d["topology"]["edges"] = [list(e) for e in self.topology.edges]
        return d

    def with_value(self, dotted, value):
        """Copy with one dotted key replaced, coerced to the key's type; revalidates."""
        flat = _flatten(self.to_dict())
        if dotted not in flat:
            raise ConfigError(f"unknown configuration key {dotted!r}")
        flat[dotted] = value
        return config_from_mapping(_unflatten(flat))

    # builders ---------------------------------------------------------

    def graph(self):
        t, D = self.topology, self.clients.servers
        if t.kind == "ring":
            return ring(D)
        if t.kind == "complete":
            return complete(D)
        if t.kind == "chords":
            return ring_with_chords(D, t.chords, t.chord_seed)
        return ServerGraph(D, [tuple(e) for e in t.edges])

    def problem(self):
        """Synthetic data, Dirichlet partition and cluster assignment for this seed."""
        d, c = self.data, self.clients
        train = generate_synthetic(d.num_classes, d.dim, d.per_class, d.separation,
                                   _rng.stream_seed(self.seed, _rng.TRAIN_DATA))
        test = None
        if d.test_per_class > 0:
            test = generate_synthetic(d.num_classes, d.dim, d.test_per_class, d.separation,
                                      _rng.stream_seed(self.seed, _rng.TEST_DATA))
        plan = dirichlet_partition(train.labels, c.count, d.concentration,
                                   _rng.stream_seed(self.seed, _rng.PARTITION))
        assignment = assign_clusters(c.count, c.servers, c.assignment)
        return FederatedProblem(train, plan, assignment, test)

    def settings(self):
        t = self.train
        return TrainingSettings(self.schedule, eta=t.eta, batch_size=t.batch_size,
                                iterations=t.iterations, beta=t.beta, eval_every=t.eval_every,
                                seed=self.seed, schedule_size=t.feel_clients,
                                latency=self.latency)


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    axis: str
    values: tuple
    seeds: tuple = (0,)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {sorted(SWEEP_AXES)}")
        if len(self.values) < 1:
            raise ConfigError("a sweep needs at least one value")
        if len(self.seeds) < 1:
            raise ConfigError("a sweep needs at least one seed")

    def cells(self):
        """``(value, seed)`` pairs in output order."""
        return [(v, s) for v in self.values for s in self.seeds]


def _flatten(tree, prefix=""):
    out = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _unflatten(flat):
    tree = {}
    for dotted, value in flat.items():
        node = tree
        *head, last = dotted.split(".")
        for h in head:
            node = node.setdefault(h, {})
        node[last] = value
    return tree


def _coerce(name, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    if isinstance(default, tuple):  # topology.edges
        try:
            edges = tuple((int(a), int(b)) for a, b in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be a list of [i, j] pairs") from None
        return edges
    raise ConfigError(f"{name}: unsupported value {value!r}")


def _build_section(name, cls, given):
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in given.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key '{name}.{key}'")
        if isinstance(value, dict):
            raise ConfigError(f"'{name}.{key}' is a value, not a section")
        kwargs[key] = _coerce(f"{name}.{key}", value, getattr(defaults, key))
    try:
        return replace(defaults, **kwargs)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None


def config_from_mapping(tree):
    """Validate a nested mapping (as produced by a TOML parser) into a :class:`RunConfig`."""
    top = {}
    sections = {}
    base = RunConfig()
    for key, value in tree.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"'{key}' must be a section")
            sections[key] = _build_section(key, _SECTIONS[key], value)
        elif key in ("scheme", "seed", "output"):
            top[key] = _coerce(key, value, getattr(base, key))
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    cfg = replace(base, **top, **sections)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.scheme not in SCHEME_CHOICES:
        raise ConfigError(f"scheme must be one of {SCHEME_CHOICES}, got {cfg.scheme!r}")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    c, t, d, tr = cfg.clients, cfg.topology, cfg.data, cfg.train
    if c.servers < 1 or c.count < c.servers:
        raise ConfigError(
            f"clients.count={c.count} must be >= clients.servers={c.servers} >= 1")
    if c.assignment not in ("contiguous", "round_robin"):
        raise ConfigError(f"clients.assignment must be contiguous or round_robin, got {c.assignment!r}")
    if t.kind not in TOPOLOGY_KINDS:
        raise ConfigError(f"topology.kind must be one of {TOPOLOGY_KINDS}, got {t.kind!r}")
    if t.kind == "file" and not t.edges:
        raise ConfigError("topology.kind='file' requires topology.edges")
    if d.num_classes < 2 or d.dim < 1 or d.per_class < 1 or d.test_per_class < 0:
        raise ConfigError("data.num_classes >= 2, data.dim >= 1, data.per_class >= 1 required")
    if not d.separation > 0 or not d.concentration > 0:
        raise ConfigError("data.separation and data.concentration must be > 0")
    period = cfg.schedule.period
    if tr.iterations < 1 or tr.iterations % period:
        raise ConfigError(
            f"train.iterations={tr.iterations} must be a positive multiple of "
            f"schedule.tau1*schedule.tau2={period}")
    if not 0.0 < tr.beta <= 1.0:
        raise ConfigError(f"train.beta={tr.beta!r} must lie in (0, 1]")
    if not tr.eta > 0:
        raise ConfigError(f"train.eta={tr.eta!r} must be > 0")
    if tr.batch_size < 1 or tr.eval_every < 0:
        raise ConfigError("train.batch_size must be >= 1 and train.eval_every >= 0")
    if "feel" in cfg.schemes and not 1 <= tr.feel_clients <= c.count:
        raise ConfigError(
            f"train.feel_clients={tr.feel_clients} must lie in [1, clients.count={c.count}]")
    if cfg.bounds.probe_points < 2 or cfg.bounds.reference_steps < 0:
        raise ConfigError("bounds.probe_points >= 2 and bounds.reference_steps >= 0 required")
    try:
        g = cfg.graph()
    except InvalidArgumentError as exc:
        raise ConfigError(f"topology: {exc}") from None
    if g.n_servers != c.servers:
        raise ConfigError("topology does not match clients.servers")
    min_shard = int(np.min(cfg.problem().plan.sizes()))
    if tr.batch_size > min_shard:
        raise ConfigError(
            f"train.batch_size={tr.batch_size} exceeds the smallest client shard of {min_shard} "
            f"samples produced by data.concentration={d.concentration} over "
            f"clients.count={c.count}")


def parse_config(path):
    """Read and validate a TOML run configuration.

    Raises
    ------
    ConfigError
        Malformed TOML, an unknown key, a wrongly typed value or a violated
        cross-field constraint. The message names the offending key(s).
    """
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(tree)
