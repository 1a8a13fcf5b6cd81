"""Wall-clock latency model for SD-FEEL and the baseline schemes.

Rounds are synchronous: clients compute in parallel, uplinks inside a
cluster use orthogonal channels, and server-to-server sharing rounds run in
parallel across servers but one after the other in ``alpha``. One local
iteration therefore costs ``t_cmp``, an intra-cluster aggregation one
client-to-server upload, and an inter-cluster aggregation ``alpha``
server-to-server transfers.

Baseline accounting (not part of the original latency formula, built by
analogy):

- FedAvg: ``t_cmp`` per iteration plus one client-to-cloud upload per
  aggregation (every ``tau1 * tau2`` iterations).
- FEEL: ``t_cmp`` per iteration plus one client-to-server upload per round
  (every ``tau1`` iterations).
- HierFAVG: SD-FEEL's intra-cluster costs plus one server-to-cloud upload per
  global round (every ``tau1 * tau2`` iterations).
"""

import math
from dataclasses import dataclass

from ._errors import InvalidArgumentError

__all__ = [
    "LatencyConstants",
    "SchemeCharges",
    "comp_latency",
    "comm_latency",
    "sdfeel_total",
    "baseline_total",
    "scheme_charges",
]

SCHEMES = ("sdfeel", "fedavg", "feel", "hierfavg")


@dataclass(frozen=True)
class LatencyConstants:
    n_mac: float = 138.4e6  # FLOPs per local iteration
    c_cpu: float = 10e9  # FLOP/s
    m_bit: float = 32 * 21840  # 32-bit floats x 21,840 CNN parameters
    r_client_server: float = 5e6
    r_server_server: float = 50e6
    r_client_cloud: float = 2.5e6
    r_server_cloud: float = 5e6
    charge_downlink: bool = False

    def __post_init__(self):
        for name in ("n_mac", "c_cpu", "m_bit", "r_client_server", "r_server_server",
                     "r_client_cloud", "r_server_cloud"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidArgumentError(f"latency.{name} must be > 0, got {value!r}")

    @property
    def t_cmp(self):
        return comp_latency(self)

    @property
    def t_client_server(self):
        return comm_latency(self.m_bit, self.r_client_server)

    @property
    def t_server_server(self):
        return comm_latency(self.m_bit, self.r_server_server)

    @property
    def t_client_cloud(self):
        return comm_latency(self.m_bit, self.r_client_cloud)

    @property
    def t_server_cloud(self):
        return comm_latency(self.m_bit, self.r_server_cloud)

    @property
    def _link_factor(self):
        return 2.0 if self.charge_downlink else 1.0


def comp_latency(c):
    """Seconds of computation per local iteration."""
    return c.n_mac / c.c_cpu


def comm_latency(m_bit, rate):
    if not rate > 0:
        raise InvalidArgumentError(f"transmission rate must be > 0, got {rate!r}")
    return m_bit / rate


def sdfeel_total(K, sched, c):
    """``ceil(K / (tau1 tau2)) * [tau2 (tau1 t_cmp + t_up) + alpha t_ss]``."""
    t1, t2, a = sched.tau1, sched.tau2, sched.alpha
    rounds = math.ceil(K / (t1 * t2))
    up = c._link_factor * c.t_client_server
    return rounds * (t2 * (t1 * c.t_cmp + up) + a * c.t_server_server)


def baseline_total(scheme, K, sched, c):
    t1, t2 = sched.tau1, sched.tau2
    f = c._link_factor
    if scheme == "fedavg":
        return K * c.t_cmp + math.ceil(K / (t1 * t2)) * f * c.t_client_cloud
    if scheme == "feel":
        return K * c.t_cmp + math.ceil(K / t1) * f * c.t_client_server
    if scheme == "hierfavg":
        return (K * c.t_cmp + math.ceil(K / t1) * f * c.t_client_server
                + math.ceil(K / (t1 * t2)) * f * c.t_server_cloud)
    raise InvalidArgumentError(f"unknown baseline scheme {scheme!r}")


@dataclass(frozen=True)
class SchemeCharges:
    """Per-event costs and periods; ``elapsed(k)`` is the clock after iteration ``k``.

    Every iteration costs ``per_iteration``. Iterations divisible by
    ``global_period`` additionally cost ``global_uplink + backbone`` (backbone
    being inter-server or cloud traffic); other iterations divisible by
    ``intra_period`` cost ``per_intra``.
    """

    per_iteration: float
    intra_period: int
    per_intra: float
    global_period: int
    global_uplink: float
    backbone: float

    @property
    def per_global(self):
        return self.global_uplink + self.backbone

    def elapsed(self, k):
        n_global = k // self.global_period
        n_intra = k // self.intra_period - n_global
        return k * self.per_iteration + n_intra * self.per_intra + n_global * self.per_global

    def round_breakdown(self):
        """Compute / uplink / backbone split of one global round."""
        per_round = self.global_period // self.intra_period
        compute = self.global_period * self.per_iteration
        uplink = (per_round - 1) * self.per_intra + self.global_uplink
        return {"compute": compute, "uplink": uplink, "backbone": self.backbone,
                "total": compute + uplink + self.backbone}

    def timeline(self, ks):
        """Cumulative seconds at each iteration index in ``ks``."""
        return [self.elapsed(int(k)) for k in ks]


def scheme_charges(scheme, sched, c):
    t1, t2, a = sched.tau1, sched.tau2, sched.alpha
    f = c._link_factor
    up = f * c.t_client_server
    if scheme == "sdfeel":
        return SchemeCharges(c.t_cmp, t1, up, t1 * t2, up, a * c.t_server_server)
    if scheme == "hierfavg":
        return SchemeCharges(c.t_cmp, t1, up, t1 * t2, up, f * c.t_server_cloud)
    if scheme == "fedavg":
        tau = t1 * t2
        return SchemeCharges(c.t_cmp, tau, 0.0, tau, 0.0, f * c.t_client_cloud)
    if scheme == "feel":
        return SchemeCharges(c.t_cmp, t1, up, t1, up, 0.0)
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")
