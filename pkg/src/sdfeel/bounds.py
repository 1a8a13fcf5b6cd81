"""Convergence-bound quantities, learning-rate admissibility and monotonicity scans.

Every quantity depends on the spectral gap only through ``q = zeta**alpha``.
Writing ``tau = tau1 * tau2`` and ``x = eta * L``:

    Lambda = q^2/(1-q^2) + 2q/(1-q) + q^2/(1-q)^2
    V3     = tau * (tau * Lambda + (tau-1)/2 * (2-q)/(1-q))
    V1     = (tau * q^2/(1-q^2) + (tau-1)/2) / (1 - 16 x^2 V3)
    V2     = V3 / (1 - 16 x^2 V3)

and the bound on the average squared gradient norm of the weighted model is

    2 Delta/(eta K) + x sum(m_i^2) sigma^2 + 2 x^2 V1 sigma^2 + 8 x^2 V2 kappa^2

provided ``1 - x - 8 x^2 V2 >= 0`` and ``1 - 16 x^2 V3 > 0``.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._errors import InadmissibleLearningRateError, InvalidArgumentError
from .learner import AssumptionConstants, loss_and_gradient

__all__ = [
    "BoundParams",
    "BoundBreakdown",
    "RateCheck",
    "ScanRow",
    "compute_lambda",
    "compute_v123",
    "check_learning_rate",
    "max_admissible_eta",
    "theorem_bound",
    "monotonicity_scan",
    "write_scan_csv",
    "reference_gap",
    "SCAN_COLUMNS",
]

SCAN_COLUMNS = ("axis", "value", "Lambda", "V1", "V2", "V3", "rhs_total", "admissible")
SCAN_AXES = ("tau1", "tau2", "zeta_alpha", "alpha")

# q beyond this is treated as 1: the rational terms lose all precision.
_Q_CEILING = 1.0 - 1e-12


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the bound.

    ``weights`` is the client mass vector ``m`` (sums to one) and ``delta`` the
    initial optimality gap.
    """

    zeta: float
    alpha: int
    tau1: int
    tau2: int
    eta: float
    K: int
    constants: AssumptionConstants
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    delta: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        object.__setattr__(self, "weights", w)
        if not 0.0 <= self.zeta < 1.0:
            raise InvalidArgumentError(f"zeta must lie in [0, 1), got {self.zeta!r}")
        if int(self.alpha) < 1 or int(self.tau1) < 1 or int(self.tau2) < 1:
            raise InvalidArgumentError("alpha, tau1 and tau2 must be >= 1")
        if not self.eta > 0:
            raise InvalidArgumentError(f"eta must be > 0, got {self.eta!r}")
        if int(self.K) < 1 or int(self.K) % (int(self.tau1) * int(self.tau2)):
            raise InvalidArgumentError(
                f"K={self.K} must be a positive multiple of tau1*tau2={self.tau1 * self.tau2}"
            )
        if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgumentError("weights must be non-negative and sum to 1")
        if self.delta < 0:
            raise InvalidArgumentError("delta must be >= 0")
        c = self.constants
        if min(c.L, c.sigma, c.kappa) < 0:
            raise InvalidArgumentError("L, sigma and kappa must be >= 0")

    @property
    def q(self):
        return _power(self.zeta, self.alpha)

    @property
    def Q(self):
        return _Q.of(self.zeta, int(self.alpha))

    @property
    def tau(self):
        return int(self.tau1) * int(self.tau2)


@dataclass(frozen=True)
class BoundBreakdown:
    Lambda: float
    V1: float
    V2: float
    V3: float
    admissible: bool
    optimization: float
    sampling: float
    drift_noise: float
    drift_noniid: float

    @property
    def addends(self):
        return (self.optimization, self.sampling, self.drift_noise, self.drift_noniid)

    @property
    def rhs_total(self):
        return math.fsum(self.addends)


@dataclass(frozen=True)
class RateCheck:
    """Result of the admissibility test; truthy iff both conditions hold."""

    ok: bool
    first_lhs: float
    second_lhs: float

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class ScanRow:
    axis: str
    value: float
    Lambda: float
    V1: float
    V2: float
    V3: float
    rhs_total: float
    admissible: bool
    reason: str = ""

    def row(self):
        return [self.axis, repr(float(self.value)), repr(self.Lambda), repr(self.V1),
                repr(self.V2), repr(self.V3), repr(self.rhs_total), str(self.admissible).lower()]


def _power(zeta, alpha):
    if zeta == 0.0:
        return 0.0
    return math.exp(alpha * math.log(zeta))


@dataclass(frozen=True)
class _Q:
    """``q = zeta**alpha`` together with ``1 - q`` and ``1 - q**2`` at full precision."""

    q: float
    one_minus_q: float
    one_minus_q2: float

    @classmethod
    def of(cls, zeta, alpha=1):
        if not 0.0 <= zeta < 1.0:
            raise InvalidArgumentError(f"zeta**alpha must lie in [0, 1), got {zeta!r}")
        if zeta == 0.0:
            return cls(0.0, 1.0, 1.0)
        if alpha == 1:
            # 1 - zeta is exact for zeta >= 0.5
            q, omq = zeta, 1.0 - zeta
            omq2 = omq * (1.0 + zeta)
        else:
            lz = alpha * math.log(zeta)
            q, omq, omq2 = math.exp(lz), -math.expm1(lz), -math.expm1(2.0 * lz)
        if omq < 1.0 - _Q_CEILING:
            raise InvalidArgumentError(f"zeta**alpha={q!r} is numerically indistinguishable from 1")
        return cls(q, omq, omq2)


def _lambda_q(Q):
    q = Q.q
    b = q / Q.one_minus_q
    return q * q / Q.one_minus_q2 + 2.0 * b + b * b


def _v3_q(Q, tau1, tau2):
    tau = int(tau1) * int(tau2)
    # (2 - q)/(1 - q) = 1 + 1/(1 - q)
    return tau * (tau * _lambda_q(Q) + 0.5 * (tau - 1) * (1.0 + 1.0 / Q.one_minus_q))


def compute_lambda(zeta, alpha):
    """``Lambda`` for spectral gap ``zeta`` and ``alpha`` sharing rounds.

    >>> compute_lambda(0.6, 1)
    5.8125
    """
    if not 0.0 <= zeta < 1.0:
        raise InvalidArgumentError(f"zeta must lie in [0, 1), got {zeta!r}")
    if int(alpha) < 1:
        raise InvalidArgumentError("alpha must be >= 1")
    return _lambda_q(_Q.of(zeta, int(alpha)))


def _v123_q(q, tau1, tau2, eta, L):
    tau = int(tau1) * int(tau2)
    V3 = _v3_q(q, tau1, tau2)
    denom = 1.0 - 16.0 * (eta * L) * (eta * L) * V3
    if not denom > 0:
        raise InadmissibleLearningRateError(
            f"1 - 16 eta^2 L^2 V3 = {denom!r} <= 0 at eta={eta!r}", eta
        )
    V1 = (tau * q.q ** 2 / q.one_minus_q2 + 0.5 * (tau - 1)) / denom
    V2 = V3 / denom
    return V1, V2, V3


def compute_v123(zeta, alpha, tau1, tau2, eta, L):
    """Return ``(V1, V2, V3)``.

    Raises
    ------
    InadmissibleLearningRateError
        If ``1 - 16 eta^2 L^2 V3 <= 0``.
    """
    if int(tau1) < 1 or int(tau2) < 1:
        raise InvalidArgumentError("tau1 and tau2 must be >= 1")
    if int(alpha) < 1:
        raise InvalidArgumentError("alpha must be >= 1")
    return _v123_q(_Q.of(zeta, int(alpha)), tau1, tau2, eta, L)


def _rate_conditions(q, tau1, tau2, eta, L):
    V3 = _v3_q(q, tau1, tau2)
    x2 = (eta * L) * (eta * L)
    second = 1.0 - 16.0 * x2 * V3
    if second > 0:
        first = 1.0 - eta * L - 8.0 * x2 * V3 / second
    else:
        first = -math.inf
    return first, second


def check_learning_rate(params):
    """Test both admissibility conditions; never raises for a violated condition."""
    first, second = _rate_conditions(params.Q, params.tau1, params.tau2, params.eta,
                                     params.constants.L)
    return RateCheck(bool(first >= 0 and second > 0), first, second)


def max_admissible_eta(zeta, alpha, tau1, tau2, L, tol=1e-15, max_iter=200):
    """Largest admissible learning rate, located by bisection.

    The admissible set is an interval ``(0, eta_max]``: both left-hand sides
    decrease in ``eta``.
    """
    if not L > 0:
        return math.inf
    q = _Q.of(zeta, int(alpha))
    V3 = _v3_q(q, tau1, tau2)
    if V3 == 0.0:
        return 1.0 / L
    lo, hi = 0.0, 1.0 / (4.0 * L * math.sqrt(V3))
    hi = min(hi, 1.0 / L)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        first, second = _rate_conditions(q, tau1, tau2, mid, L)
        if first >= 0 and second > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return lo


def _breakdown(q, params):
    c = params.constants
    eta, L = params.eta, c.L
    V1, V2, V3 = _v123_q(q, params.tau1, params.tau2, eta, L)
    first = 1.0 - eta * L - 8.0 * (eta * L) * (eta * L) * V2
    if first < 0:
        raise InadmissibleLearningRateError(
            f"1 - eta L - 8 eta^2 L^2 V2 = {first!r} < 0 at eta={eta!r}", eta
        )
    x2 = (eta * L) * (eta * L)
    m2 = float(np.sum(params.weights ** 2))
    return BoundBreakdown(
        Lambda=_lambda_q(q), V1=V1, V2=V2, V3=V3, admissible=True,
        optimization=2.0 * params.delta / (eta * params.K),
        sampling=eta * L * m2 * c.sigma ** 2,
        drift_noise=2.0 * x2 * V1 * c.sigma ** 2,
        drift_noniid=8.0 * x2 * V2 * c.kappa ** 2,
    )


def theorem_bound(params):
    """Right-hand side of the bound with its four addends.

    Raises
    ------
    InadmissibleLearningRateError
        If either admissibility condition fails.
    """
    return _breakdown(params.Q, params)


def monotonicity_scan(base, axis, grid):
    """Evaluate the bound along one axis with every other input held at ``base``.

    ``zeta_alpha`` sets ``zeta**alpha`` directly; ``alpha`` varies the number
    of sharing rounds at fixed ``zeta``. Inadmissible points are kept as rows
    with ``admissible=False`` and NaN quantities. Rows are sorted by value.
    """
    if axis not in SCAN_AXES:
        raise InvalidArgumentError(f"unknown scan axis {axis!r}; expected one of {SCAN_AXES}")
    rows = []
    for value in sorted(float(v) for v in grid):
        try:
            if axis == "zeta_alpha":
                q = _Q.of(value)
                p = replace(base, zeta=value, alpha=1)
            else:
                if value != int(value):
                    raise InvalidArgumentError(f"{axis} must be an integer, got {value!r}")
                kw = {axis: int(value)}
                if axis in ("tau1", "tau2"):
                    t1 = kw.get("tau1", base.tau1)
                    t2 = kw.get("tau2", base.tau2)
                    period = int(t1) * int(t2)
                    kw["K"] = -(-int(base.K) // period) * period
                p = replace(base, **kw)
                q = p.Q
            b = _breakdown(q, p)
            rows.append(ScanRow(axis, value, b.Lambda, b.V1, b.V2, b.V3, b.rhs_total, True))
        except (InadmissibleLearningRateError, InvalidArgumentError) as exc:
            nan = math.nan
            rows.append(ScanRow(axis, value, nan, nan, nan, nan, nan, False, str(exc)))
    return rows


def write_scan_csv(path_or_file, rows):
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for r in rows:
            w.writerow(r.row())

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def reference_gap(w_start, data, steps=5000, step_size=None):
    """Initial gap ``F(w_start) - F_ref`` against a full-batch gradient-descent reference.

    The default step size is ``1 / L_ce`` where ``L_ce = lambda_max(Z^T Z / N) / 2``
    bounds the curvature of the mean cross-entropy (``Z`` = features plus a
    bias column).

    Returns
    -------
    (gap, reference_loss, reference_model)
    """
    w = np.array(w_start, dtype=np.float64)
    if step_size is None:
        Z = np.hstack([data.features, np.ones((data.n_samples, 1))])
        step_size = 2.0 / float(np.linalg.eigvalsh(Z.T @ Z / data.n_samples)[-1])
    f0, _, _ = loss_and_gradient(w, data)
    best = f0
    for _ in range(int(steps)):
        value, g, _ = loss_and_gradient(w, data)
        best = min(best, value)
        w -= step_size * g
    value, _, _ = loss_and_gradient(w, data)
    best = min(best, value)
    return max(f0 - best, 0.0), best, w
