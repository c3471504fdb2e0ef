"""The accelerated optimistic-gradient iteration and its run harness.

One iteration of the method, written with the resolvent ``J = (I + eta*T)^{-1}``
and the estimator value ``g_k ~= G y^k`` (``d_k = g_{k-1} + v^k`` is the
cached search direction):

    t_k   = k + s + 1
    xh_k  = (s / t_k) z^k + ((t_k - s) / t_k) x^k
    y^k   = xh_k - (eta - beta_k) d_k
    x^{k+1} = J(xh_k - eta g_k + beta_k d_k)
    z^{k+1} = z^k - (gamma_k / s) d_k
    v^{k+1} = (xh_k - x^{k+1} + beta_k d_k) / eta - g_k

with the parameter schedules

    gamma_k = eta (k + s) / ((s - 2)(k + s + 1))
    beta_k  = [ (s - 2) eta / (4 (s - 1)) + 2 rho_n ] (k + 1) / (k + s + 1)
              - gamma_k / (k + s + 1).

``beta_k`` is applied verbatim even when it is negative (which happens for
small ``k`` when ``rho_n = 0``); a log line flags the first occurrence.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigError,
    DivergenceError,
    FiniteSumProblem,
    NonFiniteError,
    RngStream,
    check_finite,
    fb_residual,
    natural_residual,
)
from .estimators import Estimator

logger = logging.getLogger(__name__)

DIVERGENCE_GUARD = 1e12  # on the squared residual


# ---------------------------------------------------------------------------
# Parameter schedules and constants
# ---------------------------------------------------------------------------


@dataclass
class ScheduleParams:
    """Momentum horizon ``s``, stepsize ``eta``, and monotonicity defects."""

    s: float
    eta: float
    rho_n: float = 0.0
    rho_c: float = 0.0

    def __post_init__(self):
        if not self.s > 2:
            raise ConfigError("need s > 2")
        if not self.eta > 0:
            raise ConfigError("need eta > 0")
        if self.rho_n < 0 or self.rho_c < 0:
            raise ConfigError("rho_n and rho_c must be nonnegative")

    def t(self, k: int) -> float:
        return k + self.s + 1.0

    def gamma(self, k: int) -> float:
        return self.eta * (k + self.s) / ((self.s - 2.0) * (k + self.s + 1.0))

    def beta(self, k: int) -> float:
        s, eta = self.s, self.eta
        lead = ((s - 2.0) * eta / (4.0 * (s - 1.0)) + 2.0 * self.rho_n)
        return lead * (k + 1.0) / (k + s + 1.0) - self.gamma(k) / (k + s + 1.0)

    def warn_if_outside_range(self, L: float, lam_active: float) -> None:
        """Log (not raise) when ``eta`` leaves the admissible stepsize window;
        the benchmark presets deliberately run outside it."""
        lo = 8.0 * (self.s - 1.0) * self.rho_n / (3.0 * self.s - 2.0)
        hi = lam_active / L
        if not (lo <= self.eta < hi):
            logger.warning("eta = %g outside the admissible window [%g, %g)",
                           self.eta, lo, hi)


@dataclass
class ConstantsBundle:
    """Closed-form constants of the convergence guarantee.

    ``regime = "general"`` covers exact / decaying-error estimators
    (``kappa``/``theta`` fixed); ``regime = "control-variate"`` covers the
    variance-reduced estimators (constants depend on ``alpha`` only).
    """

    regime: str
    s: float
    omega: float
    lam: float
    mu: float
    lambda0: float | None = None          # general regime
    Gamma: float | None = None            # control-variate regime
    lambda0_hat: float | None = None
    c_bar: float | None = None

    def rate_coefficient(self, eta: float, rho_n: float) -> float:
        """Leading constant of the ``1/(k+s)^2`` residual bound."""
        s = self.s
        den = (3.0 * s * s - 8.0 * s - 1.0) * eta - 8.0 * (s - 1.0) * (s - 2.0) * rho_n
        if den <= 0:
            raise ConfigError("rate coefficient undefined: denominator nonpositive")
        return 16.0 * (s - 1.0) * (s - 2.0) * eta / den


def initial_radius_sq(s: float, eta: float, res0: float, dist0: float) -> float:
    """Initial-condition radius of the rate bound, from ``||Gx^0 + v^0||`` and
    ``||x^0 - x_star||``."""
    a = ((3.0 * s - 2.0) * (s - 2.0) * s * s - 4.0 * (s - 1.0) ** 2) / (8.0 * (s - 1.0))
    b = s * (s * s - 1.0) * (s - 2.0) / (2.0 * eta * eta)
    return a * res0 * res0 + b * dist0 * dist0


def constants_general(s: float, kappa: float, Theta: float) -> ConstantsBundle:
    """Constants for the general error-bound regime.

    Needs ``kappa > (2s+1)/(s+1)^2`` (otherwise the leading denominator is
    nonpositive) and warns for ``s <= 7``, where the guarantee is not
    established.
    """
    if not s > 2:
        raise ConfigError("need s > 2")
    if s <= 7:
        logger.warning("s = %g is outside the analyzed range (s > 7) for the "
                       "general regime", s)
    if not kappa <= 1.0:
        raise ConfigError("kappa must be <= 1")
    den = s * s - (1.0 - kappa) * (s + 1.0) ** 2
    if den <= 0:
        raise ConfigError(
            f"denominator nonpositive: need kappa > (2s+1)/(s+1)^2 = "
            f"{(2.0 * s + 1.0) / (s + 1.0) ** 2:.6g}")
    lambda0 = s * s * (16.0 * s - 18.0) / ((s - 2.0) * den)
    omega = 1.0 + 2.0 * (11.0 * s - 13.0) / (s - 2.0) \
        + 2.0 * lambda0 * Theta * (s + 1.0) ** 2 / (s * s)
    lam = 1.0 / math.sqrt(2.0 * (1.0 + omega) * (s + 1.0))
    mu = (3.0 * s - 2.0) * lam / (8.0 * (s - 1.0))
    return ConstantsBundle(regime="general", s=s, omega=omega, lam=lam, mu=mu,
                           lambda0=lambda0)


def constants_vr(s: float, alpha: float, c_bar: float = 1.0,
                 gamma_c: float = 19.0) -> ConstantsBundle:
    """Constants for the control-variate regime.

    ``gamma_c`` is the constant term of the ``(16 s - gamma_c)`` factor in
    ``Gamma``; 19 is the published value and 18 the variant used in the
    derivation of the batch schedules -- both are admissible, so the factor is
    exposed as an override.
    """
    if not s > 2:
        raise ConfigError("need s > 2")
    if not 0.0 <= alpha < 1.0:
        raise ConfigError("alpha = 1 has no control-variate constants; "
                          "use the general regime")
    if not c_bar > 0:
        raise ConfigError("need c_bar > 0")
    omega = (3.0 * s - 2.0) / (2.0 * (1.0 - alpha) * (s - 1.0)) \
        + 2.0 * (11.0 * s - 13.0) / (s - 2.0)
    lam = 1.0 / math.sqrt(2.0 * (s + 1.0) * (1.0 + omega))
    mu = lam * (3.0 * s - 2.0) / (8.0 * (s - 1.0))
    Gamma = 3.0 * s * s * (16.0 * s - gamma_c) / ((s - 2.0) * (s + 1.0))
    lambda0_hat = (16.0 * s - gamma_c) / (c_bar * (s - 2.0))
    return ConstantsBundle(regime="control-variate", s=s, omega=omega, lam=lam,
                           mu=mu, Gamma=Gamma, lambda0_hat=lambda0_hat, c_bar=c_bar)


@dataclass
class StepsizeRange:
    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return self.lo >= self.hi


def stepsize_range(s: float, L: float, rho_n: float,
                   lam_active: float) -> StepsizeRange:
    """Admissible stepsize window ``[8(s-1) rho_n / (3s-2), lam / L)``.

    Raises when the window is strictly negative (``L * rho_n`` too large for
    the regime's ``mu``); a zero-width window is returned with ``empty`` set.
    """
    if not L > 0:
        raise ConfigError("need L > 0")
    lo = 8.0 * (s - 1.0) * rho_n / (3.0 * s - 2.0)
    hi = lam_active / L
    if lo > hi * (1.0 + 1e-12):
        raise ConfigError(
            f"empty stepsize range: lower bound {lo:.6g} exceeds lam/L = {hi:.6g} "
            "(the product L * rho_n violates the admissible level)")
    return StepsizeRange(lo=lo, hi=hi)


# ---------------------------------------------------------------------------
# Solver state and step
# ---------------------------------------------------------------------------


class VfogSolver:
    """Single-owner solver state driving the accelerated iteration.

    The start point must satisfy ``0 in T x^0`` (checked through the
    resolvent); the maintained witness starts at ``v^0 = 0`` and afterwards
    the resolvent identity keeps ``v^{k+1} in T x^{k+1}`` automatically.
    """

    def __init__(self, problem: FiniteSumProblem, x0: np.ndarray,
                 params: ScheduleParams, estimator: Estimator,
                 rng: RngStream):
        check_finite(x0, "start point")
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (problem.dim,):
            raise ConfigError(f"start point has dim {x0.shape}, expected ({problem.dim},)")
        if not problem.resolvent.is_zero_map and not problem.resolvent.contains_zero_at(x0):
            raise ConfigError("infeasible start point: 0 not in T(x0), cannot set v0 = 0")
        self.problem = problem
        self.params = params
        self.estimator = estimator
        self.rng = rng
        self.x = x0.copy()
        self.z = x0.copy()
        self.y_prev = x0.copy()
        self.v = np.zeros_like(x0)
        self.g_prev = estimator.init_full_pass(problem, x0)
        self.k = 0
        self._beta_flagged = False

    @property
    def eta(self) -> float:
        return self.params.eta

    @property
    def oracle_calls(self) -> int:
        return self.estimator.oracle_calls

    def step(self) -> None:
        p, prm = self.problem, self.params
        k = self.k
        s, eta = prm.s, prm.eta
        t_k = prm.t(k)
        beta_k = prm.beta(k)
        gamma_k = prm.gamma(k)
        if beta_k < 0 and not self._beta_flagged:
            logger.warning("beta_k is negative for small k (beta_%d = %g); "
                           "the schedule is applied verbatim", k, beta_k)
            self._beta_flagged = True

        d = self.g_prev + self.v
        x_hat = (s / t_k) * self.z + ((t_k - s) / t_k) * self.x
        y = x_hat - (eta - beta_k) * d
        g = self.estimator.estimate(p, y, self.y_prev, self.rng)
        x_next = p.resolvent.apply(eta, x_hat - eta * g + beta_k * d)
        self.z = self.z - (gamma_k / s) * d
        if p.resolvent.is_zero_map:
            self.v = np.zeros_like(self.x)   # the resolvent identity gives exactly 0
        else:
            self.v = (x_hat - x_next + beta_k * d) / eta - g
        self.x = x_next
        self.y_prev = y
        self.g_prev = g
        self.k = k + 1
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise DivergenceError(f"non-finite iterate at k = {self.k}")


# ---------------------------------------------------------------------------
# Run loop with trace recording
# ---------------------------------------------------------------------------


@dataclass
class TraceRecord:
    k: int
    oracle_calls: int
    epoch: float
    residual_sq: float
    fb_residual_sq: float
    wallclock_ns: int


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    failed: bool = False
    failure_reason: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class Budget:
    """Stop after ``max_epochs`` worth of oracle calls and/or once the
    natural residual (probed) drops below ``target_residual``."""

    max_epochs: float | None = None
    target_residual: float | None = None

    def __post_init__(self):
        if self.max_epochs is None and self.target_residual is None:
            raise ConfigError("budget needs max_epochs or target_residual")


def run(problem: FiniteSumProblem, stepper, budget: Budget,
        probe_cadence: float = 1.0, probe_lambda: float | None = None) -> RunTrace:
    """Drive any stepper (accelerated or baseline) and record residual probes.

    Probes are out-of-band full passes taken at iteration boundaries each time
    the epoch counter crosses a multiple of ``probe_cadence``; they are not
    charged to the oracle counter.  A probe computes one full pass and derives
    both residuals from it.
    """
    if probe_cadence <= 0:
        raise ConfigError("probe cadence must be positive")
    n = problem.n
    lam = probe_lambda if probe_lambda is not None else stepper.eta
    trace = RunTrace()
    t0 = time.perf_counter_ns()

    def probe() -> float:
        gx = problem.op.eval_full(stepper.x)
        res = natural_residual(problem, stepper.x, stepper.v, gx=gx)
        fbr = fb_residual(problem, stepper.x, lam, gx=gx)
        trace.records.append(TraceRecord(
            k=stepper.k, oracle_calls=stepper.oracle_calls,
            epoch=stepper.oracle_calls / n,
            residual_sq=res * res, fb_residual_sq=fbr * fbr,
            wallclock_ns=time.perf_counter_ns() - t0))
        return res

    res = probe()
    if budget.target_residual is not None and res <= budget.target_residual:
        return trace
    next_probe = probe_cadence * (
        math.floor(stepper.oracle_calls / n / probe_cadence + 1e-12) + 1)
    while budget.max_epochs is None or stepper.oracle_calls < budget.max_epochs * n - 1e-9:
        try:
            stepper.step()
        except (DivergenceError, NonFiniteError) as exc:
            trace.failed = True
            trace.failure_reason = str(exc)
            return trace
        epoch = stepper.oracle_calls / n
        if epoch >= next_probe - 1e-12 or (
                budget.max_epochs is not None and epoch >= budget.max_epochs - 1e-9):
            res = probe()
            next_probe = probe_cadence * (math.floor(epoch / probe_cadence + 1e-12) + 1)
            if not math.isfinite(res) or res * res > DIVERGENCE_GUARD:
                trace.failed = True
                trace.failure_reason = f"residual guard tripped at k = {stepper.k}"
                return trace
            if budget.target_residual is not None and res <= budget.target_residual:
                return trace
    return trace


def rate_certificate(trace: RunTrace, k_lo: int, k_hi: int) -> float:
    """Least-squares slope of ``log(residual^2)`` against ``log k`` over the
    probed records with ``k_lo <= k <= k_hi`` and positive residual."""
    pts = [(r.k, r.residual_sq) for r in trace.records
           if k_lo <= r.k <= k_hi and r.residual_sq > 0]
    if len(pts) < 10:
        raise ConfigError(
            f"rate certificate needs >= 10 usable records in [{k_lo}, {k_hi}], "
            f"got {len(pts)}")
    ks = np.log([p[0] for p in pts])
    rs = np.log([p[1] for p in pts])
    slope, _ = np.polyfit(ks, rs, 1)
    return float(slope)
