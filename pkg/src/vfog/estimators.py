"""Stochastic estimators of ``G y^k`` with exact oracle-call accounting.

Five estimator kinds are shipped:

* :class:`ExactEstimator` -- a full pass every iteration (zero error).
* :class:`MiniBatchEstimator` -- plain mini-batch averaging, optionally with
  an increasing batch-size schedule.
* :class:`LSvrgEstimator` -- loopless SVRG: a control variate anchored at a
  snapshot point that is refreshed by a Bernoulli coin flip.
* :class:`SagaEstimator` -- control variate against a stored table of ``n``
  component values.
* :class:`LSarahEstimator` -- a biased recursive estimator with a Bernoulli
  full-pass restart.

Each control-variate estimator exposes the closed-form constants
``(kappa_k, Theta_k, delta_k)`` of its one-step mean-square-error recursion

    E_k ||est_k - G y^k||^2 <= E_k[Delta_k]
    E_k[Delta_k] <= (1 - kappa_k) Delta_{k-1}
                    + Theta_k * (1/n) sum_i ||G_i y^k - G_i y^{k-1}||^2
                    + delta_k / t_k^2

through :meth:`Estimator.vr_constants`, and the module-level schedule helpers
produce batch sizes / probabilities that keep those constants admissible for
the accelerated solver.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import ConfigError, FiniteSumProblem, RngStream

BatchRule = Union[int, Callable[[int, int], int]]   # (k, epoch) -> b_k
ProbRule = Union[float, Callable[[int], float]]     # k -> p_k

# Guard so schedule values sitting exactly on an integer (e.g. 0.5 * 1000^(2/3))
# do not round down through representation error.
_FLOOR_EPS = 1e-9


def floor_stable(x: float) -> int:
    return int(math.floor(x + _FLOOR_EPS))


@dataclass
class VrConstants:
    """One-step error-recursion constants of the active estimator."""

    kappa: float
    theta: float
    delta: float
    tracker: str

    def __post_init__(self):
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigError("kappa must lie in (0, 1]")
        if self.theta < 0 or self.delta < 0:
            raise ConfigError("theta and delta must be nonnegative")


class Estimator(ABC):
    """Common interface: one estimate per solver iteration, exact call counts.

    ``oracle_calls`` counts component evaluations only (a full pass adds
    ``n``); residual probes are taken outside the estimator and never charged.
    """

    def __init__(self):
        self.oracle_calls = 0
        self._k = 0  # index of the next estimate() call

    @abstractmethod
    def init_full_pass(self, problem: FiniteSumProblem, y0: np.ndarray) -> np.ndarray:
        """Evaluate ``G y0`` with one full pass and seed internal memory.

        Returns the full-pass value, which the solver caches as the estimate
        at the pre-initial query point.
        """

    @abstractmethod
    def estimate(self, problem: FiniteSumProblem, y_k: np.ndarray,
                 y_prev: np.ndarray, rng: RngStream) -> np.ndarray:
        """Estimate ``G y^k`` where ``y_prev`` is the previous query point."""

    @abstractmethod
    def vr_constants(self, k: int) -> VrConstants:
        """Error-recursion constants at iteration ``k``."""

    def clone(self) -> "Estimator":
        """Deep snapshot of the estimator state (used by the property tests)."""
        import copy

        return copy.deepcopy(self)

    # -- shared schedule plumbing ------------------------------------------

    @staticmethod
    def _resolve_batch(rule: BatchRule, k: int, epoch: int, n: int) -> int:
        b = rule(k, epoch) if callable(rule) else int(rule)
        b = max(1, min(int(b), n))
        return b

    @staticmethod
    def _resolve_prob(rule: ProbRule, k: int) -> float:
        p = rule(k) if callable(rule) else float(rule)
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"probability schedule left (0, 1]: p_{k} = {p}")
        return p


class ExactEstimator(Estimator):
    """Returns ``G y^k`` itself; every iteration costs ``n`` calls."""

    def init_full_pass(self, problem, y0):
        self.oracle_calls += problem.n
        return problem.op.eval_full(y0)

    def estimate(self, problem, y_k, y_prev, rng):
        self._k += 1
        self.oracle_calls += problem.n
        return problem.op.eval_full(y_k)

    def vr_constants(self, k):
        return VrConstants(kappa=1.0, theta=0.0, delta=0.0, tracker="exact (zero error)")


class MiniBatchEstimator(Estimator):
    """Plain mini-batch mean over an i.i.d. sample of components.

    ``batch`` may be a constant or a rule ``(k, epoch) -> b_k`` (epoch is the
    completed-oracle-call count divided by ``n``, floored).  The mean-square
    error obeys ``E||e^k||^2 <= sigma2 / b_k``, reported through
    ``vr_constants`` as the pure-decay form ``delta_k / t_k^2`` with
    ``t_k = k + s + 1``.
    """

    def __init__(self, batch: BatchRule, sigma2: float = 0.0, s: float = 5.0,
                 replace: bool = True,
                 delta_schedule: Callable[[int], float] | None = None):
        super().__init__()
        self.batch = batch
        self.sigma2 = float(sigma2)
        self.s = float(s)
        self.replace = replace
        self.delta_schedule = delta_schedule
        self._last_batch = None

    def _batch_at(self, k: int, n: int) -> int:
        epoch = self.oracle_calls // n
        return self._resolve_batch(self.batch, k, epoch, n)

    def init_full_pass(self, problem, y0):
        self.oracle_calls += problem.n
        return problem.op.eval_full(y0)

    def estimate(self, problem, y_k, y_prev, rng):
        n = problem.n
        b = self._batch_at(self._k, n)
        self._k += 1
        self._last_batch = b
        idx = rng.indices(n, b, replace=self.replace)
        self.oracle_calls += b
        return problem.op.eval_batch_mean(idx, y_k)

    def vr_constants(self, k):
        b = self._last_batch if self._last_batch is not None else self._resolve_batch(
            self.batch, k, 0, 10**9)
        if self.delta_schedule is not None:
            delta = self.delta_schedule(k)
        else:
            t_k = k + self.s + 1.0
            delta = self.sigma2 * t_k * t_k / b
        return VrConstants(kappa=1.0, theta=0.0, delta=delta,
                           tracker=f"mini-batch MSE bound sigma^2/b_k (b={b})")


class LSvrgEstimator(Estimator):
    """Loopless SVRG: control variate anchored at a coin-flip snapshot.

    With probability ``p_k`` the snapshot is refreshed to the current query
    point with one full pass (the correction then cancels, so the iteration
    costs exactly ``n`` calls); otherwise the batch is evaluated at the query
    point and at the snapshot (``2 b_k`` calls).  Per-iteration expected cost
    is therefore ``n p_k + 2 (1 - p_k) b_k``.  The first estimate pins the
    snapshot to the first query point, so it returns the exact value.
    """

    def __init__(self, prob: ProbRule, batch: BatchRule):
        super().__init__()
        self.prob = prob
        self.batch = batch
        self.snapshot: np.ndarray | None = None
        self.g_snapshot: np.ndarray | None = None
        self._last = None  # (p, b) actually used

    def init_full_pass(self, problem, y0):
        self.oracle_calls += problem.n
        g0 = problem.op.eval_full(y0)
        self.snapshot = y0.copy()
        self.g_snapshot = g0.copy()
        return g0

    def _refresh(self, problem, y_k):
        self.snapshot = y_k.copy()
        self.g_snapshot = problem.op.eval_full(y_k)
        self.oracle_calls += problem.n

    def estimate(self, problem, y_k, y_prev, rng):
        n = problem.n
        k = self._k
        self._k += 1
        p = self._resolve_prob(self.prob, k)
        b = self._resolve_batch(self.batch, k, self.oracle_calls // n, n)
        self._last = (p, b)
        if k == 0:
            self._refresh(problem, y_k)
            return self.g_snapshot.copy()
        if rng.bernoulli(p):
            self._refresh(problem, y_k)
            return self.g_snapshot.copy()
        idx = rng.indices(n, b)
        self.oracle_calls += 2 * b
        op = problem.op
        return self.g_snapshot + op.eval_batch_mean(idx, y_k) - op.eval_batch_mean(idx, self.snapshot)

    def vr_constants(self, k):
        if self._last is not None and k + 1 == self._k:
            p, b = self._last
        else:
            p = self._resolve_prob(self.prob, k)
            b = self._resolve_batch(self.batch, k, 0, 10**9)
        return VrConstants(kappa=p / 2.0, theta=4.0 / (b * p), delta=0.0,
                           tracker="(1/b_k) mean_i ||G_i y^k - G_i ybar^k||^2")


class SagaEstimator(Estimator):
    """Control variate against a dense table of stored component values.

    Two table-update rules are supported.  ``update_at="prev"`` (default)
    follows the defining recursion: sampled rows are first overwritten with
    the component values at the *previous* query point and the estimate then
    combines the table mean with the batch correction (two batch evaluations
    per iteration).  ``update_at="current"`` is the classical one-batch rule:
    the estimate corrects the old table mean with fresh values at the current
    query point, which are then written into the table; this is the variant
    the benchmark presets run, at roughly half the per-iteration oracle cost.
    The table is ``n x dim`` and lives in memory.
    """

    def __init__(self, batch: BatchRule, replace: bool = True,
                 update_at: str = "prev"):
        super().__init__()
        if update_at not in ("prev", "current"):
            raise ConfigError("update_at must be 'prev' or 'current'")
        self.batch = batch
        self.replace = replace
        self.update_at = update_at
        self.table: np.ndarray | None = None
        self.table_mean: np.ndarray | None = None
        self._n = None
        self._mean_age = 0
        self._last_batch = None

    def init_full_pass(self, problem, y0):
        op = problem.op
        self.table = op.eval_components(np.arange(op.n), y0)
        self.table_mean = self.table.mean(axis=0)
        self._n = op.n
        self.oracle_calls += op.n
        return self.table_mean.copy()

    def _write_rows(self, uniq, rows):
        self.table_mean = self.table_mean + (rows - self.table[uniq]).sum(axis=0) / self._n
        self.table[uniq] = rows
        self._mean_age += 1
        if self._mean_age >= 256:  # shed accumulated float drift
            self.table_mean = self.table.mean(axis=0)
            self._mean_age = 0

    def estimate(self, problem, y_k, y_prev, rng):
        op, n = problem.op, problem.n
        raw = self.batch(self._k, self.oracle_calls // n) if callable(self.batch) \
            else int(self.batch)
        if not self.replace and raw > n:
            raise ConfigError("batch larger than n in without-replacement mode")
        b = max(1, min(int(raw), n))
        self._k += 1
        self._last_batch = b
        idx = rng.indices(n, b, replace=self.replace)
        uniq = np.unique(idx)
        if self.update_at == "prev":
            # Overwrite sampled rows at the previous query point, then use them.
            fresh = op.eval_components(uniq, y_prev)
            self.oracle_calls += len(uniq)
            self._write_rows(uniq, fresh)
            batch_now = op.eval_batch_mean(idx, y_k)
            self.oracle_calls += b
            batch_ref = self.table[idx].mean(axis=0)
            return self.table_mean + batch_now - batch_ref
        # Classical rule: estimate from the old rows, then store current values.
        rows_now = op.eval_components(uniq, y_k)
        self.oracle_calls += len(uniq)
        pos = np.searchsorted(uniq, idx)
        batch_now = rows_now[pos].mean(axis=0)
        batch_ref = self.table[idx].mean(axis=0)
        est = self.table_mean + batch_now - batch_ref
        self._write_rows(uniq, rows_now)
        return est

    def vr_constants(self, k):
        if self._n is None:
            raise ConfigError("estimator not initialized")
        b = self._last_batch if self._last_batch is not None else self._resolve_batch(
            self.batch, k, 0, self._n)
        return VrConstants(kappa=b / (2.0 * self._n), theta=5.0 * self._n / (b * b), delta=0.0,
                           tracker="(1/(n b_k)) sum_i ||G_i y^k - table_i||^2")


class LSarahEstimator(Estimator):
    """Recursive (biased) estimator with Bernoulli full-pass restarts.

    With probability ``p_k`` the running value is reset to an exact full pass;
    otherwise it accumulates the batch difference between the current and the
    previous query point.  With ``p_k = 1`` the path coincides with the exact
    estimator bit for bit.
    """

    def __init__(self, prob: ProbRule, batch: BatchRule):
        super().__init__()
        self.prob = prob
        self.batch = batch
        self.value: np.ndarray | None = None
        self._last = None

    def init_full_pass(self, problem, y0):
        self.oracle_calls += problem.n
        self.value = problem.op.eval_full(y0)
        return self.value.copy()

    def estimate(self, problem, y_k, y_prev, rng):
        op, n = problem.op, problem.n
        k = self._k
        self._k += 1
        p = self._resolve_prob(self.prob, k)
        b = self._resolve_batch(self.batch, k, self.oracle_calls // n, n)
        self._last = (p, b)
        if rng.bernoulli(p):
            self.value = op.eval_full(y_k)
            self.oracle_calls += n
        else:
            idx = rng.indices(n, b)
            self.oracle_calls += 2 * b
            self.value = self.value + op.eval_batch_mean(idx, y_k) - op.eval_batch_mean(idx, y_prev)
        return self.value.copy()

    def vr_constants(self, k):
        if self._last is not None and k + 1 == self._k:
            p, b = self._last
        else:
            p = self._resolve_prob(self.prob, k)
            b = self._resolve_batch(self.batch, k, 0, 10**9)
        return VrConstants(kappa=p, theta=1.0 / b, delta=0.0,
                           tracker="||est_k - G y^k||^2")


# ---------------------------------------------------------------------------
# Batch-size / probability schedules
# ---------------------------------------------------------------------------


def minibatch_schedule(sigma2: float, delta: float, nu: float, s: float, k: int,
                       variant: str = "power") -> int:
    """Increasing mini-batch size driving the estimator error below
    ``delta_k / t_k^2``.

    ``power`` uses ``b_k = floor(sigma2 (k+s)^(3+nu) / delta)``; ``logpower``
    uses ``b_k = floor(sigma2 (k+s)^3 log(k+s) / delta)``.  Clamped to >= 1.
    """
    if not delta > 0:
        raise ConfigError("delta must be positive")
    if not sigma2 > 0:
        raise ConfigError("sigma2 must be positive")
    if not nu > 0 and variant == "power":
        raise ConfigError("nu must be positive")
    if s < 2:
        raise ConfigError("need s >= 2")
    base = k + s
    if variant == "power":
        val = sigma2 * base ** (3.0 + nu) / delta
    elif variant == "logpower":
        val = sigma2 * base ** 3 * math.log(base) / delta
    else:
        raise ConfigError(f"unknown mini-batch schedule variant {variant!r}")
    return max(1, int(math.floor(val)))


def schedule_svrg(n: int, nu: float, c2: float, Gamma: float, eta: float,
                  rho_c: float, s: float, k: int) -> tuple[int, float]:
    """Theoretical snapshot probability and batch size for loopless SVRG.

    Requires ``n`` large enough for the fixed batch to fit; otherwise raises
    (callers may fall back to the practical ``0.5 n^{-1/3}`` / ``0.5 n^{2/3}``
    values).
    """
    if not 0 < nu < 0.5:
        raise ConfigError("nu must lie in (0, 1/2)")
    if not rho_c > 0:
        raise ConfigError("rho_c must be positive for control-variate schedules")
    n_min = max((2.0 * c2) ** (1.0 / nu),
                (8.0 * Gamma * eta / (c2 * c2 * rho_c)) ** (1.0 / (1.0 - 2.0 * nu)))
    if n < n_min:
        raise ConfigError(
            f"n too small for theoretical SVRG schedule (need n >= {n_min:.6g}); "
            "fall back to the practical values")
    b = floor_stable(8.0 * Gamma * eta * n ** (2.0 * nu) / (c2 * c2 * rho_c))
    if k <= floor_stable(4.0 * n ** nu / c2 - s):
        p = c2 / n ** nu + 4.0 / (k + s + 1.0)
    else:
        p = 2.0 * c2 / n ** nu
    if not 1 <= b <= n:
        raise ConfigError(f"SVRG batch schedule out of range: b = {b}")
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"SVRG probability schedule out of range: p_{k} = {p}")
    return b, p


def schedule_saga(n: int, Gamma: float, eta: float, rho_c: float, s: float,
                  k: int) -> int:
    """Theoretical decreasing batch size for the table estimator.

    The flat tail is capped at the value taken just before the branch switch:
    the displayed tail can exceed it by a rounding margin, which would break
    the one-step monotonicity window
    ``b_{k-1} - b_k b_{k-1} / (4n) <= b_k <= b_{k-1}`` the error recursion
    relies on.  The window is validated on every call.
    """
    if not rho_c > 0:
        raise ConfigError("rho_c must be positive for control-variate schedules")
    if n < 80.0 * Gamma * eta / rho_c:
        raise ConfigError(
            f"n too small for theoretical SAGA schedule (need n >= "
            f"{80.0 * Gamma * eta / rho_c:.6g}); fall back to the practical values")
    c1 = (10.0 * Gamma * eta / rho_c) ** (1.0 / 3.0)
    switch = floor_stable(4.0 * n ** (1.0 / 3.0) / c1 - s)

    def raw(j: int) -> int:
        head = floor_stable(c1 * n ** (2.0 / 3.0) + 4.0 * n / (min(j, switch) + s + 1.0))
        if j <= switch:
            return min(head, n)
        return min(floor_stable(2.0 * c1 * n ** (2.0 / 3.0)), head, n)

    b = raw(k)
    if b < 1:
        raise ConfigError("SAGA batch schedule collapsed below 1")
    if k >= 1:
        b_prev = raw(k - 1)
        if not (b_prev - b * b_prev / (4.0 * n) <= b <= b_prev):
            raise ConfigError(
                f"SAGA batch schedule violates its monotonicity window at k={k}")
    return b


def schedule_sarah(n: int, nu: float, c1: float, Gamma: float, eta: float,
                   rho_c: float, s: float, k: int,
                   fixed: bool = False) -> tuple[int, float]:
    """Theoretical restart probability and batch size for the recursive
    estimator.

    ``fixed=True`` freezes the probability at its k-independent value, which
    is more convenient in practice.  The probability is computed from the
    floored batch size so the admissibility check holds exactly.
    """
    if not 0 < nu <= 1:
        raise ConfigError("nu must lie in (0, 1]")
    if not rho_c > 0:
        raise ConfigError("rho_c must be positive for control-variate schedules")
    if not 0 < c1 <= n ** (1.0 - nu):
        raise ConfigError(f"need c1 in (0, n^(1-nu)] = (0, {n ** (1.0 - nu):.6g}]")
    if n < (2.0 * Gamma * eta / (c1 * rho_c)) ** (1.0 / nu):
        raise ConfigError(
            f"n too small for theoretical SARAH schedule (need n >= "
            f"{(2.0 * Gamma * eta / (c1 * rho_c)) ** (1.0 / nu):.6g}); "
            "fall back to the practical values")
    b = floor_stable(c1 * n ** nu)
    # written exactly as the admissibility check evaluates its right-hand side,
    # so the comparison holds bit for bit
    base = eta * Gamma * (1.0 / b) / rho_c
    if fixed:
        p = base + 2.0 / (s + 1.0)
    elif k <= floor_stable(2.0 * c1 * rho_c * n ** nu / (Gamma * eta) - s):
        p = base + 2.0 / (k + s + 1.0)
    else:
        p = 2.0 * base
    p = min(p, 1.0)
    if not (1 <= b <= n and 0.0 < p <= 1.0):
        raise ConfigError(f"SARAH schedule out of range: b = {b}, p_{k} = {p}")
    return b, p


def check_kappa_theta(vrc: VrConstants, eta: float, rho_c: float, Gamma: float,
                      k: int, s: float) -> bool:
    """Admissibility of the estimator constants for the accelerated solver:
    ``kappa_k >= eta * Gamma * Theta_k / rho_c + 2 / (k + s + 1)``."""
    if rho_c <= 0:
        raise ConfigError("condition undefined for rho_c = 0; use the general regime")
    return vrc.kappa >= eta * Gamma * vrc.theta / rho_c + 2.0 / (k + s + 1.0)


# ---------------------------------------------------------------------------
# Practical parameter rules used by the benchmark presets
# ---------------------------------------------------------------------------


def practical_prob_svrg(n: int) -> float:
    """Snapshot probability ``0.5 n^{-1/3}`` (0.05 at n = 1000)."""
    return 0.5 * n ** (-1.0 / 3.0)


def practical_prob_sarah(n: int) -> float:
    """Restart probability ``0.5 n^{-1/2}`` (~0.016 at n = 1000)."""
    return 0.5 / math.sqrt(n)


def practical_batch_cv(n: int) -> int:
    """Batch size ``floor(0.5 n^{2/3})`` (50 at n = 1000)."""
    return floor_stable(0.5 * n ** (2.0 / 3.0))


def practical_batch_sarah(n: int) -> int:
    """Batch size ``floor(0.5 n^{1/2})`` (15 at n = 1000)."""
    return floor_stable(0.5 * math.sqrt(n))


def sgd_epoch_batch_rule(n: int, scale: float = 1.0) -> Callable[[int, int], int]:
    """Increasing mini-batch rule ``max(5, min(0.05 (l+1)^3, n))`` over epochs ``l``.

    ``scale`` multiplies the batch (the half-size ablation keeps it at 1)."""

    def rule(k: int, epoch: int) -> int:
        b = max(5.0, min(0.05 * (epoch + 1) ** 3, float(n)))
        return max(1, min(n, floor_stable(scale * b)))

    return rule
