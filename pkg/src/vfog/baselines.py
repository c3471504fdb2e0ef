"""Non-accelerated comparison algorithms.

Three baselines, all driving the same run loop as the accelerated solver:

* :class:`PegSolver` -- the deterministic optimistic gradient scheme
  (past-extragradient): ``y^k = J(x^k - eta G y^{k-1})``,
  ``x^{k+1} = J(x^k - eta G y^k)``.  One full pass per iteration.

* :class:`VrEgSolver` -- extragradient with a loopless control-variate
  estimator.  Pinned update (documented here because several minor variants
  circulate): with snapshot ``w``, averaging weight ``1 - p`` on the iterate,

      xb  = (1 - p) x + p w
      y   = J(xb - eta G w)
      est = G w + Gb_B(y) - Gb_B(w)          (mini-batch B, no replacement)
      x+  = J(xb - eta est)
      w  <- x+ with probability p (full pass at the new snapshot)

* :class:`VrFrbsSolver` -- forward-reflected-backward with the same
  estimator and a lagged pair of snapshots ``(w, w_prev)``:

      est = G w + Gb_B(x) - Gb_B(w_prev)
      x+  = J(x - eta est)
      (w_prev, w) <- (w, x+) with probability p (full pass)

  With ``p = 1`` and a full batch both collapse to their deterministic
  counterparts bit for bit (a full batch short-circuits to ``eval_full``).
"""

from __future__ import annotations

import numpy as np

from .core import (
    ConfigError,
    DivergenceError,
    FiniteSumProblem,
    RngStream,
    check_finite,
)


def vreg_stepsize(p: float, L: float) -> float:
    """Stepsize rule for the variance-reduced extragradient: ``0.95 sqrt(p) / L``
    (the averaging weight is ``1 - p``)."""
    return 0.95 * np.sqrt(p) / L


def vrfrbs_stepsize(p: float, L: float) -> float:
    """Stepsize rule for the variance-reduced forward-reflected-backward:
    ``0.95 (1 - sqrt(1 - p)) / (2 L)``."""
    return 0.95 * (1.0 - np.sqrt(1.0 - p)) / (2.0 * L)


class _BaselineBase:
    def __init__(self, problem: FiniteSumProblem, x0: np.ndarray, eta: float):
        if not eta > 0:
            raise ConfigError("need eta > 0")
        check_finite(x0, "start point")
        x0 = np.asarray(x0, dtype=float)
        if not problem.resolvent.is_zero_map and not problem.resolvent.contains_zero_at(x0):
            raise ConfigError("infeasible start point: 0 not in T(x0)")
        self.problem = problem
        self.eta = eta
        self.x = x0.copy()
        self.v = np.zeros_like(x0)
        self.k = 0
        self.oracle_calls = 0

    def _full(self, x):
        self.oracle_calls += self.problem.n
        return self.problem.op.eval_full(x)

    def _batch_pair(self, idx, a, b):
        """Batch means at two points; a full batch short-circuits to full passes."""
        op, n = self.problem.op, self.problem.n
        if len(idx) >= n:
            self.oracle_calls += 2 * n
            return op.eval_full(a), op.eval_full(b)
        self.oracle_calls += 2 * len(idx)
        return op.eval_batch_mean(idx, a), op.eval_batch_mean(idx, b)

    def _guard(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise DivergenceError(f"non-finite iterate at k = {self.k}")


class PegSolver(_BaselineBase):
    """Deterministic optimistic gradient; each step costs one full pass."""

    def __init__(self, problem, x0, eta):
        super().__init__(problem, x0, eta)
        self._g_prev = self._full(self.x)   # value at the pre-initial query point

    def step(self):
        J, eta = self.problem.resolvent.apply, self.eta
        y = J(eta, self.x - eta * self._g_prev)
        gy = self._full(y)
        x_next = J(eta, self.x - eta * gy)
        self.v = (self.x - eta * gy - x_next) / eta
        self.x = x_next
        self._g_prev = gy
        self.k += 1
        self._guard()


class VrEgSolver(_BaselineBase):
    """Extragradient with loopless control-variate estimates (see module doc)."""

    def __init__(self, problem, x0, eta, prob: float, batch: int, rng: RngStream):
        super().__init__(problem, x0, eta)
        if not 0.0 < prob <= 1.0:
            raise ConfigError("need prob in (0, 1]")
        if not 1 <= batch <= problem.n:
            raise ConfigError("need 1 <= batch <= n")
        self.p = prob
        self.b = batch
        self.rng = rng
        self.w = self.x.copy()
        self._g_w = self._full(self.w)

    def step(self):
        prob, op, n = self.problem, self.problem.op, self.problem.n
        J, eta = prob.resolvent.apply, self.eta
        xb = (1.0 - self.p) * self.x + self.p * self.w
        y = J(eta, xb - eta * self._g_w)
        if self.b >= n:
            # full batch: the control variate cancels identically
            est = op.eval_full(y)
            self.oracle_calls += n
        else:
            idx = self.rng.indices(n, self.b, replace=False)
            g_y, g_wb = self._batch_pair(idx, y, self.w)
            est = self._g_w + g_y - g_wb
        x_next = J(eta, xb - eta * est)
        self.v = (xb - eta * est - x_next) / eta
        self.x = x_next
        if self.rng.bernoulli(self.p):
            self.w = self.x.copy()
            self._g_w = self._full(self.w)
        self.k += 1
        self._guard()


class VrFrbsSolver(_BaselineBase):
    """Forward-reflected-backward with loopless control-variate estimates."""

    def __init__(self, problem, x0, eta, prob: float, batch: int, rng: RngStream):
        super().__init__(problem, x0, eta)
        if not 0.0 < prob <= 1.0:
            raise ConfigError("need prob in (0, 1]")
        if not 1 <= batch <= problem.n:
            raise ConfigError("need 1 <= batch <= n")
        self.p = prob
        self.b = batch
        self.rng = rng
        self.w = self.x.copy()
        self.w_prev = self.x.copy()
        self._g_w = self._full(self.w)

    def step(self):
        prob, n = self.problem, self.problem.n
        J, eta = prob.resolvent.apply, self.eta
        idx = self.rng.indices(n, self.b, replace=False)
        g_x, g_wp = self._batch_pair(idx, self.x, self.w_prev)
        est = self._g_w + g_x - g_wp
        x_next = J(eta, self.x - eta * est)
        self.v = (self.x - eta * est - x_next) / eta
        self.x = x_next
        if self.rng.bernoulli(self.p):
            self.w_prev = self.w
            self.w = self.x.copy()
            self._g_w = self._full(self.w)
        self.k += 1
        self._guard()
