"""Monte-Carlo checks shared by the estimator tests and the acceptance suite.

These routines are the independent side of the dual checks: expected values
and error trackers are recomputed by enumeration over all components, never
through the estimator code paths they validate.
"""

import numpy as np

from vfog.core import RngStream
from vfog.estimators import LSarahEstimator, LSvrgEstimator, SagaEstimator


def all_components(problem, x):
    """Enumerated component values, one row per component (test-side oracle)."""
    return np.stack([problem.op.eval_component(i, x) for i in range(problem.n)])


def exact_mean(problem, x):
    return all_components(problem, x).mean(axis=0)


def unbiasedness_gap(est_factory, problem, y_query, y_prev, n_draws, seed):
    """Max per-coordinate |MC mean - exact| measured in standard errors.

    ``est_factory`` must return a freshly prepared estimator whose next
    estimate is taken at ``y_query`` with previous query point ``y_prev``.
    """
    base = est_factory()
    target = exact_mean(problem, y_query)
    acc = np.zeros_like(target)
    acc2 = np.zeros_like(target)
    for rep in range(n_draws):
        est = base.clone()
        val = est.estimate(problem, y_query, y_prev, RngStream(seed, "mc", rep))
        acc += val
        acc2 += val * val
    mean = acc / n_draws
    var = np.maximum(acc2 / n_draws - mean * mean, 0.0)
    se = np.sqrt(var / n_draws)
    gap = np.abs(mean - target)
    return np.max(gap / (se + 1e-14)), gap, se


def tracker_value(est, problem, y_query):
    """The estimator's stated error tracker, enumerated from its memory."""
    comps = all_components(problem, y_query)
    if isinstance(est, LSvrgEstimator):
        snap = all_components(problem, est.snapshot)
        _, b = est._last if est._last else (None, None)
        return float(np.sum((comps - snap) ** 2) / problem.n / b)
    if isinstance(est, SagaEstimator):
        b = est._last_batch
        return float(np.sum((comps - est.table) ** 2) / (problem.n * b))
    if isinstance(est, LSarahEstimator):
        return float(np.sum((est.value - comps.mean(axis=0)) ** 2))
    raise TypeError(f"no tracker for {type(est).__name__}")


def tracker_value_at(est, problem, y_query, batch):
    """Tracker with an explicit batch size (pre-step state)."""
    comps = all_components(problem, y_query)
    if isinstance(est, LSvrgEstimator):
        snap = all_components(problem, est.snapshot)
        return float(np.sum((comps - snap) ** 2) / problem.n / batch)
    if isinstance(est, SagaEstimator):
        return float(np.sum((comps - est.table) ** 2) / (problem.n * batch))
    if isinstance(est, LSarahEstimator):
        return float(np.sum((est.value - comps.mean(axis=0)) ** 2))
    raise TypeError(f"no tracker for {type(est).__name__}")


def one_step_recursion_margin(est_prepared, problem, y_next, y_prev, batch,
                              n_draws, seed):
    """Monte-Carlo check of the one-step error recursion.

    Returns ``(lhs_mean, lhs_se, rhs)`` for

        E[D_k] <= (1 - kappa_k) D_{k-1}
                  + Theta_k * (1/n) sum_i ||G_i y_next - G_i y_prev||^2
    """
    d_prev = tracker_value_at(est_prepared, problem, y_prev, batch)
    comp_next = all_components(problem, y_next)
    comp_prev = all_components(problem, y_prev)
    drift = float(np.sum((comp_next - comp_prev) ** 2) / problem.n)

    vals = np.empty(n_draws)
    k_probe = est_prepared._k
    for rep in range(n_draws):
        est = est_prepared.clone()
        est.estimate(problem, y_next, y_prev, RngStream(seed, "vr", rep))
        vals[rep] = tracker_value(est, problem, y_next)
    vrc = est.vr_constants(k_probe)
    lhs_mean = float(vals.mean())
    lhs_se = float(vals.std(ddof=1) / np.sqrt(n_draws))
    rhs = (1.0 - vrc.kappa) * d_prev + vrc.theta * drift + vrc.delta
    return lhs_mean, lhs_se, rhs
