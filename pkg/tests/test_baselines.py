import numpy as np
import pytest

from vfog.baselines import (
    PegSolver,
    VrEgSolver,
    VrFrbsSolver,
    vreg_stepsize,
    vrfrbs_stepsize,
)
from vfog.core import ConfigError, RngStream
from vfog.problems import build_linear_monotone
from vfog.solver import Budget, rate_certificate, run

from conftest import make_exact_zero_problem


def test_stepsize_rules():
    assert vreg_stepsize(0.05, 2.0) == pytest.approx(0.95 * np.sqrt(0.05) / 2.0)
    assert vrfrbs_stepsize(0.05, 2.0) == pytest.approx(
        0.95 * (1.0 - np.sqrt(0.95)) / 4.0)


def test_peg_stationary_at_solution():
    prob = make_exact_zero_problem()
    x_star = prob.extra["x_star"]
    solver = PegSolver(prob, x_star, eta=0.4)
    for _ in range(20):
        solver.step()
        assert np.array_equal(solver.x, x_star)


def test_peg_reduces_to_optimistic_gradient_without_set_valued_part():
    prob = build_linear_monotone(p=6, n=3, seed=4)
    eta = 0.3 / prob.meta.L
    solver = PegSolver(prob, prob.extra["x0"], eta)

    x = prob.extra["x0"].copy()
    g_prev = prob.op.eval_full(x)
    for _ in range(30):
        solver.step()
        y = x - eta * g_prev
        gy = prob.op.eval_full(y)
        x = x - eta * gy
        g_prev = gy
        np.testing.assert_allclose(solver.x, x, rtol=1e-13, atol=1e-15)


def test_peg_converges_on_monotone_affine():
    prob = build_linear_monotone(p=12, n=4, seed=6)
    solver = PegSolver(prob, prob.extra["x0"], eta=0.3 / prob.meta.L)
    trace = run(prob, solver, Budget(max_epochs=1000))
    res = trace.column("residual_sq")
    assert res[-1] < 1e-3 * res[0]


def test_peg_last_iterate_rate_is_at_least_linear_window():
    # weak symmetric part: slow linear decay, no floor inside the window
    prob = build_linear_monotone(p=12, n=4, seed=16, skew_scale=6.0)
    solver = PegSolver(prob, prob.extra["x0"], eta=0.5 / prob.meta.L)
    trace = run(prob, solver, Budget(max_epochs=10_000))
    slope = rate_certificate(trace, 100, 10_000)
    assert slope <= -0.8


def _det_eg_reference(prob, x0, eta, iters):
    x = x0.copy()
    xs = []
    for _ in range(iters):
        y = x - eta * prob.op.eval_full(x)
        x = x - eta * prob.op.eval_full(y)
        xs.append(x.copy())
    return xs


def _det_frbs_reference(prob, x0, eta, iters):
    x = x0.copy()
    g_prev = prob.op.eval_full(x0)
    xs = []
    for _ in range(iters):
        g = prob.op.eval_full(x)
        x = x - eta * (2.0 * g - g_prev)
        g_prev = g
        xs.append(x.copy())
    return xs


def test_vreg_collapses_to_deterministic_extragradient():
    prob = build_linear_monotone(p=8, n=5, seed=12)
    eta = 0.4 / prob.meta.L
    solver = VrEgSolver(prob, prob.extra["x0"], eta, prob=1.0, batch=prob.n,
                        rng=RngStream(0))
    ref = _det_eg_reference(prob, prob.extra["x0"], eta, 40)
    for x_ref in ref:
        solver.step()
        assert np.array_equal(solver.x, x_ref)


def test_vrfrbs_collapses_to_deterministic_reflected_method():
    prob = build_linear_monotone(p=8, n=5, seed=12)
    eta = 0.2 / prob.meta.L
    solver = VrFrbsSolver(prob, prob.extra["x0"], eta, prob=1.0, batch=prob.n,
                          rng=RngStream(0))
    ref = _det_frbs_reference(prob, prob.extra["x0"], eta, 40)
    for x_ref in ref:
        solver.step()
        assert np.array_equal(solver.x, x_ref)


@pytest.mark.parametrize("cls", [VrEgSolver, VrFrbsSolver])
def test_stochastic_baselines_reproducible(cls):
    prob = build_linear_monotone(p=8, n=20, seed=13)
    eta = 0.1 / prob.meta.L

    def trace_with_seed(seed):
        solver = cls(prob, prob.extra["x0"], eta, prob=0.3, batch=4,
                     rng=RngStream(seed))
        return run(prob, solver, Budget(max_epochs=30))

    t1, t2 = trace_with_seed(5), trace_with_seed(5)
    assert t1.column("residual_sq").tolist() == t2.column("residual_sq").tolist()
    assert t1.column("oracle_calls").tolist() == t2.column("oracle_calls").tolist()
    t3 = trace_with_seed(6)
    assert t1.column("residual_sq").tolist() != t3.column("residual_sq").tolist()


@pytest.mark.parametrize("cls", [VrEgSolver, VrFrbsSolver])
def test_stochastic_baselines_converge_on_monotone_game(cls):
    prob = build_linear_monotone(p=10, n=30, seed=14)
    p = 0.2
    eta = (vreg_stepsize if cls is VrEgSolver else vrfrbs_stepsize)(p, prob.meta.L)
    solver = cls(prob, prob.extra["x0"], eta, prob=p, batch=5, rng=RngStream(2))
    trace = run(prob, solver, Budget(max_epochs=200))
    res = trace.column("residual_sq")
    assert res[-1] < 1e-2 * res[0]


def test_baseline_validation():
    prob = build_linear_monotone(p=4, n=6, seed=1)
    x0 = prob.extra["x0"]
    with pytest.raises(ConfigError):
        PegSolver(prob, x0, eta=0.0)
    with pytest.raises(ConfigError):
        VrEgSolver(prob, x0, 0.1, prob=0.0, batch=2, rng=RngStream(0))
    with pytest.raises(ConfigError):
        VrFrbsSolver(prob, x0, 0.1, prob=0.5, batch=0, rng=RngStream(0))


def test_oracle_accounting_peg():
    prob = build_linear_monotone(p=4, n=6, seed=1)
    solver = PegSolver(prob, prob.extra["x0"], eta=0.05)
    assert solver.oracle_calls == prob.n          # pre-initial full pass
    for i in range(1, 8):
        solver.step()
        assert solver.oracle_calls == (i + 1) * prob.n
