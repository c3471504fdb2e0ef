import numpy as np
import pytest

from vfog.certify import suggest_rho, verify_cohypo_linear
from vfog.core import AssumptionMeta, ConfigError, FiniteSumProblem, RngStream, ZeroResolvent
from vfog.problems import LinearFiniteSum, build_linear_example1, build_linear_random


def _linear_problem(mats, offs=None):
    mats = np.asarray(mats, dtype=float)
    if offs is None:
        offs = np.zeros(mats.shape[:2])
    op = LinearFiniteSum(mats, offs)
    return FiniteSumProblem(op=op, resolvent=ZeroResolvent(),
                            meta=AssumptionMeta(L=1.0))


def test_fixed_example_known_pair_verifies():
    prob = build_linear_example1()
    assert verify_cohypo_linear(prob, 1.2, 0.1).feasible
    res = verify_cohypo_linear(prob, 0.0, 0.0)
    assert not res.feasible
    assert res.min_eigenvalue == pytest.approx(-1.0, abs=1e-12)


def test_fixed_example_pair_family():
    prob = build_linear_example1()
    for eps in (0.01, 0.1, 0.5, 1.0):
        assert verify_cohypo_linear(prob, 2.0 * eps + 1.0, eps).feasible


def test_identity_is_monotone():
    prob = _linear_problem([np.eye(3)])
    assert verify_cohypo_linear(prob, 0.0, 0.0).feasible


def test_suggest_rho_identity_pair():
    prob = _linear_problem([np.eye(4), np.eye(4)])
    sug = suggest_rho(prob)
    assert sug.feasible
    assert sug.rho_n == 0.0
    assert sug.rho_c == pytest.approx(1.0)


def test_suggest_rho_skew_game_like():
    K = np.array([[0.0, 1.0], [-1.0, 0.0]])
    prob = _linear_problem([K, K])
    sug = suggest_rho(prob)
    assert sug.feasible
    assert sug.rho_n == 0.0
    assert sug.rho_c >= 0.0
    assert verify_cohypo_linear(prob, sug.rho_n, sug.rho_c).feasible


def test_suggest_rho_rank_deficient_is_infeasible():
    mats = [np.diag([1.0, 0.0]), np.diag([1.0, 0.0])]   # singular combined matrix
    prob = _linear_problem(mats)
    sug = suggest_rho(prob)
    assert not sug.feasible and sug.reason


def test_suggest_rho_round_trip_on_random_instances():
    for seed in range(50):
        prob = build_linear_random(p=6, n=4, seed=seed)
        sug = suggest_rho(prob)
        if not sug.feasible:
            continue
        assert verify_cohypo_linear(prob, sug.rho_n, sug.rho_c).feasible


def test_monotone_symmetric_part_allows_zero_rho_n():
    rng = RngStream(31)
    for _ in range(20):
        A = rng.normal((5, 5))
        sym = A @ A.T / 5.0 + 0.1 * np.eye(5)
        skew = rng.normal((5, 5))
        skew = (skew - skew.T) / 2.0
        mats = np.stack([sym + skew + 0.2 * rng.normal((5, 5)) * 0 for _ in range(3)])
        prob = _linear_problem(mats)
        sug = suggest_rho(prob)
        assert sug.feasible and sug.rho_n == 0.0
        assert verify_cohypo_linear(prob, 0.0, sug.rho_c).feasible


def test_scaling_covariance():
    rng = RngStream(32)
    for seed in range(10):
        prob = build_linear_random(p=5, n=3, seed=seed)
        rho_n, rho_c = 0.7 + float(rng.uniform()), 0.2 * float(rng.uniform())
        base = verify_cohypo_linear(prob, rho_n, rho_c).feasible
        for c in (0.25, 4.0):
            scaled = _linear_problem(c * prob.op.mats, c * prob.op.offs)
            assert verify_cohypo_linear(scaled, rho_n / c, rho_c / c).feasible == base


def test_certificate_validation():
    prob = build_linear_example1()
    with pytest.raises(ConfigError):
        verify_cohypo_linear(prob, -0.1, 0.0)
    bad = build_linear_example1()
    bad.extra["t_mat"] = np.zeros((3, 3))
    with pytest.raises(ConfigError):
        verify_cohypo_linear(bad, 0.0, 0.0)
