import logging

import numpy as np
import pytest

from vfog.core import AssumptionMeta, FiniteSumProblem, RngStream, ZeroResolvent
from vfog.problems import LinearFiniteSum

logging.getLogger("vfog").setLevel(logging.ERROR)


def make_linear_toy(n=10, p=4, seed=123, spread=1.0):
    """Random affine finite sum with genuinely distinct components."""
    rng = RngStream(seed, "toy")
    mats = rng.normal((n, p, p)) / np.sqrt(p)
    mats += spread * rng.normal((n, 1, 1)) * np.eye(p)
    offs = spread * rng.normal((n, p))
    op = LinearFiniteSum(mats, offs)
    return FiniteSumProblem(op=op, resolvent=ZeroResolvent(),
                            meta=AssumptionMeta(L=1.0), name=f"toy-n{n}-p{p}")


def make_exact_zero_problem(p=6):
    """Single-component identity shifted so x_star is an exact float zero."""
    x_star = np.arange(1.0, p + 1.0)
    mats = np.eye(p)[None, :, :]
    offs = -x_star[None, :]
    op = LinearFiniteSum(mats, offs)
    prob = FiniteSumProblem(op=op, resolvent=ZeroResolvent(),
                            meta=AssumptionMeta(L=1.0), name="exact-zero")
    prob.extra["x_star"] = x_star
    return prob


@pytest.fixture
def linear_toy():
    return make_linear_toy()


@pytest.fixture(scope="session")
def small_game():
    from vfog.problems import build_matrix_game

    return build_matrix_game(m=3, n=40, seed=7)
