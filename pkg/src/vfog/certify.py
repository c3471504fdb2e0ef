"""Assumption certificates for linear finite-sum operators.

For an affine operator with averaged matrix ``A`` (including any linear
set-valued part) and component matrices ``A_i``, the
co-hypomonotonicity-type condition with constants ``(rho_n, rho_c)`` is
equivalent to positive semidefiniteness of

    M = (A + A') / 2 + rho_n * A'A - (rho_c / n) * sum_i A_i'A_i,

which a symmetric eigensolve settles exactly (up to a tolerance scaled by
``||M||``).  :func:`suggest_rho` inverts the eigenvalue bounds to propose a
feasible pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ConfigError, FiniteSumProblem
from .problems import LinearFiniteSum


def _system_matrices(problem: FiniteSumProblem):
    op = problem.op
    if not isinstance(op, LinearFiniteSum):
        raise ConfigError("certificates need a linear finite-sum operator")
    phi = op.mean_mat
    t_mat = problem.extra.get("t_mat")
    if t_mat is not None:
        t_mat = np.asarray(t_mat, dtype=float)
        if t_mat.shape != phi.shape:
            raise ConfigError("dimension mismatch between operator and set-valued part")
        phi = phi + t_mat
    return phi, op.mats


@dataclass
class CertificateResult:
    feasible: bool
    min_eigenvalue: float
    tolerance: float


def verify_cohypo_linear(problem: FiniteSumProblem, rho_n: float,
                         rho_c: float) -> CertificateResult:
    """Check the mixed monotonicity certificate for given ``(rho_n, rho_c)``.

    Returns feasibility together with the minimum-eigenvalue witness.
    """
    if rho_n < 0 or rho_c < 0:
        raise ConfigError("rho_n and rho_c must be nonnegative")
    phi, mats = _system_matrices(problem)
    n = mats.shape[0]
    M = (phi + phi.T) / 2.0 + rho_n * (phi.T @ phi)
    M -= (rho_c / n) * np.einsum("ikj,ikl->jl", mats, mats)
    eigs = scipy.linalg.eigvalsh(M)
    scale = max(abs(eigs[0]), abs(eigs[-1]), 1e-300)
    tol = 1e-10 * scale
    return CertificateResult(feasible=bool(eigs[0] >= -tol),
                             min_eigenvalue=float(eigs[0]), tolerance=tol)


@dataclass
class RhoSuggestion:
    feasible: bool
    rho_n: float = 0.0
    rho_c: float = 0.0
    reason: str = ""


def suggest_rho(problem: FiniteSumProblem) -> RhoSuggestion:
    """Propose ``(rho_n, rho_c)`` from the eigenvalue bounds of the system.

    Needs the combined matrix to be full rank; with a nonnegative symmetric
    part the proposal keeps ``rho_n = 0``.  The returned pair always passes
    :func:`verify_cohypo_linear`.
    """
    phi, mats = _system_matrices(problem)
    n = mats.shape[0]
    sym_min = float(scipy.linalg.eigvalsh((phi + phi.T) / 2.0)[0])
    gram_eigs = scipy.linalg.eigvalsh(phi.T @ phi)
    gram_min = float(gram_eigs[0])
    if gram_min <= 1e-12 * max(float(gram_eigs[-1]), 1e-300):
        return RhoSuggestion(feasible=False,
                             reason="rank-deficient combined matrix: the quadratic "
                                    "term cannot absorb a negative symmetric part")
    rho_n = max(0.0, -sym_min / gram_min)
    comp_max_sum = sum(float(scipy.linalg.eigvalsh(A.T @ A)[-1]) for A in mats)
    rho_c = max(0.0, n * (sym_min + rho_n * gram_min) / comp_max_sum)
    return RhoSuggestion(feasible=True, rho_n=rho_n, rho_c=rho_c)
