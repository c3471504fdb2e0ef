"""Experiment-family problem generators and their resolvents.

Three families:

* a bilinear matrix game over a product of probability simplexes, with the
  payoff averaged over noisy wealth observations (one component per
  observation);
* a discounted-MDP saddle-point reformulation over a nonnegative ball times a
  simplex, with one component per state (garnet-style random instances);
* small linear finite-sum instances (a fixed 2x2 example with a linear
  set-valued part, plus random monotone/nonmonotone generators) used by the
  certificates and the rate tests.

Plus the Euclidean projections realizing the resolvents, and spectral-norm
helpers that supply the Lipschitz constants for the stepsizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .core import (
    AssumptionMeta,
    ConfigError,
    FiniteSumOperator,
    FiniteSumProblem,
    ResolventMap,
    RngStream,
    ZeroResolvent,
)

# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort-and-threshold)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(y) + 1)
    rho = np.nonzero(u + (1.0 - css) / j > 0)[0][-1]
    tau = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(y + tau, 0.0)


def project_nonneg_ball(y: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto ``{v >= 0, ||v||_2 <= radius}``: clamp, then rescale."""
    if not radius > 0:
        raise ConfigError("ball radius must be positive")
    z = np.maximum(np.asarray(y, dtype=float), 0.0)
    nrm = np.linalg.norm(z)
    if nrm > radius:
        z = z * (radius / nrm)
    return z


class ProductSimplexResolvent(ResolventMap):
    """Normal cone of a product of two simplexes: the resolvent projects
    each block (independently of ``eta``)."""

    def __init__(self, p1: int, p2: int):
        self.p1, self.p2 = p1, p2

    def apply(self, eta, u):
        return np.concatenate([project_simplex(u[:self.p1]),
                               project_simplex(u[self.p1:])])

    def contains_zero_at(self, x, tol: float = 1e-9) -> bool:
        for blk in (x[:self.p1], x[self.p1:]):
            if abs(blk.sum() - 1.0) > tol or blk.min() < -tol:
                return False
        return True


class BallSimplexResolvent(ResolventMap):
    """Normal cone of (nonnegative ball) x (simplex), for the MDP saddle."""

    def __init__(self, n_v: int, radius: float):
        self.n_v = n_v
        self.radius = radius

    def apply(self, eta, u):
        return np.concatenate([project_nonneg_ball(u[:self.n_v], self.radius),
                               project_simplex(u[self.n_v:])])

    def contains_zero_at(self, x, tol: float = 1e-9) -> bool:
        v, mu = x[:self.n_v], x[self.n_v:]
        if v.min() < -tol or np.linalg.norm(v) > self.radius * (1.0 + tol):
            return False
        return abs(mu.sum() - 1.0) <= tol and mu.min() >= -tol


class LinearResolvent(ResolventMap):
    """Single-valued linear part ``T x = T_mat x``; the resolvent solves
    ``(I + eta * T_mat) x = u``.  Factorizations are cached per ``eta``."""

    def __init__(self, t_mat: np.ndarray):
        self.t_mat = np.asarray(t_mat, dtype=float)
        self._lu: dict[float, tuple] = {}

    def apply(self, eta, u):
        key = float(eta)
        if key not in self._lu:
            self._lu[key] = scipy.linalg.lu_factor(
                np.eye(self.t_mat.shape[0]) + eta * self.t_mat)
        return scipy.linalg.lu_solve(self._lu[key], u)

    def contains_zero_at(self, x, tol: float = 1e-9) -> bool:
        return np.linalg.norm(self.t_mat @ x) <= tol * (1.0 + np.linalg.norm(x))


# ---------------------------------------------------------------------------
# Linear finite-sum operators
# ---------------------------------------------------------------------------


class LinearFiniteSum(FiniteSumOperator):
    """``G_i x = A_i x + c_i`` with dense component matrices."""

    def __init__(self, mats: np.ndarray, offs: np.ndarray):
        mats = np.asarray(mats, dtype=float)
        offs = np.asarray(offs, dtype=float)
        if mats.ndim != 3 or offs.shape != mats.shape[:2] or mats.shape[1] != mats.shape[2]:
            raise ConfigError("expected mats of shape (n, p, p) and offs of shape (n, p)")
        self.mats = mats
        self.offs = offs
        self.n, self.dim = offs.shape
        self.mean_mat = mats.mean(axis=0)
        self.mean_off = offs.mean(axis=0)

    def eval_component(self, i, x):
        return self.mats[i] @ x + self.offs[i]

    def eval_components(self, idx, x):
        return self.mats[idx] @ x + self.offs[idx]

    def eval_batch_mean(self, idx, x):
        return self.mats[idx].mean(axis=0) @ x + self.offs[idx].mean(axis=0)

    def eval_full(self, x):
        return self.mean_mat @ x + self.mean_off

    def apply_linear(self, x):
        return self.mean_mat @ x

    def apply_linear_adjoint(self, x):
        return self.mean_mat.T @ x


def lipschitz_bound_linear(problem: FiniteSumProblem, alpha: float) -> float:
    """Smallest ``L`` of the mixed Lipschitz condition for a linear operator:
    ``L^2 = lambda_max(alpha * A'A + ((1-alpha)/n) * sum_i A_i'A_i)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]")
    op = problem.op
    if not isinstance(op, LinearFiniteSum):
        raise ConfigError("lipschitz_bound_linear needs a linear finite-sum operator")
    A = op.mean_mat
    M = alpha * (A.T @ A)
    if alpha < 1.0:
        gram = np.einsum("ikj,ikl->jl", op.mats, op.mats) / op.n
        M = M + (1.0 - alpha) * gram
    return float(math.sqrt(max(scipy.linalg.eigvalsh(M)[-1], 0.0)))


# ---------------------------------------------------------------------------
# Matrix game
# ---------------------------------------------------------------------------


class MatrixGameOperator(FiniteSumOperator):
    """Saddle operator of the averaged bilinear game.

    Component ``i`` plays the payoff built from the ``i``-th wealth
    observation: with ``x = [u; v]``, ``G_i x = [L_i' v; -L_i u]`` where
    ``L_i = diag(w_i) K`` and ``K`` is the fixed distance kernel.  Everything
    reduces to products with ``K``, so batch means cost two small matvecs.
    """

    def __init__(self, wealth: np.ndarray, kernel: np.ndarray):
        self.W = np.asarray(wealth, dtype=float)        # (n, p1) observation rows
        self.K = np.asarray(kernel, dtype=float)        # (p1, p1), symmetric
        self.n, self.p1 = self.W.shape
        self.dim = 2 * self.p1
        self._wbar = self.W.mean(axis=0)

    def _split(self, x):
        return x[:self.p1], x[self.p1:]

    def _pair(self, w, u, v, Ku=None):
        top = self.K.T @ (w * v)
        bot = -w * (self.K @ u if Ku is None else Ku)
        return np.concatenate([top, bot])

    def eval_component(self, i, x):
        u, v = self._split(x)
        return self._pair(self.W[i], u, v)

    def eval_components(self, idx, x):
        u, v = self._split(x)
        Wb = self.W[idx]
        top = (Wb * v) @ self.K          # row i is K'(w_i * v) since K is symmetric
        bot = -Wb * (self.K @ u)
        return np.hstack([top, bot])

    def eval_batch_mean(self, idx, x):
        u, v = self._split(x)
        return self._pair(self.W[idx].mean(axis=0), u, v)

    def eval_full(self, x):
        u, v = self._split(x)
        return self._pair(self._wbar, u, v)

    @property
    def mean_payoff(self) -> np.ndarray:
        return self._wbar[:, None] * self.K

    def apply_linear(self, x):
        return self.eval_full(x)         # the game operator is linear (no offset)

    def apply_linear_adjoint(self, x):
        return -self.eval_full(x)        # skew-symmetric


def build_matrix_game(m: int, n: int, theta: float = 0.8,
                      noise_sigma2: float = 0.05, seed: int = 0,
                      L_override: float | None = None) -> FiniteSumProblem:
    """Random game instance on ``m^2`` sites with ``n`` noisy wealth rows.

    Wealth is ``|normal|`` per site; each observation adds ``normal(0,
    noise_sigma2)`` noise and takes absolute values.  The kernel uses the
    flattened site distance ``|j - k|``.  Deterministic in ``seed``.
    """
    if m < 2 or n < 1:
        raise ConfigError("need m >= 2 and n >= 1")
    p1 = m * m
    rng = RngStream(seed, "matrix-game")
    w = np.abs(rng.normal(p1))
    eps = rng.normal((n, p1)) * math.sqrt(noise_sigma2)
    wealth = np.abs(w[None, :] + eps)
    j = np.arange(p1, dtype=float)
    kernel = 1.0 - np.exp(-theta * np.abs(j[:, None] - j[None, :]))
    op = MatrixGameOperator(wealth, kernel)
    L = float(np.linalg.norm(op.mean_payoff, 2)) if L_override is None else L_override
    meta = AssumptionMeta(L=L, alpha=1.0, rho_n=0.0, rho_c=0.0)
    prob = FiniteSumProblem(op=op, resolvent=ProductSimplexResolvent(p1, p1),
                            meta=meta, name=f"game-m{m}-n{n}-seed{seed}")
    prob.extra["x0"] = np.concatenate([np.full(p1, 1.0 / p1), np.full(p1, 1.0 / p1)])
    return prob


# ---------------------------------------------------------------------------
# MDP saddle point
# ---------------------------------------------------------------------------


class MdpOperator(FiniteSumOperator):
    """Finite-sum saddle operator of the discounted-MDP linear program.

    ``x = [value; occupancy]`` with ``value`` of length ``n_states`` and
    ``occupancy`` of length ``n_states * n_actions``.  Component ``s`` carries
    the state-``s`` rows scaled by ``n`` so the average recovers the full
    saddle operator ``[(1-g) p0 + B mu; -r - B' value]``.
    """

    def __init__(self, B: scipy.sparse.spmatrix, rewards: np.ndarray,
                 p0: np.ndarray, gamma_bar: float):
        self.B = scipy.sparse.csc_matrix(B)
        self.BT = scipy.sparse.csr_matrix(self.B.T)
        self.rewards = np.asarray(rewards, dtype=float)   # (n, m)
        self.p0 = np.asarray(p0, dtype=float)
        self.gamma_bar = float(gamma_bar)
        self.n, nm = self.B.shape
        self.m = nm // self.n
        self.dim = self.n + nm
        self._r_flat = self.rewards.reshape(-1)

    def _split(self, x):
        return x[:self.n], x[self.n:]

    def eval_full(self, x):
        v, mu = self._split(x)
        top = (1.0 - self.gamma_bar) * self.p0 + self.B @ mu
        bot = -self._r_flat - self.BT @ v
        return np.concatenate([top, bot])

    def eval_component(self, s, x):
        v, mu = self._split(x)
        n, m = self.n, self.m
        cols = slice(s * m, (s + 1) * m)
        out = np.zeros(self.dim)
        out[:n] = n * self.B[:, cols] @ mu[cols]
        out[s] += n * (1.0 - self.gamma_bar) * self.p0[s]
        out[n + s * m:n + (s + 1) * m] = -n * (self.rewards[s] + self.B[:, cols].T @ v)
        return out

    def eval_batch_mean(self, idx, x):
        v, mu = self._split(x)
        n, m, b = self.n, self.m, len(idx)
        scale = n / b
        cols = (np.asarray(idx)[:, None] * m + np.arange(m)[None, :]).reshape(-1)
        top = scale * (self.B[:, cols] @ mu[cols])
        counts = np.bincount(np.asarray(idx), minlength=n).astype(float)
        top += scale * (1.0 - self.gamma_bar) * self.p0 * counts
        bot = np.zeros(n * m)
        contrib = -scale * (self._r_flat[cols] + self.B[:, cols].T @ v)
        np.add.at(bot, cols, contrib)
        return np.concatenate([top, bot])

    def apply_linear(self, x):
        v, mu = self._split(x)
        return np.concatenate([self.B @ mu, -(self.BT @ v)])

    def apply_linear_adjoint(self, x):
        v, mu = self._split(x)
        return np.concatenate([-(self.B @ mu), self.BT @ v])

    def block_norm_max(self) -> float:
        """Default aggregation of the transition blocks: ``max_s ||B_s||_2``."""
        best = 0.0
        m = self.m
        for s in range(self.n):
            blk = self.B[:, s * m:(s + 1) * m].toarray()
            best = max(best, float(np.linalg.norm(blk, 2)))
        return best


def build_mdp(n: int, m: int, n_b: int, gamma_bar: float, seed: int = 0,
              block_norm: str = "blockmax") -> FiniteSumProblem:
    """Random garnet-style MDP saddle instance.

    Each state-action pair reaches exactly ``n_b`` next states drawn without
    replacement, with normalized i.i.d.-uniform transition masses; rewards are
    uniform on ``[0, 1]``; the initial distribution is uniform.  Deterministic
    in ``seed``.  ``block_norm`` picks how the transition norm used for
    stepsize scaling is aggregated (``blockmax`` or ``full``).
    """
    if not 1 <= n_b <= n:
        raise ConfigError("need 1 <= n_b <= n")
    if not 0.0 < gamma_bar < 1.0:
        raise ConfigError("discount must lie in (0, 1)")
    rng = RngStream(seed, "garnet")
    rewards = rng.uniform((n, m))
    rows, cols, data = [], [], []
    for s in range(n):
        for a in range(m):
            support = rng.indices(n, n_b, replace=False)
            masses = rng.uniform(n_b)
            masses = masses / masses.sum()
            col = s * m + a
            rows.append(support)
            cols.append(np.full(n_b, col))
            data.append(gamma_bar * masses)
            # the -e_s term of the block column
            rows.append(np.array([s]))
            cols.append(np.array([col]))
            data.append(np.array([-1.0]))
    B = scipy.sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n * m)).tocsc()
    p0 = np.full(n, 1.0 / n)
    op = MdpOperator(B, rewards, p0, gamma_bar)
    r_inf = float(rewards.max())
    radius = math.sqrt(n) * r_inf / (1.0 - gamma_bar)
    if block_norm == "blockmax":
        L_B = op.block_norm_max()
    elif block_norm == "full":
        L_B = operator_norm_estimate(op, iters=200).value
    else:
        raise ConfigError(f"unknown block_norm mode {block_norm!r}")
    meta = AssumptionMeta(L=L_B, alpha=1.0)
    prob = FiniteSumProblem(op=op, resolvent=BallSimplexResolvent(n, radius),
                            meta=meta, name=f"mdp-n{n}-m{m}-seed{seed}")
    prob.extra["r_inf"] = r_inf
    prob.extra["radius"] = radius
    prob.extra["L_B"] = L_B
    prob.extra["x0"] = np.concatenate([
        np.full(n, (1.0 - gamma_bar) / r_inf), np.full(n * m, 1.0 / (n * m))])
    return prob


# ---------------------------------------------------------------------------
# Linear examples
# ---------------------------------------------------------------------------


def build_linear_example1() -> FiniteSumProblem:
    """The fixed 2x2 two-component instance with a linear set-valued part.

    The combined matrix ``diag(-1, 1)`` is nonmonotone, yet the
    co-hypomonotonicity-type certificate holds with ``(rho_n, rho_c) =
    (2 eps + 1, eps)`` for any ``eps > 0``.
    """
    mats = np.array([[[-2.0, 0.0], [0.0, 0.0]],
                     [[0.0, 0.0], [0.0, 1.0]]])
    offs = np.array([[0.0, 1.0],
                     [-1.0, 1.0]])
    t_mat = np.array([[0.0, 0.0], [0.0, 0.5]])
    op = LinearFiniteSum(mats, offs)
    meta = AssumptionMeta(L=1.0, alpha=1.0, rho_n=1.2, rho_c=0.1, rho_star=1.2)
    prob = FiniteSumProblem(op=op, resolvent=LinearResolvent(t_mat), meta=meta,
                            name="linear-exam1")
    prob.extra["t_mat"] = t_mat
    prob.extra["x0"] = np.array([1.0, 0.0])   # 0 in T(x0) needs a zero second entry
    return prob


def build_linear_monotone(p: int, n: int, seed: int = 0,
                          skew_scale: float = 1.0) -> FiniteSumProblem:
    """Random monotone affine instance with a known exact zero.

    The averaged matrix is (PSD symmetric part) + skew; component noise
    averages out exactly, and offsets are chosen so that the known point
    ``extra["x_star"]`` is an exact solution.
    """
    rng = RngStream(seed, "linear-monotone")
    R = rng.normal((p, p)) / math.sqrt(p)
    sym = R @ R.T / math.sqrt(p)
    mats = np.empty((n, p, p))
    for i in range(n):
        A = rng.normal((p, p)) / math.sqrt(p)
        mats[i] = sym + skew_scale * (A - A.T) / 2.0
    x_star = rng.normal(p)
    noise = rng.normal((n, p))
    noise -= noise.mean(axis=0)
    offs = noise - mats @ x_star
    op = LinearFiniteSum(mats, offs)
    prob = FiniteSumProblem(op=op, resolvent=ZeroResolvent(),
                            meta=AssumptionMeta(L=1.0), name=f"linear-monotone-p{p}")
    prob.meta.L = lipschitz_bound_linear(prob, alpha=1.0)
    prob.extra["x_star"] = x_star
    prob.extra["x0"] = np.zeros(p)
    return prob


def build_linear_random(p: int, n: int, seed: int = 0) -> FiniteSumProblem:
    """Generic random affine finite sum (certificate demos)."""
    rng = RngStream(seed, "linear-random")
    mats = rng.normal((n, p, p)) / math.sqrt(p)
    offs = rng.normal((n, p))
    op = LinearFiniteSum(mats, offs)
    prob = FiniteSumProblem(op=op, resolvent=ZeroResolvent(),
                            meta=AssumptionMeta(L=1.0), name=f"linear-random-p{p}")
    prob.meta.L = lipschitz_bound_linear(prob, alpha=1.0)
    prob.extra["x0"] = np.zeros(p)
    return prob


# ---------------------------------------------------------------------------
# Spectral norm estimation
# ---------------------------------------------------------------------------


@dataclass
class NormEstimate:
    value: float
    converged: bool
    iters: int


def operator_norm_estimate(op, iters: int = 100, tol: float = 1e-6) -> NormEstimate:
    """Spectral norm of the linear action of ``op`` by power iteration on the
    Gram map ``x -> A'(A x)`` (deterministic ramp start vector).

    Falls back to the best estimate with ``converged=False`` when the relative
    change has not dropped below ``tol`` within ``iters`` iterations.
    """
    if iters < 10:
        raise ConfigError("need iters >= 10")
    if not (hasattr(op, "apply_linear") and hasattr(op, "apply_linear_adjoint")):
        raise ConfigError("operator does not expose a linear action")
    dim = op.dim
    x = 1.0 + np.arange(dim) / (7.0 * dim)
    x /= np.linalg.norm(x)
    est_prev = 0.0
    for it in range(1, iters + 1):
        ax = op.apply_linear(x)
        est = float(np.linalg.norm(ax))
        x = op.apply_linear_adjoint(ax)
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            return NormEstimate(0.0, True, it)
        x /= nrm
        if it > 1 and abs(est - est_prev) <= tol * max(est, 1e-300):
            return NormEstimate(est, True, it)
        est_prev = est
    import logging

    logging.getLogger(__name__).warning(
        "power iteration did not converge in %d iterations (last estimate %g)",
        iters, est_prev)
    return NormEstimate(est_prev, False, iters)


# ---------------------------------------------------------------------------
# Named presets
# ---------------------------------------------------------------------------

PROBLEM_PRESETS = {
    "game-exp1": lambda seed, **kw: build_matrix_game(
        m=kw.pop("m", 10), n=kw.pop("n", 1000), seed=seed, **kw),
    "game-exp2": lambda seed, **kw: build_matrix_game(
        m=kw.pop("m", 15), n=kw.pop("n", 2000), seed=seed, **kw),
    "mdp-exp1": lambda seed, **kw: build_mdp(
        n=kw.pop("n", 2000), m=kw.pop("m", 5), n_b=kw.pop("n_b", 1000),
        gamma_bar=kw.pop("gamma_bar", 0.9), seed=seed, **kw),
    "mdp-exp2": lambda seed, **kw: build_mdp(
        n=kw.pop("n", 4000), m=kw.pop("m", 10), n_b=kw.pop("n_b", 2000),
        gamma_bar=kw.pop("gamma_bar", 0.9), seed=seed, **kw),
    "linear-exam1": lambda seed, **kw: build_linear_example1(),
    "linear-random": lambda seed, **kw: build_linear_random(
        p=kw.pop("p", 20), n=kw.pop("n", 10), seed=seed, **kw),
}


def build_preset(name: str, seed: int, **overrides) -> FiniteSumProblem:
    if name not in PROBLEM_PRESETS:
        raise ConfigError(f"unknown problem preset {name!r}; "
                          f"available: {sorted(PROBLEM_PRESETS)}")
    return PROBLEM_PRESETS[name](seed, **overrides)
