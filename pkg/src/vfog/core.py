"""Operator abstractions, residual diagnostics, and the seeded RNG contract.

Everything downstream (estimators, solvers, benchmark harness) works against
the small set of interfaces defined here:

* :class:`FiniteSumOperator` -- a single-valued map ``G`` given as the
  arithmetic mean of ``n`` components ``G_i``.
* :class:`ResolventMap` -- access to the set-valued part ``T`` through its
  resolvent ``u -> (I + eta*T)^{-1} u``.
* :class:`FiniteSumProblem` -- the pair ``(G, T)`` plus assumption metadata.
* :class:`RngStream` -- a splittable, platform-stable random stream.

All vectors are dense 1-d ``float64`` numpy arrays.
"""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or schedule parameters."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf reached a public boundary."""


class DivergenceError(RuntimeError):
    """A solver run blew up (non-finite iterate or residual guard tripped)."""


def check_finite(x: np.ndarray, what: str = "iterate") -> np.ndarray:
    """Raise :class:`NonFiniteError` unless every entry of ``x`` is finite."""
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite {what}")
    return x


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def _hash_tag(tag) -> int:
    """Stable 32-bit hash of a string/int tag (``hash()`` is salted per process)."""
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


class RngStream:
    """Seeded PCG64 stream with the few draw primitives the solvers need.

    Identical seed (and split path) gives an identical draw sequence on every
    platform.  Streams are split by tag, so concurrent runs never share state.
    """

    def __init__(self, seed: int, *path):
        self._entropy = (int(seed),) + tuple(_hash_tag(t) for t in path)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._entropy)))

    def split(self, *path) -> "RngStream":
        """Derive an independent stream keyed by ``path`` under the same seed."""
        root, *rest = self._entropy
        return RngStream(root, *rest, *path)

    def index(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return int(self._gen.integers(0, n))

    def indices(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        """A batch of component indices, i.i.d. with replacement by default."""
        if size < 1:
            raise ConfigError("empty batch")
        if replace:
            return self._gen.integers(0, n, size=size)
        if size > n:
            raise ConfigError(f"cannot draw {size} of {n} indices without replacement")
        return self._gen.choice(n, size=size, replace=False)

    def bernoulli(self, p: float) -> bool:
        return bool(self._gen.random() < p)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


class FiniteSumOperator(ABC):
    """``G x = (1/n) * sum_i G_i x`` with component-level oracle access.

    Implementations must be deterministic (same input, same output) and keep
    ``eval_full`` equal to the mean of the components to near machine
    precision; both are checked by the shipped property tests.
    """

    n: int
    dim: int

    @abstractmethod
    def eval_component(self, i: int, x: np.ndarray) -> np.ndarray:
        """Value of the ``i``-th component map at ``x``."""

    def eval_components(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Stacked component values ``G_i x`` for ``i in idx``, one row each.

        Subclasses override this with a vectorized version; the fallback loops.
        """
        return np.stack([self.eval_component(int(i), x) for i in idx])

    def eval_batch_mean(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Mean of ``G_i x`` over ``idx`` (with multiplicity)."""
        return self.eval_components(idx, x).mean(axis=0)

    def eval_full(self, x: np.ndarray) -> np.ndarray:
        """One full operator pass, ``G x``."""
        return self.eval_batch_mean(np.arange(self.n), x)


class ResolventMap(ABC):
    """Resolvent access to the set-valued part ``T`` of ``0 in Gx + Tx``."""

    @abstractmethod
    def apply(self, eta: float, u: np.ndarray) -> np.ndarray:
        """Evaluate ``(I + eta*T)^{-1} u`` for ``eta > 0``."""

    @abstractmethod
    def contains_zero_at(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        """Whether ``0 in Tx``; used to validate start points (``v0 = 0``)."""

    @property
    def is_zero_map(self) -> bool:
        return False


class ZeroResolvent(ResolventMap):
    """``T = 0``: the resolvent is the identity and ``0 in Tx`` everywhere."""

    def apply(self, eta: float, u: np.ndarray) -> np.ndarray:
        return u

    def contains_zero_at(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return True

    @property
    def is_zero_map(self) -> bool:
        return True


@dataclass
class AssumptionMeta:
    """Problem-class constants: Lipschitz level and monotonicity defects.

    ``L`` is the Lipschitz constant of the mixed condition with weight
    ``alpha`` (``alpha = 1``: plain Lipschitz continuity of ``G``;
    ``alpha = 0``: mean-square Lipschitz continuity of the components).
    ``rho_n``/``rho_c`` are the negative/positive coefficients of the
    co-hypomonotonicity-type condition, ``rho_star`` the weak-Minty constant,
    and ``sigma2`` the oracle variance bound.
    """

    L: float
    alpha: float = 1.0
    rho_n: float = 0.0
    rho_c: float = 0.0
    rho_star: float = 0.0
    sigma2: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.rho_c < 0 or self.rho_n < self.rho_c:
            raise ConfigError("need rho_n >= rho_c >= 0")


@dataclass
class FiniteSumProblem:
    """A generalized equation ``0 in Gx + Tx`` ready for the solvers."""

    op: FiniteSumOperator
    resolvent: ResolventMap
    meta: AssumptionMeta
    name: str = "problem"
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.op.n

    @property
    def dim(self) -> int:
        return self.op.dim


# ---------------------------------------------------------------------------
# Residual diagnostics
# ---------------------------------------------------------------------------


def natural_residual(problem: FiniteSumProblem, x: np.ndarray, v: np.ndarray,
                     gx: np.ndarray | None = None) -> float:
    """``||Gx + v||`` for an algorithm-maintained ``v in Tx``.

    Costs one full operator pass unless a precomputed ``gx`` is supplied
    (probes share one pass between both residuals).
    """
    check_finite(x), check_finite(v, "residual witness")
    if gx is None:
        gx = problem.op.eval_full(x)
    return float(np.linalg.norm(gx + v))


def fb_residual(problem: FiniteSumProblem, x: np.ndarray, lam: float,
                gx: np.ndarray | None = None) -> float:
    """Forward-backward residual ``||x - J_{lam*T}(x - lam*Gx)|| / lam``.

    Zero exactly at solutions, and never larger than the natural residual for
    any valid witness ``v in Tx``.
    """
    if not lam > 0:
        raise ConfigError("fb_residual needs lam > 0")
    check_finite(x)
    if gx is None:
        gx = problem.op.eval_full(x)
    step = problem.resolvent.apply(lam, x - lam * gx)
    return float(np.linalg.norm(x - step) / lam)
