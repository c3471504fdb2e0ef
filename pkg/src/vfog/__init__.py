"""Solvers and benchmarks for finite-sum generalized equations ``0 in Gx + Tx``.

The accelerated variance-reduced optimistic-gradient method lives in
:mod:`vfog.solver`, pluggable estimators in :mod:`vfog.estimators`,
comparison baselines in :mod:`vfog.baselines`, experiment-family problem
generators in :mod:`vfog.problems`, assumption certificates in
:mod:`vfog.certify`, and the CSV benchmark harness in :mod:`vfog.bench`
(CLI: ``vfog``).
"""

from .core import (
    AssumptionMeta,
    ConfigError,
    DivergenceError,
    FiniteSumOperator,
    FiniteSumProblem,
    NonFiniteError,
    ResolventMap,
    RngStream,
    ZeroResolvent,
    fb_residual,
    natural_residual,
)
from .estimators import (
    ExactEstimator,
    LSarahEstimator,
    LSvrgEstimator,
    MiniBatchEstimator,
    SagaEstimator,
    VrConstants,
    check_kappa_theta,
    minibatch_schedule,
    schedule_saga,
    schedule_sarah,
    schedule_svrg,
)
from .solver import (
    Budget,
    ConstantsBundle,
    RunTrace,
    ScheduleParams,
    VfogSolver,
    constants_general,
    constants_vr,
    initial_radius_sq,
    rate_certificate,
    run,
    stepsize_range,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
