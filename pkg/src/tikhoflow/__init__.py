"""Tikhonov-regularized gradient flows with time scaling: simulation and checks."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    RateUndefinedError,
    RunError,
    ScheduleRejectedError,
    StiffnessError,
    TikhoflowError,
    UnsupportedProblemError,
)
from .problems import ProblemSpec, builtin_problem, min_norm_oracle  # noqa: E402
from .schedules import HBetaReport, ScheduleSpec, SchedulePoint, check_hbeta, eval_schedule, suggest_mu  # noqa: E402
from .tikhonov_path import PathPoint, center_path, tikhonov_center  # noqa: E402
from .flows import FlowState, FlowSystem, integrate, make_system, rhs, stiffness_guard  # noqa: E402
from .integrators import IntegratorConfig  # noqa: E402
from .diagnostics import (  # noqa: E402
    RateFit,
    TrajectorySample,
    annotate,
    descent_lemma_check,
    energy,
    energy_bound_check,
    fit_rate,
)
