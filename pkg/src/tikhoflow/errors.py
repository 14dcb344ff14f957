"""Exception hierarchy shared by every module."""


class TikhoflowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TikhoflowError, ValueError):
    """Bad names, inconsistent parameters, violated preconditions."""


class DomainError(TikhoflowError):
    """A point left the open domain of the objective."""


class UnsupportedProblemError(TikhoflowError):
    """The problem lacks the ground truth or constants an operation needs."""


class ConvergenceError(TikhoflowError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class ScheduleRejectedError(TikhoflowError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StiffnessError(TikhoflowError):
    """Step size collapsed below ``h_min``."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class BudgetError(TikhoflowError):
    """``max_steps`` exhausted before reaching the end of the horizon."""


class RateUndefinedError(TikhoflowError):
    """Too few usable samples for a rate fit."""


class RunError(TikhoflowError):
    """Wraps a module error with the run phase where it happened."""

    def __init__(self, phase, cause):
        super().__init__(f"{phase}: {cause}")
        self.phase = phase
        self.cause = cause
