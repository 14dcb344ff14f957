"""Right-hand sides of the first-order Tikhonov flow and its comparators.

All systems share the form::

    first order:   x' = -beta(t) grad f(x) - c x
    second order:  x'' + a(t) x' + b(t) grad f(x) + h Hess f(x) x' + k(t) x = 0

with second-order systems reduced to the stacked state ``(x, v)``. States are
integrated as offsets ``w = x - anchor`` from the problem's anchor point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError, UnsupportedProblemError
from .problems import ProblemSpec
from .schedules import ScheduleSpec

KINDS = ("tikhonov_first_order", "tral", "trae", "trisal", "trisae", "trisg", "trish")
SECOND_ORDER = ("trisal", "trisae", "trisg", "trish")

# fixed coefficients of the comparator systems
_FIXED = {
    "tral": dict(schedule=ScheduleSpec("power_log", m=2, p=2, scale=2), c=5.0, alpha=0.0),
    "trae": dict(schedule=ScheduleSpec("power_exp", m=2, gamma=2, r=0.9, scale=2), c=5.0, alpha=0.0),
    "trisal": dict(schedule=ScheduleSpec("power_log", m=2, p=2, scale=2), c=5.0, alpha=5.0),
    "trisae": dict(schedule=ScheduleSpec("power_exp", m=2, gamma=2, r=0.8, scale=2), c=5.0, alpha=5.0),
    "trisg": dict(schedule=None, c=0.0, alpha=5.0, hessian_damping=0.0),
    "trish": dict(schedule=None, c=0.0, alpha=5.0, hessian_damping=2.0),
}

# the trisg/trish Tikhonov term t^(-8/5) x equals (c/beta) x with c = 1, beta = t^(8/5)
_TRISG_VIEW = (ScheduleSpec("power_log", m=1.6, p=0.0), 1.0)


@dataclass(frozen=True)
class FlowSystem:
    kind: str
    problem: ProblemSpec
    schedule: Optional[ScheduleSpec] = None
    c: float = 0.0
    alpha: float = 0.0
    hessian_damping: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown flow kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        for name in ("c", "alpha", "hessian_damping"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"flow.{name} must be a nonnegative finite number")
        if self.kind in ("tikhonov_first_order", "tral", "trae", "trisal", "trisae") and self.schedule is None:
            raise ConfigurationError(f"{self.kind} needs a schedule")
        if self.kind == "trish" and not self.problem.has_hessian:
            raise UnsupportedProblemError(f"trish needs a Hessian-vector product, {self.problem.name} has none")

    @property
    def second_order(self):
        return self.kind in SECOND_ORDER

    @property
    def state_dim(self):
        n = self.problem.dimension
        return 2 * n if self.second_order else n

    # time-dependent coefficients of the common form

    def beta(self, t):
        if self.schedule is None:
            return 1.0
        return self.schedule.beta(t)

    def damping(self, t):
        if self.kind in ("trisg", "trish"):
            return self.alpha * t ** -0.8
        return self.alpha

    def tikhonov_weight(self, t):
        if self.kind in ("trisg", "trish"):
            return t ** -1.6
        return self.c

    def tikhonov_view(self):
        """``(schedule, c)`` such that the Tikhonov term reads ``(c / beta) x``."""
        if self.kind in ("trisg", "trish"):
            return _TRISG_VIEW
        return self.schedule, self.c

    def describe(self):
        return {
            "kind": self.kind,
            "c": self.c,
            "alpha": self.alpha,
            "hessian_damping": self.hessian_damping,
            "schedule": None if self.schedule is None else self.schedule.as_dict(),
        }


def make_system(kind, problem, schedule=None, c=None, alpha=None):
    """Build a system, filling in the fixed coefficients of the named comparators.

    Passing a coefficient that contradicts a comparator's fixed value is an error.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown flow kind {kind!r}; expected one of {', '.join(KINDS)}")
    if kind == "tikhonov_first_order":
        if c is None:
            raise ConfigurationError("tikhonov_first_order needs c")
        return FlowSystem(kind, problem, schedule, float(c), float(alpha or 0.0))
    fixed = dict(_FIXED[kind])
    given = {"schedule": schedule, "c": c, "alpha": alpha}
    for key, value in given.items():
        if value is not None and value != fixed[key]:
            raise ConfigurationError(f"{kind} has fixed {key}={fixed[key]!r}, got {value!r}")
    return FlowSystem(kind, problem, **fixed)


def _position(system, w):
    problem = system.problem
    if not problem.in_domain_at(w):
        raise DomainError(f"state left the domain of {problem.name}")
    return problem.anchor + w


def rhs_offset(system, t, z):
    """Time derivative of the offset state ``(w[, v])``."""
    problem = system.problem
    n = problem.dimension
    w = z[:n]
    x = _position(system, w)
    g = problem.grad_at(w)
    if not system.second_order:
        return -system.beta(t) * g - system.c * x
    v = z[n:]
    acc = -system.damping(t) * v - system.beta(t) * g - system.tikhonov_weight(t) * x
    if system.hessian_damping:
        acc = acc - system.hessian_damping * problem.hvp_at(w, v)
    return np.concatenate([v, acc])


def rhs(system, t, z):
    """Time derivative at the state ``z`` (``x`` or stacked ``(x, x')``).

    >>> from tikhoflow.problems import builtin_problem
    >>> zero = builtin_problem("zero", {"dimension": 1})
    >>> sys = make_system("tikhonov_first_order", zero, ScheduleSpec("power_log", m=1), c=5)
    >>> rhs(sys, 2.0, np.array([1.0]))
    array([-5.])
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (system.state_dim,):
        raise ConfigurationError(f"state must have length {system.state_dim}")
    return rhs_offset(system, t, to_offset(system, z))


def jacobian_offset(system, t, z):
    """Jacobian of ``rhs_offset``; the third-derivative term of trish is dropped."""
    problem = system.problem
    n = problem.dimension
    w = z[:n]
    H = problem.hessian_at(w)
    eye = np.eye(n)
    if not system.second_order:
        return -system.beta(t) * H - system.c * eye
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = eye
    J[n:, :n] = -system.beta(t) * H - system.tikhonov_weight(t) * eye
    J[n:, n:] = -system.damping(t) * eye - system.hessian_damping * H
    return J


def to_offset(system, z):
    z = np.array(z, dtype=float)
    n = system.problem.dimension
    z[:n] -= system.problem.anchor
    return z


def stiffness_guard(system, t, x=None):
    """Local stiffness scale; ``1/guard`` caps explicit steps.

    For first-order systems this is ``beta(t) L + c``. Second-order systems use
    ``a(t) + h L + sqrt(b(t) L + k(t))``, the modulus bound of the linearized
    eigenvalues.
    """
    L = system.problem.lipschitz_bound or 0.0
    beta = system.beta(t)
    if not system.second_order:
        return beta * L + system.c
    return system.damping(t) + system.hessian_damping * L + math.sqrt(beta * L + system.tikhonov_weight(t))


@dataclass(frozen=True)
class FlowState:
    t: float
    z: np.ndarray  # offset state: position part measured from ``anchor``
    anchor: np.ndarray

    @property
    def n(self):
        return self.anchor.size

    @property
    def w(self):
        return self.z[: self.n]

    @property
    def x(self):
        return self.anchor + self.z[: self.n]

    @property
    def v(self):
        return self.z[self.n:] if self.z.size > self.n else None

    @property
    def state(self):
        """State in absolute coordinates."""
        out = np.array(self.z)
        out[: self.n] += self.anchor
        return out


def integrate(system, z0, t0, t_end, cfg=None, observer=None, sample_times=None):
    """Integrate from ``z0`` (absolute coordinates) and return sampled states.

    Samples are log-spaced on ``[t0, t_end]`` unless ``sample_times`` is given.
    ``observer`` is called with each ``FlowState`` as it is produced.
    """
    from .integrators import IntegratorConfig, solve

    cfg = cfg or IntegratorConfig()
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (system.state_dim,):
        raise ConfigurationError(f"initial state must have length {system.state_dim}, got {z0.shape}")
    if not np.all(np.isfinite(z0)):
        raise ConfigurationError("initial state must be finite")
    t0, t_end = float(t0), float(t_end)
    if not t_end > t0:
        raise ConfigurationError("t_end must exceed t0")
    if system.schedule is not None and t0 < system.schedule.t_min:
        raise ConfigurationError(f"t0={t0} is below the schedule's t_min={system.schedule.t_min}")
    if system.kind in ("trisg", "trish") and t0 <= 0:
        raise ConfigurationError("trisg/trish need t0 > 0")
    w0 = to_offset(system, z0)
    if not system.problem.in_domain_at(w0[: system.problem.dimension]):
        raise ConfigurationError("initial point lies outside the domain")
    if sample_times is None:
        sample_times = np.geomspace(t0, t_end, cfg.samples) if t0 > 0 else np.linspace(t0, t_end, cfg.samples)
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) <= 0) or sample_times[0] < t0 or sample_times[-1] > t_end:
        raise ConfigurationError("sample times must increase within [t0, t_end]")
    # pin the end points exactly
    sample_times = sample_times.copy()
    if np.isclose(sample_times[0], t0, rtol=1e-14, atol=0):
        sample_times[0] = t0
    if np.isclose(sample_times[-1], t_end, rtol=1e-14, atol=0):
        sample_times[-1] = t_end

    anchor = system.problem.anchor
    out = []

    def emit(t, z):
        st = FlowState(float(t), np.array(z, dtype=float), anchor)
        out.append(st)
        if observer is not None:
            observer(st)

    solve(system, w0, t0, t_end, cfg, sample_times, emit)
    return out
