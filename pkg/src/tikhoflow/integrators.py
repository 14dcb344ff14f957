"""Time steppers behind ``flows.integrate``.

``dopri5`` is an embedded Dormand-Prince 5(4) pair with PI step control,
domain-aware step rejection, stiffness capping and cubic Hermite sampling.
``radau`` drives scipy's Radau IIA stepper with the analytic Jacobian, for
horizons where the explicit step cap would need too many steps. ``auto`` picks
between them from the stiffness guard at the end of the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import RK45, Radau

from .errors import BudgetError, ConfigurationError, DomainError, StiffnessError
from .flows import jacobian_offset, rhs_offset, stiffness_guard

METHODS = ("auto", "dopri5", "radau")

# explicit cost above which ``auto`` switches to the implicit stepper
EXPLICIT_BUDGET = 2e4

_A, _B, _C, _E = RK45.A, RK45.B, RK45.C, RK45.E

_PI_ALPHA = 0.17
_PI_BETA = 0.04
_SAFETY = 0.9


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-100
    h_init: float = 1e-3
    h_min: float = 1e-14
    max_steps: int = 2_000_000
    samples: int = 400
    method: str = "auto"
    fixed_step: Optional[float] = None

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "h_init", "h_min"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigurationError(f"integrator.{name} must be positive")
        if not self.h_min < self.h_init:
            raise ConfigurationError("integrator.h_min must be smaller than integrator.h_init")
        if not (isinstance(self.max_steps, (int, np.integer)) and self.max_steps > 0):
            raise ConfigurationError("integrator.max_steps must be a positive integer")
        if not (isinstance(self.samples, (int, np.integer)) and self.samples >= 2):
            raise ConfigurationError("integrator.samples must be an integer >= 2")
        if self.method not in METHODS:
            raise ConfigurationError(f"integrator.method must be one of {METHODS}")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ConfigurationError("integrator.fixed_step must be positive")


def choose_method(system, t0, t_end, cfg):
    if cfg.fixed_step is not None:
        return "dopri5"
    if cfg.method != "auto":
        return cfg.method
    cost = stiffness_guard(system, t_end) * (t_end - t0)
    return "radau" if not (cost <= EXPLICIT_BUDGET) else "dopri5"


def solve(system, w0, t0, t_end, cfg, sample_times, emit):
    method = choose_method(system, t0, t_end, cfg)
    if method == "radau":
        _radau(system, w0, t0, t_end, cfg, sample_times, emit)
    else:
        _dopri5(system, w0, t0, t_end, cfg, sample_times, emit)
    return method


def _hermite(t0, z0, f0, t1, z1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * z0 + h10 * h * f0 + h01 * z1 + h11 * h * f1


class _Sampler:
    """Emits requested sample times as the integration passes them."""

    def __init__(self, times, emit):
        self.times = times
        self.emit = emit
        self.i = 0

    def start(self, t0, z0):
        while self.i < len(self.times) and self.times[self.i] <= t0:
            self.emit(self.times[self.i], z0)
            self.i += 1

    def advance(self, t_new, z_new, interp):
        while self.i < len(self.times) and self.times[self.i] <= t_new:
            ts = self.times[self.i]
            self.emit(ts, z_new if ts == t_new else interp(ts))
            self.i += 1


def _rk_step(f, t, z, k0, h):
    K = np.empty((7, z.size))
    K[0] = k0
    for s in range(1, 6):
        K[s] = f(t + _C[s] * h, z + h * (K[:s].T @ _A[s, :s]))
    z_new = z + h * (K[:6].T @ _B)
    K[6] = f(t + h, z_new)
    return z_new, K


def _dopri5(system, w0, t0, t_end, cfg, sample_times, emit):
    def f(t, z):
        d = rhs_offset(system, t, z)
        if not np.all(np.isfinite(d)):
            raise DomainError(f"non-finite derivative at t={t}")
        return d

    sampler = _Sampler(sample_times, emit)
    t, z = t0, np.array(w0, dtype=float)
    k0 = f(t, z)
    sampler.start(t, z)

    if cfg.fixed_step is not None:
        n = max(1, int(math.ceil((t_end - t0) / cfg.fixed_step - 1e-9)))
        h = (t_end - t0) / n
        for i in range(n):
            t_new = t_end if i == n - 1 else t0 + (i + 1) * h
            z_new, K = _rk_step(f, t, z, k0, t_new - t)
            sampler.advance(t_new, z_new, lambda s, a=(t, z, k0, t_new, z_new, K[6]): _hermite(*a, s))
            t, z, k0 = t_new, z_new, K[6]
        return

    recap = system.schedule is not None and system.schedule.family == "power_exp"
    guard = stiffness_guard(system, t0)
    h = min(cfg.h_init, 1.0 / guard if guard > 0 else math.inf, t_end - t0)
    err_prev = 1e-4
    rejected = False
    steps = 0
    while t < t_end:
        if steps >= cfg.max_steps:
            raise BudgetError(f"max_steps={cfg.max_steps} exhausted at t={t:.6g}")
        if h < cfg.h_min:
            raise StiffnessError(f"step size {h:.3e} fell below h_min at t={t:.6g}", t=t, state=z.copy())
        steps += 1
        last = t + h >= t_end * (1 - 1e-15)
        t_new = t_end if last else t + h
        hh = t_new - t
        try:
            z_new, K = _rk_step(f, t, z, k0, hh)
        except DomainError:
            h *= 0.5
            rejected = True
            continue
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(z), np.abs(z_new))
        err = float(np.sqrt(np.mean((hh * (K.T @ _E) / scale) ** 2)))
        if not math.isfinite(err):
            h *= 0.5
            rejected = True
            continue
        if err <= 1.0:
            sampler.advance(t_new, z_new, lambda s, a=(t, z, k0, t_new, z_new, K[6]): _hermite(*a, s))
            if err == 0.0:
                factor = 10.0
            else:
                factor = _SAFETY * err ** -_PI_ALPHA * err_prev ** _PI_BETA
                factor = min(10.0, max(0.2, factor))
            if rejected:
                factor = min(factor, 1.0)
            err_prev = max(err, 1e-4)
            rejected = False
            t, z, k0 = t_new, z_new, K[6]
            h = hh * factor
            if recap:
                g = stiffness_guard(system, t)
                if g > 0:
                    h = min(h, 1.0 / g)
        else:
            h = hh * max(0.2, _SAFETY * err ** -0.2)
            rejected = True


def _energy_atol(system, t, z, cfg):
    """Velocity errors are weighed against ``omega(t) |w|`` rather than ``|v|``.

    ``omega`` is the undamped frequency bound, so this is the energy norm of
    the linearized oscillator. Without it, oscillations that are negligible in
    position still force the step to resolve them in velocity.
    """
    n = system.problem.dimension
    L = system.problem.lipschitz_bound or 0.0
    omega = math.sqrt(system.beta(t) * L + system.tikhonov_weight(t))
    atol = np.full(z.size, cfg.abs_tol)
    atol[n:] = max(cfg.abs_tol, cfg.rel_tol * omega * float(np.max(np.abs(z[:n]))))
    return atol


def _radau(system, w0, t0, t_end, cfg, sample_times, emit):
    n_state = w0.size

    def fun(t, z):
        try:
            return rhs_offset(system, t, z)
        except DomainError:
            # a non-finite value makes the Newton iteration fail, which shrinks the step
            return np.full(n_state, np.nan)

    jac = None
    if system.problem.has_hessian:
        jac = lambda t, z: jacobian_offset(system, t, z)
    solver = Radau(
        fun, t0, np.array(w0, dtype=float), t_end,
        rtol=cfg.rel_tol, atol=cfg.abs_tol, jac=jac, first_step=min(cfg.h_init, t_end - t0),
    )
    sampler = _Sampler(sample_times, emit)
    sampler.start(t0, solver.y.copy())
    steps = 0
    n = system.problem.dimension
    while solver.status == "running":
        if system.second_order:
            solver.atol = _energy_atol(system, solver.t, solver.y, cfg)
        if steps >= cfg.max_steps:
            raise BudgetError(f"max_steps={cfg.max_steps} exhausted at t={solver.t:.6g}")
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            raise StiffnessError(f"implicit step failed at t={solver.t:.6g}: {msg}", t=solver.t, state=solver.y.copy())
        y = solver.y
        if not np.all(np.isfinite(y)) or not system.problem.in_domain_at(y[:n]):
            raise DomainError(f"accepted state left the domain at t={solver.t:.6g}")
        if solver.status == "running" and solver.step_size is not None and solver.step_size < cfg.h_min:
            raise StiffnessError(
                f"step size {solver.step_size:.3e} fell below h_min at t={solver.t:.6g}", t=solver.t, state=y.copy()
            )
        dense = solver.dense_output()
        sampler.advance(solver.t, y.copy(), dense)
