"""Regularization path y(t) = argmin f + (c / 2 beta(t)) |x|^2.

Centers are computed in offset coordinates ``u = y - anchor`` so that the
distance to the minimum-norm solution stays resolvable when ``c / beta`` is far
below machine precision relative to ``|x*|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError
from .schedules import eval_schedule

ARMIJO = 1e-4


@dataclass(frozen=True)
class PathPoint:
    t: float
    y: np.ndarray
    phi_value: float
    inner_iters: int
    residual: float
    beta: float = float("nan")
    u: Optional[np.ndarray] = None
    phi_gap: float = float("nan")


def _phi_grad(problem, u, k):
    # k = c / beta
    return problem.grad_at(u) + k * (problem.anchor + u)


def _phi_increase(problem, u, s, g, k):
    """phi(u + s) - phi(u) written as Bregman term + linear term + quadratic."""
    return problem.bregman_at(u + s, u) + float(g @ s) + 0.5 * k * float(s @ s)


def tikhonov_center(problem, c, beta, warm_start=None, tol=1e-10, t=float("nan"), max_iter=10_000, polish=8):
    """Minimize ``phi = f + (c / 2 beta) |x|^2``.

    Damped Newton when the problem has a Hessian, otherwise gradient descent
    with step ``1/(L + c/beta)``. Backtracking keeps every iterate inside the
    domain. Once the residual is below ``tol`` a few extra Newton steps are
    taken while they keep contracting, which brings ``y`` to full precision.
    """
    if not c > 0:
        raise ConfigurationError("c must be positive")
    if not (beta > 0 and np.isfinite(beta)):
        raise ConfigurationError(f"beta must be positive and finite, got {beta}")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    k = c / beta
    n = problem.dimension
    if warm_start is None:
        u = np.zeros(n)
    else:
        u = np.asarray(warm_start, dtype=float) - problem.anchor
        if u.shape != (n,):
            raise ConfigurationError(f"warm_start must have length {n}")
    if not problem.in_domain_at(u):
        raise DomainError("warm start lies outside the domain")

    newton = problem.has_hessian
    if not newton:
        L = problem.lipschitz_bound
        base_step = 1.0 / (L + k) if L is not None else 1.0

    g = _phi_grad(problem, u, k)
    res = float(np.linalg.norm(g))
    best = res
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"center did not converge in {max_iter} iterations at t={t} (residual {best:.3e})",
                best_residual=best,
            )
        it += 1
        if newton:
            H = problem.hessian_at(u) + k * np.eye(n)
            s = -np.linalg.solve(H, g)
        else:
            s = -base_step * g
        slope = float(g @ s)
        lam = 1.0
        while True:
            trial = u + lam * s
            if problem.in_domain_at(trial):
                inc = _phi_increase(problem, u, lam * s, g, k)
                if np.isfinite(inc) and inc <= ARMIJO * lam * slope:
                    break
            lam *= 0.5
            if lam < 1e-30:
                raise ConvergenceError(f"line search failed at t={t} (residual {best:.3e})", best_residual=best)
        u = trial
        g = _phi_grad(problem, u, k)
        res = float(np.linalg.norm(g))
        best = min(best, res)

    if newton:
        prev = np.inf
        for _ in range(polish):
            H = problem.hessian_at(u) + k * np.eye(n)
            s = -np.linalg.solve(H, g)
            size = float(np.linalg.norm(s))
            if not size < prev or not problem.in_domain_at(u + s):
                break
            u_new = u + s
            g_new = _phi_grad(problem, u_new, k)
            res_new = float(np.linalg.norm(g_new))
            if res_new > max(res, tol):
                break
            u, g, res = u_new, g_new, res_new
            it += 1
            prev = size
            if size <= 1e-12 * max(float(np.linalg.norm(u)), 1e-300):
                break

    y = problem.anchor + u
    sq = float(y @ y)
    phi_value = float(problem.objective(y)) + 0.5 * k * sq
    try:
        phi_gap = problem.gap_at(u) + 0.5 * k * sq
    except Exception:
        phi_gap = float("nan")
    return PathPoint(t=float(t), y=y, phi_value=phi_value, inner_iters=it, residual=res, beta=float(beta), u=u, phi_gap=phi_gap)


def center_path(problem, schedule, c, t_grid, tol=1e-10, warm_start=None):
    """Centers along ``t_grid``, each warm-started from the previous one."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0):
        raise ConfigurationError("t_grid must be a strictly increasing vector")
    out = []
    prev = warm_start
    for t in t_grid:
        beta = eval_schedule(schedule, t).beta
        try:
            pt = tikhonov_center(problem, c, beta, warm_start=prev, tol=tol, t=t)
        except ConvergenceError as exc:
            raise ConvergenceError(f"path failed at t={t}: {exc}", best_residual=exc.best_residual) from exc
        out.append(pt)
        prev = pt.y
    return out


def path_steps(path):
    """Offset differences between consecutive centers, free of cancellation."""
    return [b.u - a.u for a, b in zip(path[:-1], path[1:])]


def velocity_ratios(path, schedule):
    """``|dy/dt|_FD / ((beta'/beta)(t_i) |y(t_i)|)`` on each grid interval."""
    out = []
    for a, du, b in zip(path[:-1], path_steps(path), path[1:]):
        pt = eval_schedule(schedule, a.t)
        speed = np.linalg.norm(du) / (b.t - a.t)
        out.append(speed / (pt.dbeta / pt.beta * np.linalg.norm(a.y)))
    return np.array(out)


def _claimed_rate(pt, schedule, c, coefficient):
    sp = eval_schedule(schedule, pt.t)
    return -coefficient * c * sp.dbeta / sp.beta ** 2 * float(pt.y @ pt.y)


def phi_rate_mismatch(path, schedule, c, coefficient=0.5):
    """Largest relative gap between the FD slope of ``phi_t(y(t))`` and
    ``-coefficient * c * beta'/beta^2 * |y|^2`` averaged over each interval.

    The exact derivative has ``coefficient = 0.5``, since only the explicit
    ``t``-dependence of ``phi_t`` survives at the minimizer.
    """
    worst = 0.0
    for a, b in zip(path[:-1], path[1:]):
        fd = (b.phi_gap - a.phi_gap) / (b.t - a.t)
        claim = 0.5 * (_claimed_rate(a, schedule, c, coefficient) + _claimed_rate(b, schedule, c, coefficient))
        worst = max(worst, abs(fd - claim) / abs(claim))
    return worst


def norm_profile(path):
    """Norms of the centers and whether they are nondecreasing."""
    norms = np.array([np.linalg.norm(p.y) for p in path])
    return norms, bool(np.all(np.diff(norms) >= -1e-15 * norms[1:]))
