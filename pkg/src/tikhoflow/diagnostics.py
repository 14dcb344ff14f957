"""Lyapunov energy, per-sample convergence quantities, rate fits and the
descent-lemma property check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, RateUndefinedError, UnsupportedProblemError
from .schedules import log_rates

COLUMNS = ("t", "beta", "f_gap", "grad_norm_sq", "dist_center_sq", "dist_minnorm_sq", "energy")
REGRESSORS = ("log_t", "log_beta", "t")

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    beta: float
    f_gap: float
    grad_norm_sq: float
    dist_center_sq: float
    dist_minnorm_sq: float
    energy: float
    flags: tuple = ()

    def row(self):
        return tuple(getattr(self, c) for c in COLUMNS)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple
    max_abs_residual: float
    regressor: str
    column: str = ""
    n_points: int = 0
    truncated: bool = False

    def as_dict(self):
        return {
            "column": self.column,
            "regressor": self.regressor,
            "slope": self.slope,
            "intercept": self.intercept,
            "window": list(self.window),
            "max_abs_residual": self.max_abs_residual,
            "n_points": self.n_points,
            "truncated": self.truncated,
        }


def _offset(problem, x):
    # FlowState carries its offset directly; plain vectors are measured from the anchor
    w = getattr(x, "w", None)
    if w is not None:
        return w
    return np.asarray(x, dtype=float) - problem.anchor


def energy(problem, c, schedule_point, x, path_point):
    """E = beta (phi(x) - phi(y)) + (c/2)|x - y|^2 at a center ``y``.

    With ``grad phi(y) = 0`` this equals ``beta D_f(x, y) + c |x - y|^2``
    where ``D_f`` is the Bregman distance of ``f``; that form is evaluated so
    that ``E`` keeps full relative accuracy when ``x - y`` is tiny.
    ``x`` may be a point or a ``FlowState``.
    """
    beta = schedule_point.beta
    if not math.isclose(beta, path_point.beta, rel_tol=1e-12, abs_tol=0.0):
        raise ConfigurationError(
            f"schedule point (beta={beta}) and center (beta={path_point.beta}, t={path_point.t}) do not match"
        )
    w = _offset(problem, x)
    u = path_point.u if path_point.u is not None else path_point.y - problem.anchor
    d = w - u
    return beta * problem.bregman_at(w, u) + c * float(d @ d)


def annotate(problem, schedule, c, states, centers, points=None):
    """Diagnostic rows for aligned states and centers.

    ``centers`` may hold ``None`` where no center exists (``beta = 0``); those
    rows carry NaN in the center-dependent columns and a ``no_center`` flag.
    Columns that need unknown ground truth are NaN and flagged as well.
    """
    from .schedules import eval_schedule

    if len(states) != len(centers):
        raise ConfigurationError("states and centers must have the same length")
    x_star = problem.min_norm_solution
    shift = None if x_star is None else problem.anchor - np.asarray(x_star, dtype=float)
    out = []
    for k, (st, pc) in enumerate(zip(states, centers)):
        flags = []
        if pc is not None and not math.isclose(st.t, pc.t, rel_tol=1e-12, abs_tol=1e-300):
            raise ConfigurationError(f"state at t={st.t} is paired with a center at t={pc.t}")
        sp = points[k] if points is not None else eval_schedule(schedule, st.t)
        w = st.w
        try:
            gap = problem.gap_at(w)
        except UnsupportedProblemError:
            gap = math.nan
            flags.append("no_optimum_value")
        g = problem.grad_at(w)
        if shift is None:
            dmin = math.nan
            flags.append("no_min_norm_solution")
        else:
            dm = w + shift
            dmin = float(dm @ dm)
        if pc is None:
            dc = e = math.nan
            flags.append("no_center")
        else:
            d = w - pc.u
            dc = float(d @ d)
            e = energy(problem, c, sp, st, pc)
        out.append(TrajectorySample(st.t, sp.beta, gap, float(g @ g), dc, dmin, e, tuple(flags)))
    return out


def column(samples, name):
    if name not in COLUMNS:
        raise ConfigurationError(f"unknown column {name!r}; expected one of {COLUMNS}")
    return np.array([getattr(s, name) for s in samples], dtype=float)


def fit_rate(samples, column_name, regressor="log_beta", window_fraction=0.25):
    """Least-squares slope of ``log(column)`` over the final ``window_fraction``.

    Regressors: ``log_t``, ``log_beta``, or ``t`` (semi-log). When the window
    holds non-positive values the column has hit round-off; the window is then
    cut at the first value not above ``1e2 * eps * max(column)``.
    """
    if regressor not in REGRESSORS:
        raise ConfigurationError(f"regressor must be one of {REGRESSORS}")
    if not 0 < window_fraction < 1:
        raise ConfigurationError("window_fraction must lie in (0, 1)")
    t = column(samples, "t")
    y = column(samples, column_name)
    start = int(math.floor((1 - window_fraction) * t.size))
    t, y = t[start:], y[start:]
    beta = column(samples, "beta")[start:]
    truncated = False
    if np.any(~(y > 0)):
        finite = y[np.isfinite(y)]
        scale = float(np.max(np.abs(finite))) if finite.size else 0.0
        low = np.flatnonzero(~(y > 1e2 * _EPS * scale))
        stop = int(low[0]) if low.size else y.size
        t, y, beta = t[:stop], y[:stop], beta[:stop]
        truncated = True
    if y.size < 10:
        raise RateUndefinedError(f"only {y.size} usable samples for {column_name}; need 10")
    if regressor == "log_t":
        xr = np.log(t)
    elif regressor == "log_beta":
        xr = np.log(beta)
    else:
        xr = t
    ly = np.log(y)
    slope, intercept = np.polyfit(xr, ly, 1)
    resid = ly - (slope * xr + intercept)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        window=(float(t[0]), float(t[-1])),
        max_abs_residual=float(np.max(np.abs(resid))),
        regressor=regressor,
        column=column_name,
        n_points=int(y.size),
        truncated=truncated,
    )


@dataclass
class EnergyBound:
    fitted_M: float
    passed: bool
    t1: float
    ratio_tail_max: float
    ratio_tail_median: float

    def __iter__(self):
        yield self.fitted_M
        yield self.passed

    def as_dict(self):
        return {
            "fitted_M": self.fitted_M,
            "pass": self.passed,
            "t1": self.t1,
            "ratio_tail_max": self.ratio_tail_max,
            "ratio_tail_median": self.ratio_tail_median,
        }


def energy_bound_check(samples, schedule, c, mu, t1_fraction=0.25, x_star_norm=None):
    """Smallest ``M`` with ``E(t) <= E(t1) e^{-mu (t - t1)} + (c M |x*|^2 / 2) beta'/beta``
    for every sample after ``t1``.

    ``t1`` is the sample at index fraction ``t1_fraction``. Unpacks as
    ``(fitted_M, passed)``; the tail statistics of
    ``E / (e^{-mu t} + beta'/beta)`` ride along on the returned object.
    """
    if not 0 <= t1_fraction < 1:
        raise ConfigurationError("t1_fraction must lie in [0, 1)")
    t = column(samples, "t")
    E = column(samples, "energy")
    i1 = int(math.floor(t1_fraction * t.size))
    t, E = t[i1:], E[i1:]
    q, _ = log_rates(schedule, t)
    if x_star_norm is None:
        x_star_norm = math.nan
    xs2 = float(x_star_norm) ** 2
    slack = 1e-12 * float(np.nanmax(np.abs(E))) if E.size else 0.0
    finite = bool(np.all(np.isfinite(E)))
    if finite:
        excess = E - E[0] * np.exp(-mu * (t - t[0])) - slack
    if not finite:
        M = math.inf
    elif np.all(excess[1:] <= 0):
        M = 0.0
    else:
        denom = 0.5 * c * xs2 * q
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(excess > 0, excess / denom, 0.0)
        M = float(np.max(need[1:]))
        if not math.isfinite(M):
            M = math.inf
    with np.errstate(over="ignore"):
        ratio = E / (np.exp(-mu * t) + q)
    tail = ratio[ratio.size // 2:]
    rmax = float(np.max(tail)) if tail.size else math.nan
    rmed = float(np.median(tail)) if tail.size else math.nan
    passed = math.isfinite(M) and math.isfinite(rmax)
    return EnergyBound(M, passed, float(t[0]), rmax, rmed)


def center_ratio_tail_max(samples, schedule, mu, tail_fraction=0.5):
    """Tail max of ``dist_center_sq / (e^{-mu t} + beta'/beta)``."""
    t = column(samples, "t")
    d = column(samples, "dist_center_sq")
    start = int(math.floor((1 - tail_fraction) * t.size))
    q, _ = log_rates(schedule, t[start:])
    return float(np.max(d[start:] / (np.exp(-mu * t[start:]) + q)))


def scaled_gap_trend(samples, tail_fraction=0.25):
    """``beta * f_gap`` over the tail: (first, last, max)."""
    t = column(samples, "t")
    start = int(math.floor((1 - tail_fraction) * t.size))
    v = column(samples, "beta")[start:] * column(samples, "f_gap")[start:]
    return float(v[0]), float(v[-1]), float(np.max(v))


def descent_lemma_check(problem, sample_points, s=None, pairs=None):
    """Largest relative violation of the extended descent inequality and of
    ``f(x) - min f >= |grad f(x)|^2 / (2L)``.

    Pairs are all ordered pairs of ``sample_points`` unless ``pairs`` (an
    ``(m, 2)`` index array) is given. Values are taken relative to
    ``max(1, |lhs|, |rhs|)``; negative results are reported as 0.
    """
    L = problem.lipschitz_bound
    if L is None:
        raise UnsupportedProblemError(f"{problem.name} has no Lipschitz bound")
    if L == 0:
        raise UnsupportedProblemError("the check needs L > 0")
    if s is None:
        s = 1.0 / L
    if not 0 < s <= 1.0 / L * (1 + 1e-15):
        raise ConfigurationError(f"s must lie in (0, 1/L] = (0, {1 / L}]")
    P = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if P.shape[1] != problem.dimension:
        raise ConfigurationError(f"points must have {problem.dimension} coordinates")
    for p in P:
        if not problem.domain_guard(p) or not problem.lipschitz_region(p):
            raise ConfigurationError(f"point {p} lies outside the region where L holds")
    W = P - problem.anchor

    def gap(w):
        return problem.gap_at(w)

    grads = np.array([problem.grad_at(w) for w in W])
    gaps = np.array([gap(w) for w in W])
    if pairs is None:
        idx = np.array([(i, j) for i in range(len(W)) for j in range(len(W))])
    else:
        idx = np.asarray(pairs, dtype=int).reshape(-1, 2)

    worst = 0.0
    for i, j in idx:
        gx, gy = grads[i], grads[j]
        wy_next = W[j] - s * gy
        if not problem.in_domain_at(wy_next):
            raise DomainError(f"gradient step from {P[j]} leaves the domain")
        lhs = gap(wy_next)
        dg = gx - gy
        rhs = gaps[i] + float(gy @ (W[j] - W[i])) - 0.5 * s * float(gy @ gy) - 0.5 * s * float(dg @ dg)
        worst = max(worst, (lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
    for gx, gp in zip(grads, gaps):
        lhs = 0.5 / L * float(gx @ gx)
        worst = max(worst, (lhs - gp) / max(1.0, abs(lhs), abs(gp)))
    return max(0.0, worst)
