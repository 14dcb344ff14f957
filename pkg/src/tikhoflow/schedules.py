"""Time-scaling schedules beta(t) and the growth-condition checker.

Two families are supported::

    power_log:  beta(t) = s * t**m * log(t)**p
    power_exp:  beta(t) = s * t**m * exp(gamma * t**r)

``s`` is a positive ``scale`` (1 by default). First and second derivatives are
closed form. ``log_beta`` and ``log_rates`` give log(beta), beta'/beta and
beta''/beta' without ever forming beta, so the checker works on grids where
beta itself overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError, ScheduleRejectedError

FAMILIES = ("power_log", "power_exp")


@dataclass(frozen=True)
class ScheduleSpec:
    family: str
    m: float = 0.0
    p: float = 0.0
    gamma: float = 1.0
    r: float = 1.0
    scale: float = 1.0
    t_min: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown schedule family {self.family!r}; expected one of {FAMILIES}")
        for name in ("m", "p", "gamma", "r", "scale", "t_min"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigurationError(f"schedule.{name} must be a finite number")
            object.__setattr__(self, name, float(value))
        if self.m < 0:
            raise ConfigurationError("schedule.m must be nonnegative")
        if self.scale <= 0:
            raise ConfigurationError("schedule.scale must be positive")
        if self.t_min <= 0:
            raise ConfigurationError("schedule.t_min must be positive")
        if self.family == "power_log":
            if self.p < 0:
                raise ConfigurationError("schedule.p must be nonnegative")
            if self.m == 0 and self.p == 0:
                raise ConfigurationError("power_log needs (m, p) != (0, 0)")
            if self.t_min < 1:
                raise ConfigurationError("power_log needs t_min >= 1 so that log(t) >= 0")
        else:
            if self.gamma <= 0:
                raise ConfigurationError("schedule.gamma must be positive")
            if not 0 < self.r <= 1:
                raise ConfigurationError("schedule.r must lie in (0, 1]")

    # fast scalar path used by the flow right-hand sides
    def beta(self, t):
        if self.family == "power_log":
            val = self.scale
            if self.m:
                val *= t ** self.m
            if self.p:
                val *= math.log(t) ** self.p
            return val
        try:
            val = self.scale * math.exp(self.gamma * t ** self.r)
        except OverflowError:
            return math.inf
        return val * t ** self.m if self.m else val

    def describe(self):
        if self.family == "power_log":
            return f"{self.scale:g}*t^{self.m:g}*ln(t)^{self.p:g}"
        return f"{self.scale:g}*t^{self.m:g}*exp({self.gamma:g}*t^{self.r:g})"

    def as_dict(self):
        out = {"family": self.family, "m": self.m, "scale": self.scale, "t_min": self.t_min}
        if self.family == "power_log":
            out["p"] = self.p
        else:
            out.update(gamma=self.gamma, r=self.r)
        return out


@dataclass(frozen=True)
class SchedulePoint:
    beta: float
    dbeta: float
    ddbeta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise DomainError("beta must be nonnegative")


def _term(coef, t, a, L, b):
    # coef * t**a * L**b, skipping zero coefficients so that 0 * inf never appears
    if coef == 0:
        return 0.0
    return coef * t ** a * L ** b


def eval_schedule(spec, t):
    """Return ``(beta, beta', beta'')`` at a scalar time ``t >= spec.t_min``.

    >>> eval_schedule(ScheduleSpec("power_log", m=2), 10.0)
    SchedulePoint(beta=100.0, dbeta=20.0, ddbeta=2.0)
    """
    t = float(t)
    if not t >= spec.t_min:
        raise DomainError(f"t={t} is below the schedule's t_min={spec.t_min}")
    s, m = spec.scale, spec.m
    if spec.family == "power_log":
        p = spec.p
        L = math.log(t)
        beta = s * _term(1.0, t, m, L, p)
        dbeta = s * (_term(m, t, m - 1, L, p) + _term(p, t, m - 1, L, p - 1))
        ddbeta = s * (
            _term(m * (m - 1), t, m - 2, L, p)
            + _term(p * (2 * m - 1), t, m - 2, L, p - 1)
            + _term(p * (p - 1), t, m - 2, L, p - 2)
        )
    else:
        g, r = spec.gamma, spec.r
        try:
            e = math.exp(g * t ** r)
        except OverflowError:
            raise DomainError(f"beta overflows at t={t}") from None
        q = m / t + r * g * t ** (r - 1)
        dq = -m / t ** 2 + r * (r - 1) * g * t ** (r - 2)
        beta = s * t ** m * e
        dbeta = beta * q
        ddbeta = beta * (q * q + dq)
    if not (math.isfinite(beta) and math.isfinite(dbeta) and math.isfinite(ddbeta)):
        raise DomainError(f"schedule is not finite at t={t}")
    return SchedulePoint(beta, dbeta, ddbeta)


def log_beta(spec, t):
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, math.log(spec.scale))
    if spec.m:
        out = out + spec.m * np.log(t)
    if spec.family == "power_log":
        if spec.p:
            with np.errstate(divide="ignore"):
                out = out + spec.p * np.log(np.log(t))
        return out
    return out + spec.gamma * t ** spec.r


def log_rates(spec, t):
    """``beta'/beta`` and ``beta''/beta'`` on an array of times."""
    t = np.asarray(t, dtype=float)
    m = spec.m
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.family == "power_log":
            p = spec.p
            L = np.log(t)
            q = m / t + p / (t * L) if p else m / t
            num = m * (m - 1) * L * L + p * (2 * m - 1) * L + p * (p - 1)
            ratio = num / (t * L * (m * L + p))
        else:
            g, r = spec.gamma, spec.r
            q = m / t + r * g * t ** (r - 1)
            dq = -m / t ** 2 + r * (r - 1) * g * t ** (r - 2)
            ratio = q + dq / q
    return q, ratio


@dataclass
class HBetaReport:
    c: float
    mu: float
    cond_ii_margin: float
    cond_iii_estimate: float
    cond_iii_reference: Optional[float]
    verdict: bool
    cond_iii_limit: Optional[float] = None
    t_ii_onset: Optional[float] = None
    tail_start: float = float("nan")
    diagnostic: str = ""
    schedule: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "c": self.c,
            "mu": self.mu,
            "cond_ii_margin": self.cond_ii_margin,
            "cond_iii_estimate": self.cond_iii_estimate,
            "cond_iii_reference": self.cond_iii_reference,
            "cond_iii_limit": self.cond_iii_limit,
            "verdict": self.verdict,
            "t_ii_onset": self.t_ii_onset,
            "tail_start": self.tail_start,
            "diagnostic": self.diagnostic,
            "schedule": self.schedule,
        }


def reference_limits(spec, c, mu):
    """Reference value and exact limit of the condition-(iii) quotient.

    Returns ``(reference, limit)``. The reference for ``power_exp`` with
    ``r = 1`` is ``(1 + gamma)/mu``. The exact limit keeps the ``1/(c - mu)``
    weight on beta'/beta -> gamma, so the two agree only when ``c - mu = 1``.
    """
    if spec.family == "power_exp" and spec.r == 1.0:
        return (1 + spec.gamma) / mu, (1 + spec.gamma / (c - mu)) / mu
    return 1 / mu, 1 / mu


def check_hbeta(spec, c, mu, t_grid, tail_fraction=0.25):
    """Evaluate the growth conditions on a grid and estimate the tail limsup.

    Parameters
    ----------
    spec : ScheduleSpec
    c : float
        Tikhonov coefficient.
    mu : float
        Candidate rate, must lie in ``(0, c)``.
    t_grid : array_like
        Increasing times, at least 50 of them, all ``>= spec.t_min``.

    Returns
    -------
    HBetaReport
    """
    if not c > 0:
        raise ConfigurationError("c must be positive")
    if not 0 < mu < c:
        raise ConfigurationError(f"mu must lie in (0, c) = (0, {c}), got {mu}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 50:
        raise ConfigurationError("t_grid needs at least 50 points")
    if np.any(np.diff(t) <= 0):
        raise ConfigurationError("t_grid must be strictly increasing")
    if t[0] < spec.t_min:
        raise ConfigurationError(f"t_grid starts below t_min={spec.t_min}")

    q, ratio = log_rates(spec, t)
    margin = (c - mu) - q
    start = int(math.floor((1 - tail_fraction) * t.size))
    tail = slice(start, t.size)

    ok = margin >= 0
    onset = None
    if ok[-1]:
        bad = np.flatnonzero(~ok)
        onset = float(t[bad[-1] + 1]) if bad.size else float(t[0])

    num = 1 + q / (c - mu)
    den = mu + ratio - q
    diagnostic = []
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = num / den
    den_tail = den[tail]
    if np.any(~(den_tail > 0)):
        k = start + int(np.flatnonzero(~(den_tail > 0))[0])
        diagnostic.append(f"condition (iii) denominator is {den[k]:.3g} <= 0 at t={t[k]:.6g}")
        estimate = float("inf")
    else:
        estimate = float(np.max(quotient[tail]))
    cond_ii = float(np.min(margin[tail]))
    if cond_ii < 0:
        k = start + int(np.argmin(margin[tail]))
        diagnostic.append(f"beta'/beta = {q[k]:.6g} exceeds c - mu = {c - mu:.6g} at t={t[k]:.6g}")
    verdict = cond_ii >= 0 and math.isfinite(estimate)
    reference, limit = reference_limits(spec, c, mu)
    return HBetaReport(
        c=float(c),
        mu=float(mu),
        cond_ii_margin=cond_ii,
        cond_iii_estimate=estimate,
        cond_iii_reference=reference,
        verdict=bool(verdict),
        cond_iii_limit=limit,
        t_ii_onset=onset,
        tail_start=float(t[start]),
        diagnostic="; ".join(diagnostic),
        schedule=spec.as_dict(),
    )


def suggest_mu(spec, c, t_grid, levels=6):
    """Largest passing ``mu`` on the dyadic grid ``c*k/2**levels``.

    Returns ``c/2`` when every candidate passes.
    """
    if not c > 0:
        raise ConfigurationError("c must be positive")
    n = 2 ** levels
    passing = []
    last = None
    for k in range(1, n):
        rep = check_hbeta(spec, c, c * k / n, t_grid)
        if rep.verdict:
            passing.append(rep.mu)
        else:
            last = rep
    if not passing:
        raise ScheduleRejectedError(
            f"no mu in (0, {c}) satisfies the growth conditions for {spec.describe()}: {last.diagnostic}",
            report=last,
        )
    if len(passing) == n - 1:
        return c / 2
    return max(passing)


def default_grid(spec, t_hi=1e6, n=400):
    lo = max(spec.t_min, 10.0)
    return np.geomspace(lo, t_hi, n)
