"""Convex test objectives with derivatives and ground-truth optimum data.

Every problem carries an ``anchor`` point (the known minimum-norm solution for
the built-ins, the origin otherwise) and optional *offset* callables that take
a deviation ``w = x - anchor``. The offset forms are written so that no
cancellation happens when ``w`` is tiny, which is what lets trajectories and
regularization paths be resolved far below one ulp of ``x`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ConvergenceError, UnsupportedProblemError

Vector = np.ndarray

BUILTIN_NAMES = ("example1", "quadratic_shift", "underdetermined_ls", "zero")


def log1pmx(u):
    """``log(1 + u) - u`` without cancellation for small ``|u|``."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-2
    out = np.empty_like(u)
    us = u[small]
    # alternating series, truncation error < |u|^9/9 < 1e-19 * u^2
    out[small] = us * us * (-1 / 2 + us * (1 / 3 + us * (-1 / 4 + us * (1 / 5 + us * (-1 / 6 + us * (1 / 7 - us / 8))))))
    ub = u[~small]
    out[~small] = np.log1p(ub) - ub
    return out


def _always(_x):
    return True


@dataclass(frozen=True)
class ProblemSpec:
    """A smooth convex objective plus whatever ground truth is known about it.

    ``objective``, ``gradient`` and ``hessian_vec`` act on points ``x``. The
    ``offset_*`` callables act on deviations from ``anchor``; when a problem
    does not provide them they are derived from the point forms.
    """

    name: str
    dimension: int
    objective: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    domain_guard: Callable[[Vector], bool] = _always
    hessian_vec: Optional[Callable[[Vector, Vector], Vector]] = None
    lipschitz_bound: Optional[float] = None
    optimum_value: Optional[float] = None
    min_norm_solution: Optional[Vector] = None
    anchor: Optional[Vector] = None
    offset_gradient: Optional[Callable[[Vector], Vector]] = None
    offset_hessian_vec: Optional[Callable[[Vector, Vector], Vector]] = None
    offset_gap: Optional[Callable[[Vector], float]] = None
    offset_bregman: Optional[Callable[[Vector, Vector], float]] = None
    lipschitz_region: Callable[[Vector], bool] = _always
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigurationError("dimension must be positive")
        if self.anchor is None:
            object.__setattr__(self, "anchor", np.zeros(self.dimension))

    # offset-coordinate evaluation; everything downstream goes through these

    def x_of(self, w):
        return self.anchor + w

    def grad_at(self, w):
        if self.offset_gradient is not None:
            return self.offset_gradient(w)
        return self.gradient(self.anchor + w)

    def hvp_at(self, w, v):
        if self.offset_hessian_vec is not None:
            return self.offset_hessian_vec(w, v)
        if self.hessian_vec is None:
            raise UnsupportedProblemError(f"{self.name} has no Hessian-vector product")
        return self.hessian_vec(self.anchor + w, v)

    def hessian_at(self, w):
        eye = np.eye(self.dimension)
        return np.column_stack([self.hvp_at(w, eye[:, k]) for k in range(self.dimension)])

    def gap_at(self, w):
        """``f(anchor + w) - min f``."""
        if self.offset_gap is not None:
            return float(self.offset_gap(w))
        if self.optimum_value is None:
            raise UnsupportedProblemError(f"{self.name} has no known optimum value")
        return float(self.objective(self.anchor + w) - self.optimum_value)

    def bregman_at(self, w1, w2):
        """``f(x1) - f(x2) - <grad f(x2), x1 - x2>`` for ``xi = anchor + wi``."""
        if self.offset_bregman is not None:
            return float(self.offset_bregman(w1, w2))
        x1, x2 = self.anchor + w1, self.anchor + w2
        return float(self.objective(x1) - self.objective(x2) - self.gradient(x2) @ (x1 - x2))

    def in_domain_at(self, w):
        return bool(np.all(np.isfinite(w))) and bool(self.domain_guard(self.anchor + w))

    @property
    def has_hessian(self):
        return self.hessian_vec is not None or self.offset_hessian_vec is not None


def _vector(value, name, dim=None):
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} must be numeric") from exc
    if arr.ndim != 1 or (dim is not None and arr.size != dim):
        raise ConfigurationError(f"{name} must be a vector" + (f" of length {dim}" if dim else ""))
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    return arr


def _example1(params):
    if params:
        raise ConfigurationError(f"example1 takes no parameters, got {sorted(params)}")

    def objective(x):
        return 0.5 * (x[0] + x[1]) ** 2 - np.log1p(x[0]) - np.log1p(x[1])

    def gradient(x):
        s = x[0] + x[1]
        return np.array([s - 1.0 / (x[0] + 1.0), s - 1.0 / (x[1] + 1.0)])

    def hessian_vec(x, v):
        d = 1.0 / (x + 1.0) ** 2
        return (v[0] + v[1]) + d * v

    def domain_guard(x):
        return bool(np.all(x > -1.0))

    # polish the closed-form minimizer with Newton on the gradient
    xs = np.full(2, (np.sqrt(3.0) - 1.0) / 2.0)
    for _ in range(5):
        hess = np.column_stack([hessian_vec(xs, e) for e in np.eye(2)])
        xs = xs - np.linalg.solve(hess, gradient(xs))
    fstar = float(objective(xs))
    one_plus = 1.0 + xs

    # centred forms: (s - s*) + w_i / ((1 + x_i)(1 + x*_i)), using s* = 1/(1 + x*_i)
    def offset_gradient(w):
        return (w[0] + w[1]) + w / ((one_plus + w) * one_plus)

    def offset_hessian_vec(w, v):
        return (v[0] + v[1]) + v / (one_plus + w) ** 2

    def offset_gap(w):
        return 0.5 * (w[0] + w[1]) ** 2 - float(np.sum(log1pmx(w / one_plus)))

    def offset_bregman(w1, w2):
        d = w1 - w2
        return 0.5 * (d[0] + d[1]) ** 2 - float(np.sum(log1pmx(d / (one_plus + w2))))

    return ProblemSpec(
        name="example1",
        dimension=2,
        objective=objective,
        gradient=gradient,
        hessian_vec=hessian_vec,
        domain_guard=domain_guard,
        # largest Hessian eigenvalue on {x_i >= -1/2} is 1 + 4 + 1
        lipschitz_bound=6.0,
        optimum_value=fstar,
        min_norm_solution=xs.copy(),
        anchor=xs.copy(),
        offset_gradient=offset_gradient,
        offset_hessian_vec=offset_hessian_vec,
        offset_gap=offset_gap,
        offset_bregman=offset_bregman,
        lipschitz_region=lambda x: bool(np.all(x >= -0.5)),
        params={},
    )


def _quadratic_shift(params):
    extra = set(params) - {"a"}
    if extra or "a" not in params:
        raise ConfigurationError("quadratic_shift needs exactly the parameter 'a'")
    a = _vector(params["a"], "a")

    def objective(x):
        d = x - a
        return 0.5 * float(d @ d)

    return ProblemSpec(
        name="quadratic_shift",
        dimension=a.size,
        objective=objective,
        gradient=lambda x: x - a,
        hessian_vec=lambda x, v: np.array(v, dtype=float),
        lipschitz_bound=1.0,
        optimum_value=0.0,
        min_norm_solution=a.copy(),
        anchor=a.copy(),
        offset_gradient=lambda w: np.array(w, dtype=float),
        offset_hessian_vec=lambda w, v: np.array(v, dtype=float),
        offset_gap=lambda w: 0.5 * float(w @ w),
        offset_bregman=lambda w1, w2: 0.5 * float((w1 - w2) @ (w1 - w2)),
        params={"a": a.tolist()},
    )


def _underdetermined_ls(params):
    extra = set(params) - {"A", "b"}
    if extra or not {"A", "b"} <= set(params):
        raise ConfigurationError("underdetermined_ls needs exactly the parameters 'A' and 'b'")
    try:
        A = np.atleast_2d(np.asarray(params["A"], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("A must be a numeric matrix") from exc
    if A.ndim != 2:
        raise ConfigurationError("A must be a matrix")
    rows, cols = A.shape
    if rows >= cols:
        raise ConfigurationError(f"A must be wide (rows < cols), got {rows}x{cols}")
    b = _vector(params["b"], "b", rows)
    xs = np.linalg.pinv(A) @ b
    if np.linalg.norm(A @ xs - b) > 1e-10 * (1.0 + np.linalg.norm(b)):
        raise ConfigurationError("A x = b is inconsistent")
    AtA = A.T @ A
    L = float(np.linalg.eigvalsh(AtA)[-1])

    def objective(x):
        r = A @ x - b
        return 0.5 * float(r @ r)

    def offset_gap(w):
        r = A @ w
        return 0.5 * float(r @ r)

    return ProblemSpec(
        name="underdetermined_ls",
        dimension=cols,
        objective=objective,
        gradient=lambda x: A.T @ (A @ x - b),
        hessian_vec=lambda x, v: AtA @ v,
        lipschitz_bound=L,
        optimum_value=0.0,
        min_norm_solution=xs.copy(),
        anchor=xs.copy(),
        # consistency makes A x* = b, so the residual is exactly A w
        offset_gradient=lambda w: A.T @ (A @ w),
        offset_hessian_vec=lambda w, v: AtA @ v,
        offset_gap=offset_gap,
        offset_bregman=lambda w1, w2: offset_gap(w1 - w2),
        params={"A": A.tolist(), "b": b.tolist()},
    )


def _zero(params):
    extra = set(params) - {"dimension"}
    if extra:
        raise ConfigurationError(f"zero takes only 'dimension', got {sorted(extra)}")
    n = params.get("dimension", 2)
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ConfigurationError("dimension must be a positive integer")
    n = int(n)
    return ProblemSpec(
        name="zero",
        dimension=n,
        objective=lambda x: 0.0,
        gradient=lambda x: np.zeros(n),
        hessian_vec=lambda x, v: np.zeros(n),
        lipschitz_bound=0.0,
        optimum_value=0.0,
        min_norm_solution=np.zeros(n),
        offset_gradient=lambda w: np.zeros(n),
        offset_hessian_vec=lambda w, v: np.zeros(n),
        offset_gap=lambda w: 0.0,
        offset_bregman=lambda w1, w2: 0.0,
        params={"dimension": n},
    )


_BUILDERS = {
    "example1": _example1,
    "quadratic_shift": _quadratic_shift,
    "underdetermined_ls": _underdetermined_ls,
    "zero": _zero,
}


def builtin_problem(name, params=None):
    """Build one of the named test problems.

    >>> builtin_problem("quadratic_shift", {"a": [3, 4]}).min_norm_solution
    array([3., 4.])
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; expected one of {', '.join(BUILTIN_NAMES)}"
        ) from None
    return builder(dict(params or {}))


def min_norm_oracle(problem, tol=1e-12):
    """Ground-truth minimum-norm minimizer, accurate to ``tol`` in norm."""
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    if problem.name == "underdetermined_ls" and "A" in problem.params:
        A = np.asarray(problem.params["A"], dtype=float)
        b = np.asarray(problem.params["b"], dtype=float)
        return np.linalg.pinv(A) @ b
    if problem.min_norm_solution is None:
        raise UnsupportedProblemError(f"{problem.name} has no known minimum-norm solution")
    x = np.array(problem.min_norm_solution, dtype=float)
    if problem.has_hessian and problem.name == "example1":
        # strictly convex: Newton from the stored value must not move it by more than tol
        for _ in range(50):
            step = np.linalg.solve(problem.hessian_at(x - problem.anchor), problem.gradient(x))
            x = x - step
            if np.linalg.norm(step) <= tol:
                return x
        raise ConvergenceError("Newton polish of the minimizer did not settle")
    return x


def fd_gradient(objective, x):
    """Central differences with step ``max(1e-6, 1e-6 * |x|)``."""
    x = np.asarray(x, dtype=float)
    h = max(1e-6, 1e-6 * float(np.linalg.norm(x)))
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (objective(x + e) - objective(x - e)) / (2 * h)
    return g


def fd_hessian_vec(gradient, x, v):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return np.zeros_like(x)
    h = max(1e-6, 1e-6 * float(np.linalg.norm(x))) / nv
    return (gradient(x + h * v) - gradient(x - h * v)) / (2 * h)


def gradient_error(problem, x):
    """``|grad - FD(objective)| / (1 + |grad|)`` at one point."""
    g = problem.gradient(x)
    return float(np.linalg.norm(g - fd_gradient(problem.objective, x)) / (1.0 + np.linalg.norm(g)))


def hessian_vec_error(problem, x, v):
    hv = problem.hessian_vec(x, v)
    return float(
        np.linalg.norm(hv - fd_hessian_vec(problem.gradient, x, v)) / (1.0 + np.linalg.norm(hv))
    )
