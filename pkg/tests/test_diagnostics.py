import math
from dataclasses import replace

import numpy as np
import pytest

from tikhoflow.diagnostics import (
    TrajectorySample,
    annotate,
    center_ratio_tail_max,
    descent_lemma_check,
    energy,
    energy_bound_check,
    fit_rate,
)
from tikhoflow.errors import (
    ConfigurationError,
    DomainError,
    RateUndefinedError,
    UnsupportedProblemError,
)
from tikhoflow.flows import FlowState, integrate, make_system
from tikhoflow.integrators import IntegratorConfig
from tikhoflow.problems import builtin_problem
from tikhoflow.schedules import ScheduleSpec, eval_schedule
from tikhoflow.tikhonov_path import center_path, tikhonov_center

EX1 = builtin_problem("example1")
QUAD = builtin_problem("quadratic_shift", {"a": [1.0, -2.0]})
ZERO = builtin_problem("zero")
SCHED = ScheduleSpec("power_log", m=2, p=2)


def _samples(t, values, column="f_gap", beta=None):
    beta = t if beta is None else beta
    rows = []
    for ti, bi, v in zip(t, beta, values):
        kw = dict(t=ti, beta=bi, f_gap=0.0, grad_norm_sq=0.0, dist_center_sq=0.0, dist_minnorm_sq=0.0, energy=0.0)
        kw[column] = v
        rows.append(TrajectorySample(**kw))
    return rows


def test_energy_vanishes_at_center():
    sp = eval_schedule(SCHED, 5.0)
    pc = tikhonov_center(EX1, 3.0, sp.beta, t=5.0)
    assert energy(EX1, 3.0, sp, pc.y, pc) <= 1e-25


def test_energy_quadratic_closed_form():
    c = 2.0
    sp = eval_schedule(SCHED, 4.0)
    pc = tikhonov_center(QUAD, c, sp.beta, t=4.0)
    x = np.array([0.3, 0.7])
    d = x - pc.y
    assert energy(QUAD, c, sp, x, pc) == pytest.approx((sp.beta / 2 + c) * float(d @ d), rel=1e-12)


def test_energy_matches_phi_difference():
    # E = beta (phi(x) - phi(y)) + (c/2)|x - y|^2
    c = 1.5
    sp = eval_schedule(SCHED, 3.0)
    pc = tikhonov_center(EX1, c, sp.beta, t=3.0)
    x = np.array([0.8, -0.2])

    def phi(z):
        return EX1.objective(z) + 0.5 * c / sp.beta * float(z @ z)

    d = x - pc.y
    direct = sp.beta * (phi(x) - phi(pc.y)) + 0.5 * c * float(d @ d)
    assert energy(EX1, c, sp, x, pc) == pytest.approx(direct, rel=1e-10)


def test_energy_rejects_mismatched_beta():
    sp = eval_schedule(SCHED, 3.0)
    pc = tikhonov_center(EX1, 1.0, sp.beta * 2, t=3.0)
    with pytest.raises(ConfigurationError):
        energy(EX1, 1.0, sp, np.zeros(2), pc)


def test_energy_accepts_flow_state():
    sp = eval_schedule(SCHED, 3.0)
    pc = tikhonov_center(EX1, 1.0, sp.beta, t=3.0)
    w = np.array([1e-3, -2e-3])
    st = FlowState(3.0, w.copy(), EX1.anchor)
    assert energy(EX1, 1.0, sp, st, pc) == pytest.approx(energy(EX1, 1.0, sp, EX1.anchor + w, pc), rel=1e-9)


def test_annotate_zero_problem():
    c = 5.0
    sys_ = make_system("tikhonov_first_order", ZERO, ScheduleSpec("power_log", m=1), c=c)
    states = integrate(sys_, [1.0, 2.0], 1.0, 3.0, IntegratorConfig(samples=30))
    sched = sys_.schedule
    centers = center_path(ZERO, sched, c, [s.t for s in states])
    samples = annotate(ZERO, sched, c, states, centers)
    for s, st in zip(samples, states):
        xx = float(st.x @ st.x)
        assert s.f_gap == 0.0 and s.grad_norm_sq == 0.0
        assert s.dist_minnorm_sq == pytest.approx(xx)
        assert s.energy == pytest.approx(c * xx, rel=1e-12)
        assert s.flags == ()


def test_annotate_missing_center_and_ground_truth():
    sched = ScheduleSpec("power_log", m=1)
    st = [FlowState(2.0, np.array([1.0, 1.0]), np.zeros(2))]
    ls = builtin_problem("underdetermined_ls", {"A": [[1.0, 1.0]], "b": [2.0]})
    s = annotate(ZERO, sched, 1.0, st, [None])[0]
    assert math.isnan(s.energy) and math.isnan(s.dist_center_sq)
    assert "no_center" in s.flags
    with pytest.raises(ConfigurationError):
        annotate(ZERO, sched, 1.0, st, [])
    pc = tikhonov_center(ls, 1.0, 2.0, t=3.0)
    with pytest.raises(ConfigurationError):
        annotate(ls, sched, 1.0, st, [pc])


def test_fit_rate_semilog_exponential():
    c = 0.8
    t = np.linspace(1.0, 20.0, 200)
    s = _samples(t, np.exp(-2 * c * t), column="dist_minnorm_sq")
    fit = fit_rate(s, "dist_minnorm_sq", regressor="t")
    assert fit.slope == pytest.approx(-2 * c, rel=5e-3)
    assert fit.n_points == 50 and not fit.truncated


def test_fit_rate_log_beta():
    t = np.geomspace(10.0, 1e4, 100)
    beta = t ** 2 * np.log(t) ** 2
    fit = fit_rate(_samples(t, 3.0 / beta ** 2, beta=beta), "f_gap")
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)
    assert fit.max_abs_residual <= 1e-10


def test_fit_rate_truncates_at_roundoff():
    t = np.geomspace(1.0, 1e3, 200)
    v = t ** -2.0
    v[-10:] = 0.0
    fit = fit_rate(_samples(t, v), "f_gap", regressor="log_t", window_fraction=0.5)
    assert fit.truncated and fit.n_points == 90
    assert fit.slope == pytest.approx(-2.0)


def test_fit_rate_undefined():
    t = np.geomspace(1.0, 1e3, 100)
    v = t ** -2.0
    v[-20:] = 0.0
    with pytest.raises(RateUndefinedError):
        fit_rate(_samples(t, v), "f_gap", regressor="log_t")
    with pytest.raises(ConfigurationError):
        fit_rate(_samples(t, v), "f_gap", regressor="sqrt_t")
    with pytest.raises(ConfigurationError):
        fit_rate(_samples(t, v), "nonsense")


def test_energy_bound_pure_decay_passes_with_zero_M():
    t = np.linspace(10.0, 50.0, 100)
    s = _samples(t, np.exp(-2.0 * t), column="energy")
    M, ok = energy_bound_check(s, SCHED, 5.0, 2.0, x_star_norm=1.0)
    assert ok and M == 0.0


def test_energy_bound_fits_rate_term():
    t = np.linspace(10.0, 50.0, 100)
    sched = ScheduleSpec("power_log", m=2)
    E = 0.5 * 5.0 * 3.0 * 4.0 * (2.0 / t)  # (c M |x*|^2 / 2) beta'/beta with M = 3, |x*| = 2
    s = _samples(t, E, column="energy")
    res = energy_bound_check(s, sched, 5.0, 1.0, t1_fraction=0.0, x_star_norm=2.0)
    assert res.passed
    assert 0 < res.fitted_M <= 3.0 * (1 + 1e-9)


def test_energy_bound_fails_on_growth():
    t = np.linspace(10.0, 50.0, 100)
    s = _samples(t, np.full(t.size, np.inf), column="energy")
    M, ok = energy_bound_check(s, SCHED, 5.0, 2.0, x_star_norm=1.0)
    assert not ok and M == math.inf
    with pytest.raises(ConfigurationError):
        energy_bound_check(s, SCHED, 5.0, 2.0, t1_fraction=1.0)


def test_center_ratio():
    t = np.linspace(10.0, 50.0, 40)
    sched = ScheduleSpec("power_log", m=2)
    s = _samples(t, 2.0 / t, column="dist_center_sq")
    assert center_ratio_tail_max(s, sched, 3.0) == pytest.approx(1.0, rel=1e-9)


def test_descent_lemma_example1():
    g = np.linspace(-0.5, 3.0, 8)
    pts = np.array([[a, b] for a in g for b in g])
    assert descent_lemma_check(EX1, pts) <= 1e-12


def test_descent_lemma_quadratic_is_tight():
    rng = np.random.default_rng(3)
    assert descent_lemma_check(QUAD, rng.uniform(-4, 4, (20, 2))) <= 1e-12


def test_descent_lemma_detects_wrong_constant():
    bad = replace(QUAD, lipschitz_bound=0.25)
    rng = np.random.default_rng(4)
    assert descent_lemma_check(bad, rng.uniform(-4, 4, (10, 2))) > 1e-3


def test_descent_lemma_errors():
    with pytest.raises(ConfigurationError):
        descent_lemma_check(EX1, [[-0.9, 0.0]])
    with pytest.raises(ConfigurationError):
        descent_lemma_check(EX1, [[0.0, 0.0]], s=1.0)
    with pytest.raises(ConfigurationError):
        descent_lemma_check(EX1, [[0.0, 0.0, 0.0]])
    with pytest.raises(UnsupportedProblemError):
        descent_lemma_check(replace(EX1, lipschitz_bound=None), [[0.0, 0.0]])
    # a region that admits points whose gradient step leaves the domain
    loose = replace(EX1, lipschitz_region=lambda x: True, lipschitz_bound=0.2)
    with pytest.raises(DomainError):
        descent_lemma_check(loose, [[3.0, -0.5]])
