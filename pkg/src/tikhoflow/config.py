"""Run configuration: flat ``key = value`` files, overrides and presets."""

from __future__ import annotations

import ast
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UnsupportedProblemError
from .flows import KINDS, make_system
from .integrators import IntegratorConfig
from .problems import builtin_problem
from .schedules import ScheduleSpec

DEFAULT_OUT = "tikhoflow_out"

_PROBLEM_PARAMS = {"a", "A", "b", "dimension"}
_SCHEDULE_KEYS = {"family", "m", "p", "gamma", "r", "scale", "t_min"}
_INTEGRATOR_KEYS = {"rel_tol", "abs_tol", "h_init", "h_min", "max_steps", "method"}
_RUN_KEYS = {"name", "t0", "t_end", "x0", "v0", "samples", "mu", "t1_fraction", "window_fraction"}
_FLOW_KEYS = {"kind", "c", "alpha"}
_FIXED_SCHEDULE = {"tral": "power_log", "trisal": "power_log", "trae": "power_exp", "trisae": "power_exp"}


def known_key(key):
    section, _, name = key.partition(".")
    allowed = {
        "problem": _PROBLEM_PARAMS | {"name"},
        "flow": _FLOW_KEYS,
        "schedule": _SCHEDULE_KEYS,
        "integrator": _INTEGRATOR_KEYS,
        "run": _RUN_KEYS,
        "output": {"dir"},
    }
    return name in allowed.get(section, ())


def parse_value(text):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_assignment(item):
    if "=" not in item:
        raise ConfigurationError(f"expected KEY=VALUE, got {item!r}")
    key, _, value = item.partition("=")
    key = key.strip()
    if not known_key(key):
        raise ConfigurationError(f"unknown config key {key!r}")
    return key, parse_value(value)


def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            key, value = parse_assignment(line)
        except ConfigurationError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from None
        out[key] = value
    return out


def load_config_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _num(flat, key, default=None, kind=float):
    value = flat.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key} must be a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigurationError(f"{key} must be an integer")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError(f"{key} must be finite")
    return value


@dataclass(frozen=True)
class RunConfig:
    name: str
    problem: str
    problem_params: dict
    kind: str
    c: Optional[float]
    alpha: Optional[float]
    schedule: Optional[ScheduleSpec]
    integrator: IntegratorConfig
    t0: float
    t_end: float
    x0: tuple
    v0: Optional[tuple] = None
    mu: Optional[float] = None
    t1_fraction: float = 0.25
    window_fraction: float = 0.25
    out_dir: str = DEFAULT_OUT
    flat: dict = field(default_factory=dict, compare=False)

    def build(self):
        """Problem and system for this run."""
        problem = builtin_problem(self.problem, self.problem_params)
        system = make_system(self.kind, problem, self.schedule, self.c, self.alpha)
        return problem, system

    def initial_state(self, system):
        z = np.array(self.x0, dtype=float)
        if system.second_order:
            v = np.zeros_like(z) if self.v0 is None else np.array(self.v0, dtype=float)
            z = np.concatenate([z, v])
        return z

    def echo(self):
        out = dict(self.flat)
        out.update({
            "run.name": self.name,
            "problem.name": self.problem,
            "flow.kind": self.kind,
            "run.t0": self.t0,
            "run.t_end": self.t_end,
            "run.x0": list(self.x0),
            "run.samples": self.integrator.samples,
        })
        return dict(sorted(out.items()))


def config_from_flat(flat, out_dir=None):
    """Validate a flat key map and fill in the documented defaults."""
    flat = dict(flat)
    for key in flat:
        if not known_key(key):
            raise ConfigurationError(f"unknown config key {key!r}")
    kind = flat.get("flow.kind", "tikhonov_first_order")
    if kind not in KINDS:
        raise ConfigurationError(f"unknown flow kind {kind!r}; expected one of {', '.join(KINDS)}")
    pname = flat.get("problem.name", "example1")
    params = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("problem.") and k != "problem.name"}
    problem = builtin_problem(pname, params)

    c = _num(flat, "flow.c")
    alpha = _num(flat, "flow.alpha")
    if kind == "tikhonov_first_order":
        if c is None:
            raise ConfigurationError("flow.c is required for tikhonov_first_order")
        if not c > 0:
            raise ConfigurationError(f"flow.c must be positive, got {c}")

    sched_keys = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("schedule.")}
    schedule = None
    if sched_keys:
        if "family" not in sched_keys:
            raise ConfigurationError("schedule.family is required when other schedule keys are set")
        kwargs = {}
        for k, v in sched_keys.items():
            if k == "family":
                continue
            kwargs[k] = _num(flat, f"schedule.{k}")
        schedule = ScheduleSpec(sched_keys["family"], **kwargs)
    elif kind == "tikhonov_first_order":
        raise ConfigurationError("tikhonov_first_order needs schedule.family")

    integ = {}
    for k in _INTEGRATOR_KEYS:
        key = f"integrator.{k}"
        if key in flat:
            integ[k] = flat[key] if k == "method" else _num(flat, key, kind=int if k == "max_steps" else float)
    samples = _num(flat, "run.samples", 400, kind=int)
    integrator = IntegratorConfig(samples=samples, **integ)

    family = schedule.family if schedule is not None else _FIXED_SCHEDULE.get(kind, "power_log")
    t0 = _num(flat, "run.t0", 1.0)
    t_end = _num(flat, "run.t_end", 1e4 if family == "power_log" else 1e2)
    if not t_end > t0:
        raise ConfigurationError("run.t_end must exceed run.t0")

    default_x0 = [1.0, 1.0] if pname == "example1" else [1.0] * problem.dimension
    x0 = flat.get("run.x0", default_x0)
    try:
        x0 = tuple(float(v) for v in np.atleast_1d(np.asarray(x0, dtype=float)))
    except (TypeError, ValueError):
        raise ConfigurationError(f"run.x0 must be a numeric vector, got {x0!r}") from None
    if len(x0) != problem.dimension:
        raise ConfigurationError(f"run.x0 must have length {problem.dimension}")
    if not problem.domain_guard(np.array(x0)):
        raise ConfigurationError(f"run.x0={x0} lies outside the domain of {pname}")
    v0 = flat.get("run.v0")
    if v0 is not None:
        v0 = tuple(float(v) for v in np.atleast_1d(np.asarray(v0, dtype=float)))
        if len(v0) != problem.dimension:
            raise ConfigurationError(f"run.v0 must have length {problem.dimension}")

    mu = _num(flat, "run.mu")
    t1f = _num(flat, "run.t1_fraction", 0.25)
    wf = _num(flat, "run.window_fraction", 0.25)
    name = str(flat.get("run.name", kind if kind != "tikhonov_first_order" else f"{pname}_{family}"))
    if out_dir is None:
        out_dir = flat.get("output.dir") or os.environ.get("TIKHOFLOW_OUT") or DEFAULT_OUT
    cfg = RunConfig(
        name=name, problem=pname, problem_params=params, kind=kind, c=c, alpha=alpha,
        schedule=schedule, integrator=integrator, t0=t0, t_end=t_end, x0=x0, v0=v0,
        mu=mu, t1_fraction=t1f, window_fraction=wf, out_dir=str(out_dir), flat=flat,
    )
    # catches contradictions with the comparators' fixed coefficients; a
    # problem lacking a capability is left to fail at run time
    try:
        cfg.build()
    except UnsupportedProblemError:
        pass
    return cfg


def with_out_dir(cfg, out_dir):
    return replace(cfg, out_dir=str(out_dir))


# Presets. Unstated experiment parameters use: t0 = 1, x0 = (1, 1) on example1,
# horizon 1e4 for power_log schedules and 1e2 for power_exp schedules.

_FIG_TOL = {"integrator.rel_tol": 1e-6}

RUN_PRESETS = {
    "tral": {"flow.kind": "tral"},
    "trae": {"flow.kind": "trae"},
    "trisal": {"flow.kind": "trisal"},
    "trisae": {"flow.kind": "trisae", **_FIG_TOL},
    "trisg": {"flow.kind": "trisg"},
    "trish": {"flow.kind": "trish"},
    "example1_log": {
        "run.name": "example1_log", "flow.c": 5.0,
        "schedule.family": "power_log", "schedule.m": 2, "schedule.p": 2,
    },
    "example1_exp": {
        "run.name": "example1_exp", "flow.c": 5.0,
        "schedule.family": "power_exp", "schedule.m": 2, "schedule.gamma": 2, "schedule.r": 0.9,
    },
    "minnorm_ls": {
        "run.name": "minnorm_ls", "problem.name": "underdetermined_ls",
        "problem.A": [[1.0, 1.0]], "problem.b": [2.0], "flow.c": 2.0,
        "schedule.family": "power_log", "schedule.m": 2, "run.t_end": 1e4, "run.x0": [3.0, -2.0],
    },
    "zero_smoke": {
        "run.name": "zero_smoke", "problem.name": "zero", "flow.c": 5.0,
        "schedule.family": "power_log", "schedule.m": 1, "run.t_end": 10.0, "run.samples": 100,
    },
}

_SHARED_100 = {"run.t_end": 100.0, **_FIG_TOL}

COMPARE_PRESETS = {
    "figure1": [
        {"run.name": "log_2t2ln2", "flow.c": 5.0, "schedule.family": "power_log",
         "schedule.m": 2, "schedule.p": 2, "schedule.scale": 2.0, **_SHARED_100},
        {"run.name": "log_t3ln3", "flow.c": 5.0, "schedule.family": "power_log",
         "schedule.m": 3, "schedule.p": 3, **_SHARED_100},
        {"run.name": "exp_2t2e09", "flow.c": 5.0, "schedule.family": "power_exp",
         "schedule.m": 2, "schedule.gamma": 2, "schedule.r": 0.9, "schedule.scale": 2.0, **_SHARED_100},
        {"run.name": "exp_t3e08", "flow.c": 5.0, "schedule.family": "power_exp",
         "schedule.m": 3, "schedule.gamma": 2, "schedule.r": 0.8, **_SHARED_100},
    ],
    "figure2": [
        {"flow.kind": k, **_SHARED_100} for k in ("tral", "trae", "trisal", "trisae", "trisg", "trish")
    ] + [
        {"run.name": "first_order_log", "flow.c": 5.0, "schedule.family": "power_log",
         "schedule.m": 3, "schedule.p": 3, **_SHARED_100},
        {"run.name": "first_order_exp", "flow.c": 5.0, "schedule.family": "power_exp",
         "schedule.m": 3, "schedule.gamma": 2, "schedule.r": 0.8, **_SHARED_100},
    ],
}


def preset_names():
    return sorted(RUN_PRESETS) + sorted(COMPARE_PRESETS)


def run_preset(name):
    if name not in RUN_PRESETS:
        raise ConfigurationError(f"unknown run preset {name!r}; expected one of {', '.join(sorted(RUN_PRESETS))}")
    return dict(RUN_PRESETS[name])


def compare_preset(name):
    if name in COMPARE_PRESETS:
        return [dict(d) for d in COMPARE_PRESETS[name]]
    if name in RUN_PRESETS:
        return [dict(RUN_PRESETS[name])]
    raise ConfigurationError(f"unknown preset {name!r}; expected one of {', '.join(preset_names())}")
