"""Single runs and comparison suites: CSV, SVG and JSON manifest output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    COLUMNS,
    annotate,
    center_ratio_tail_max,
    column,
    energy_bound_check,
    fit_rate,
    scaled_gap_trend,
)
from .errors import ConfigurationError, RunError, TikhoflowError
from .flows import integrate
from .integrators import choose_method
from .schedules import check_hbeta, default_grid, suggest_mu
from .tikhonov_path import center_path

FIT_COLUMNS = ("f_gap", "grad_norm_sq", "dist_minnorm_sq")
PLOT_COLUMNS = ("f_gap", "grad_norm_sq", "dist_center_sq", "dist_minnorm_sq", "energy")
OVERLAY_COLUMNS = ("f_gap", "dist_minnorm_sq", "grad_norm_sq")


def _clean(obj):
    """JSON-safe copy: non-finite floats become None, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def format_rows(samples, prefix=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for s in samples:
        row = ["%.17g" % v for v in s.row()]
        w.writerow(([prefix] if prefix is not None else []) + row)
    return buf.getvalue()


def write_csv(path, samples):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        fh.write(format_rows(samples))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tikhoflow"
    return plt


def _positive(v):
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, v, np.nan)


def plot_column(path, series, name, title):
    """Log-log line chart of one column; ``series`` maps label -> (t, values)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    # an identically zero column (e.g. f_gap of the zero problem) gets a linear axis
    log_y = any(np.any(np.asarray(v, dtype=float) > 0) for _, v in series.values())
    for label, (t, v) in series.items():
        ax.plot(t, _positive(v) if log_y else v, label=label, linewidth=1.2)
    ax.set_xscale("log")
    ax.set_yscale("log" if log_y else "linear")
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.set_title(title)
    ax.grid(True, which="major", alpha=0.3)
    if len(series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _execute(cfg, phase_box):
    """The compute phases of a run; returns samples and manifest fields."""
    phase_box[0] = "configure"
    problem, system = cfg.build()
    z0 = cfg.initial_state(system)
    schedule, c_eff = system.tikhonov_view()
    info = {"integrator_method": choose_method(system, cfg.t0, cfg.t_end, cfg.integrator)}

    hbeta = None
    mu = cfg.mu
    if not system.second_order:
        phase_box[0] = "hbeta"
        grid = default_grid(schedule)
        if mu is None:
            mu = suggest_mu(schedule, c_eff, grid)
        hbeta = check_hbeta(schedule, c_eff, mu, grid)

    phase_box[0] = "integrate"
    states = integrate(system, z0, cfg.t0, cfg.t_end, cfg.integrator)

    phase_box[0] = "path"
    kept = [s for s in states if schedule.beta(s.t) > 0]
    dropped = len(states) - len(kept)
    centers = center_path(problem, schedule, c_eff, [s.t for s in kept])

    phase_box[0] = "annotate"
    samples = annotate(problem, schedule, c_eff, kept, centers)

    phase_box[0] = "fit"
    fits = {}
    for col in FIT_COLUMNS:
        try:
            fits[col] = fit_rate(samples, col, "log_beta", cfg.window_fraction).as_dict()
        except TikhoflowError as exc:
            fits[col] = {"column": col, "regressor": "log_beta", "error": str(exc)}

    bound = None
    ratio = None
    if hbeta is not None:
        phase_box[0] = "energy_bound"
        xs = problem.min_norm_solution
        xs_norm = float(np.linalg.norm(xs)) if xs is not None else None
        bound = energy_bound_check(samples, schedule, c_eff, mu, cfg.t1_fraction, x_star_norm=xs_norm).as_dict()
        ratio = center_ratio_tail_max(samples, schedule, mu)
    first, last, peak = scaled_gap_trend(samples, cfg.window_fraction)
    info.update(
        hbeta=None if hbeta is None else hbeta.as_dict(),
        mu=mu,
        rate_fits=fits,
        energy_bound=bound,
        center_ratio_tail_max=ratio,
        scaled_gap={"window_start": first, "end": last, "max": peak},
        dropped_samples=dropped,
        final={k: getattr(samples[-1], k) for k in COLUMNS},
        tikhonov_view={"schedule": schedule.as_dict(), "c": c_eff},
    )
    return samples, info


def run(cfg, write=True):
    """Execute one configuration and persist its outputs under ``out_dir/name``.

    Returns the manifest dict. Failures raise ``RunError`` naming the phase,
    after removing any files this run created.
    """
    phase = ["configure"]
    created = []
    out = Path(cfg.out_dir) / cfg.name
    start = time.perf_counter()
    try:
        samples, info = _execute(cfg, phase)
        wall = time.perf_counter() - start
        manifest = {
            "tool": "tikhoflow",
            "version": __version__,
            "status": "ok",
            "name": cfg.name,
            "config": cfg.echo(),
            "wall_time_s": wall,
            "sample_count": len(samples),
            **info,
        }
        if write:
            phase[0] = "write"
            out.mkdir(parents=True, exist_ok=True)
            files = {}
            csv_path = out / "samples.csv"
            created.append(csv_path)
            write_csv(csv_path, samples)
            files["csv"] = str(csv_path)
            t = column(samples, "t")
            for col in PLOT_COLUMNS:
                p = out / f"{col}.svg"
                created.append(p)
                plot_column(p, {cfg.name: (t, column(samples, col))}, col, f"{cfg.name}: {col}")
                files[f"svg_{col}"] = str(p)
            mpath = out / "manifest.json"
            files["manifest"] = str(mpath)
            manifest["files"] = files
            created.append(mpath)
            mpath.write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True))
        manifest["samples"] = samples
        return manifest
    except Exception as exc:
        for p in created:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if out.exists() and not any(out.iterdir()):
            out.rmdir()
        if isinstance(exc, RunError):
            raise
        raise RunError(phase[0], exc) from exc


def _run_isolated(cfg):
    """Worker entry: never raises, failed runs leave a failure manifest."""
    try:
        m = run(cfg)
        return m
    except RunError as exc:
        out = Path(cfg.out_dir) / cfg.name
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "tool": "tikhoflow",
            "version": __version__,
            "status": "failed",
            "name": cfg.name,
            "phase": exc.phase,
            "error": f"{type(exc.cause).__name__}: {exc.cause}",
            "config": cfg.echo(),
        }
        mpath = out / "manifest.json"
        manifest["files"] = {"manifest": str(mpath)}
        mpath.write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True))
        return manifest


def _unique_names(cfgs):
    seen = {}
    out = []
    for cfg in cfgs:
        k = seen.get(cfg.name, 0) + 1
        seen[cfg.name] = k
        out.append(cfg if k == 1 else replace(cfg, name=f"{cfg.name}_{k}"))
    return out


def compare(cfgs, out_dir, workers=None):
    """Run several systems on a shared problem, start point and horizon.

    Writes one directory per system plus ``compare.csv`` (long format with a
    leading ``system`` column), overlay SVGs and ``compare.json``. A failing
    system is recorded as failed and the rest still run.
    """
    if not cfgs:
        raise ConfigurationError("compare needs at least one configuration")
    ref = cfgs[0]
    for cfg in cfgs[1:]:
        if (cfg.problem, cfg.problem_params, cfg.x0, cfg.t0, cfg.t_end) != (
            ref.problem, ref.problem_params, ref.x0, ref.t0, ref.t_end
        ):
            raise ConfigurationError(
                f"{cfg.name} does not share the problem, x0 and horizon of {ref.name}"
            )
    out = Path(out_dir)
    cfgs = [replace(c, out_dir=str(out)) for c in _unique_names(cfgs)]
    workers = workers or os.cpu_count() or 1
    if workers < 1:
        raise ConfigurationError("workers must be positive")
    if workers == 1 or len(cfgs) == 1:
        manifests = [_run_isolated(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfgs))) as pool:
            manifests = list(pool.map(_run_isolated, cfgs))

    out.mkdir(parents=True, exist_ok=True)
    combined = out / "compare.csv"
    series = {c: {} for c in OVERLAY_COLUMNS}
    with open(combined, "w", newline="") as fh:
        fh.write("system," + ",".join(COLUMNS) + "\n")
        for m in manifests:
            if m["status"] != "ok":
                continue
            samples = m["samples"] if "samples" in m else None
            if samples is None:
                continue
            fh.write(format_rows(samples, prefix=m["name"]))
            t = column(samples, "t")
            for col in OVERLAY_COLUMNS:
                series[col][m["name"]] = (t, column(samples, col))
    files = {"csv": str(combined)}
    for col in OVERLAY_COLUMNS:
        p = out / f"compare_{col}.svg"
        plot_column(p, series[col], col, f"comparison: {col}")
        files[f"svg_{col}"] = str(p)
    summary = {
        "tool": "tikhoflow",
        "version": __version__,
        "systems": [
            {
                "name": m["name"],
                "status": m["status"],
                "manifest": m["files"]["manifest"],
                "f_gap_end": (m.get("final") or {}).get("f_gap"),
                **({"error": m["error"], "phase": m["phase"]} if m["status"] != "ok" else {}),
            }
            for m in manifests
        ],
        "files": files,
    }
    spath = out / "compare.json"
    summary["files"]["summary"] = str(spath)
    spath.write_text(json.dumps(_clean(summary), indent=2, sort_keys=True))
    return manifests, summary
