"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import (
    COMPARE_PRESETS,
    RUN_PRESETS,
    compare_preset,
    config_from_flat,
    load_config_file,
    parse_assignment,
    run_preset,
)
from .errors import ConfigurationError, RunError, ScheduleRejectedError, TikhoflowError
from .schedules import ScheduleSpec, check_hbeta, suggest_mu

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _overrides(items):
    return dict(parse_assignment(item) for item in items or ())


def _out_dir(args):
    return args.out


def _flat_for_run(args):
    flat = {}
    if args.preset:
        flat.update(run_preset(args.preset))
    if args.config:
        flat.update(load_config_file(args.config))
    flat.update(_overrides(args.set))
    return flat


def cmd_run(args):
    from .runner import run

    cfg = config_from_flat(_flat_for_run(args), out_dir=_out_dir(args))
    m = run(cfg)
    print(f"run {m['name']}: ok in {m['wall_time_s']:.2f}s, {m['sample_count']} samples")
    for col, fit in m["rate_fits"].items():
        if "slope" in fit:
            print(f"  slope log({col}) vs log(beta): {fit['slope']:.4f}")
        else:
            print(f"  {col}: {fit['error']}")
    if m.get("energy_bound"):
        eb = m["energy_bound"]
        print(f"  energy bound: M={eb['fitted_M']:.3g} pass={eb['pass']}")
    print(f"  manifest: {m['files']['manifest']}")
    return EXIT_OK


def cmd_compare(args):
    from .runner import compare

    flats = []
    if args.preset:
        flats.extend(compare_preset(args.preset))
    for path in args.config or ():
        flats.append(load_config_file(path))
    if not flats:
        raise ConfigurationError("compare needs --preset or at least one --config")
    extra = _overrides(args.set)
    out = args.out
    cfgs = [config_from_flat({**f, **extra}, out_dir=out) for f in flats]
    _, summary = compare(cfgs, cfgs[0].out_dir, workers=args.workers)
    failed = 0
    for s in summary["systems"]:
        if s["status"] == "ok":
            print(f"{s['name']:>18}: ok   f_gap(t_end)={s['f_gap_end']:.3e}")
        else:
            failed += 1
            print(f"{s['name']:>18}: FAILED in {s['phase']}: {s['error']}")
    print(f"combined csv: {summary['files']['csv']}")
    return EXIT_OK if failed < len(summary["systems"]) else EXIT_RUNTIME


def cmd_checkschedule(args):
    kwargs = {k: getattr(args, k) for k in ("m", "p", "gamma", "r", "scale", "t_min") if getattr(args, k) is not None}
    spec = ScheduleSpec(args.family, **kwargs)
    grid = np.geomspace(max(spec.t_min, 10.0), args.t_max, args.points)
    mu = args.mu
    if mu is None:
        try:
            mu = suggest_mu(spec, args.c, grid)
        except ScheduleRejectedError as exc:
            print(json.dumps(exc.report.as_dict(), indent=2))
            print(f"verdict: false ({exc})")
            return EXIT_RUNTIME
    rep = check_hbeta(spec, args.c, mu, grid)
    print(json.dumps(rep.as_dict(), indent=2))
    print(f"verdict: {str(rep.verdict).lower()}")
    return EXIT_OK if rep.verdict else EXIT_RUNTIME


def cmd_presets(args):
    for name in sorted(RUN_PRESETS):
        print(f"{name}  (run)")
    for name in sorted(COMPARE_PRESETS):
        print(f"{name}  (compare, {len(COMPARE_PRESETS[name])} systems)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="tikhoflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", help="named preset (see 'presets list')")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory (default: $TIKHOFLOW_OUT or ./tikhoflow_out)")

    p = sub.add_parser("run", help="integrate one system and write diagnostics")
    p.add_argument("--config", metavar="PATH", help="flat key=value config file")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several systems on a shared problem and horizon")
    p.add_argument("--config", metavar="PATH", action="append", help="config file, repeatable")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("checkschedule", help="check the growth conditions for a schedule")
    p.add_argument("--family", required=True, choices=("power_log", "power_exp"))
    p.add_argument("--m", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--mu", type=float)
    p.add_argument("--t-max", dest="t_max", type=float, default=1e6)
    p.add_argument("--points", type=int, default=400)
    p.set_defaults(func=cmd_checkschedule)

    p = sub.add_parser("presets", help="list presets")
    p.add_argument("action", choices=("list",))
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be positive")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunError as exc:
        print(f"error in phase {exc.phase}: {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, ConfigurationError) else EXIT_RUNTIME
    except TikhoflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
