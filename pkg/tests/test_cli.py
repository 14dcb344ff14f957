import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import tikhoflow.config as config_mod
from tikhoflow.cli import main
from tikhoflow.config import config_from_flat, parse_config_text, run_preset
from tikhoflow.errors import ConfigurationError, RunError
from tikhoflow.problems import builtin_problem
from tikhoflow.runner import compare, read_csv, run


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("tral", "trish", "zero_smoke", "figure1", "figure2"):
        assert name in out


def test_zero_smoke_run(tmp_path, capsys):
    assert main(["run", "--preset", "zero_smoke", "--out", str(tmp_path)]) == 0
    d = tmp_path / "zero_smoke"
    names = sorted(p.name for p in d.iterdir())
    assert names == sorted(
        ["samples.csv", "manifest.json", "f_gap.svg", "grad_norm_sq.svg",
         "dist_center_sq.svg", "dist_minnorm_sq.svg", "energy.svg"]
    )
    m = json.loads((d / "manifest.json").read_text())
    assert m["status"] == "ok" and m["sample_count"] == 100
    assert m["config"]["problem.name"] == "zero"
    header, rows = read_csv(d / "samples.csv")
    assert header[0] == "t" and len(rows) == 100
    # x(t) = x0 exp(-5 (t - 1)) so everything is far below 1e-12 at t = 10
    fin = m["final"]
    assert fin["dist_minnorm_sq"] < 1e-12 and fin["energy"] < 1e-12
    assert fin["f_gap"] == 0.0
    last = rows[-1]
    assert last[0] == 10.0
    assert last[5] == pytest.approx(2 * math.exp(-90.0), rel=1e-6)


def test_run_is_deterministic(tmp_path):
    a = run(config_from_flat(run_preset("zero_smoke"), out_dir=tmp_path / "a"))
    b = run(config_from_flat(run_preset("zero_smoke"), out_dir=tmp_path / "b"))
    pa, pb = Path(a["files"]["csv"]), Path(b["files"]["csv"])
    assert pa.read_bytes() == pb.read_bytes()
    for col in ("f_gap", "energy"):
        sa = Path(a["files"][f"svg_{col}"]).read_bytes()
        sb = Path(b["files"][f"svg_{col}"]).read_bytes()
        assert sa == sb


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# smoke\nproblem.name = 'zero'\nflow.c = 2.0\nschedule.family = 'power_log'\n"
        "schedule.m = 1\nrun.t_end = 3.0\nrun.samples = 40\nrun.name = 'from_file'\n"
    )
    rc = main(["run", "--config", str(cfg), "--set", "flow.c=4.0", "--out", str(tmp_path)])
    assert rc == 0
    m = json.loads((tmp_path / "from_file" / "manifest.json").read_text())
    assert m["config"]["flow.c"] == 4.0
    assert m["sample_count"] == 40


def test_parse_config_text():
    flat = parse_config_text("flow.c = 1  # note\nrun.x0 = [1, 2]\n\n")
    assert flat == {"flow.c": 1, "run.x0": [1, 2]}
    with pytest.raises(ConfigurationError):
        parse_config_text("a.b = 1\n")


@pytest.mark.parametrize(
    "args",
    [
        ["run", "--preset", "zero_smoke", "--set", "flow.c=0"],
        ["run", "--preset", "zero_smoke", "--set", "flow.c=-1"],
        ["run", "--preset", "nope"],
        ["run", "--preset", "zero_smoke", "--set", "bogus.key=1"],
        ["run", "--preset", "zero_smoke", "--set", "schedule.family='power_sin'"],
        ["run", "--preset", "tral", "--set", "flow.c=3.0"],
        ["run", "--preset", "zero_smoke", "--set", "run.t_end=0.5"],
        ["run", "--preset", "example1_log", "--set", "run.x0=[-2, 0]"],
    ],
)
def test_configuration_errors_exit_2(args, tmp_path):
    assert main(args + ["--out", str(tmp_path)]) == 2
    assert not any(tmp_path.iterdir())


def test_argparse_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["checkschedule", "--c", "1"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_runtime_failure_exit_1_and_cleanup(tmp_path):
    rc = main(["run", "--preset", "zero_smoke", "--set", "integrator.max_steps=3",
               "--set", "integrator.method='dopri5'", "--out", str(tmp_path)])
    assert rc == 1
    assert not (tmp_path / "zero_smoke").exists()


def test_run_error_names_phase(tmp_path):
    cfg = config_from_flat({**run_preset("zero_smoke"), "integrator.max_steps": 3,
                            "integrator.method": "dopri5"}, out_dir=tmp_path)
    with pytest.raises(RunError) as info:
        run(cfg)
    assert info.value.phase == "integrate"


def test_checkschedule_accepts_and_rejects(capsys):
    assert main(["checkschedule", "--family", "power_log", "--m", "2", "--p", "2", "--c", "5"]) == 0
    out = capsys.readouterr().out
    assert "verdict: true" in out
    rc = main(["checkschedule", "--family", "power_exp", "--gamma", "2", "--r", "1", "--c", "1"])
    assert rc == 1
    assert "verdict: false" in capsys.readouterr().out
    assert main(["checkschedule", "--family", "power_log", "--m", "0", "--p", "0", "--c", "5"]) == 2


def test_compare_against_itself_is_bitwise_equal(tmp_path):
    flat = run_preset("zero_smoke")
    cfgs = [config_from_flat(flat, out_dir=tmp_path), config_from_flat(flat, out_dir=tmp_path)]
    manifests, summary = compare(cfgs, tmp_path, workers=2)
    names = [s["name"] for s in summary["systems"]]
    assert names == ["zero_smoke", "zero_smoke_2"]
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert lines[0].startswith("system,t,")
    body = {}
    for line in lines[1:]:
        name, rest = line.split(",", 1)
        body.setdefault(name, []).append(rest)
    assert body["zero_smoke"] == body["zero_smoke_2"]
    for col in ("f_gap", "dist_minnorm_sq", "grad_norm_sq"):
        assert (tmp_path / f"compare_{col}.svg").exists()
    assert json.loads((tmp_path / "compare.json").read_text())["systems"][1]["status"] == "ok"


def test_compare_rejects_mismatched_horizon(tmp_path):
    a = config_from_flat(run_preset("zero_smoke"))
    b = config_from_flat({**run_preset("zero_smoke"), "run.t_end": 5.0})
    with pytest.raises(ConfigurationError):
        compare([a, b], tmp_path, workers=1)


def test_compare_isolates_failures(tmp_path, monkeypatch):
    real = builtin_problem

    def no_hessian(name, params=None):
        p = real(name, params)
        return replace(p, hessian_vec=None, offset_hessian_vec=None)

    monkeypatch.setattr(config_mod, "builtin_problem", no_hessian)
    flat = {"problem.name": "quadratic_shift", "problem.a": [1.0, 2.0], "run.t_end": 5.0, "run.samples": 50}
    cfgs = [
        config_from_flat({**flat, "flow.kind": "trish"}),
        config_from_flat({**flat, "flow.kind": "trisg"}),
    ]
    manifests, summary = compare(cfgs, tmp_path, workers=1)
    status = {s["name"]: s for s in summary["systems"]}
    assert status["trish"]["status"] == "failed"
    assert status["trish"]["phase"] == "configure"
    assert "UnsupportedProblemError" in status["trish"]["error"]
    assert status["trisg"]["status"] == "ok"
    failed = json.loads((tmp_path / "trish" / "manifest.json").read_text())
    assert failed["status"] == "failed"
    rows = (tmp_path / "compare.csv").read_text().splitlines()[1:]
    assert rows and all(r.startswith("trisg,") for r in rows)


def test_compare_cli_exit_code(tmp_path, capsys):
    rc = main(["compare", "--preset", "zero_smoke", "--workers", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert "zero_smoke" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["compare", "--preset", "zero_smoke", "--workers", "0"])


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TIKHOFLOW_OUT", str(tmp_path / "env"))
    cfg = config_from_flat(run_preset("zero_smoke"))
    assert cfg.out_dir == str(tmp_path / "env")
    cfg = config_from_flat({**run_preset("zero_smoke"), "output.dir": str(tmp_path / "key")})
    assert cfg.out_dir == str(tmp_path / "key")
    assert config_from_flat(run_preset("zero_smoke"), out_dir="x").out_dir == "x"


def test_manifest_samples_match_csv(tmp_path):
    m = run(config_from_flat(run_preset("zero_smoke"), out_dir=tmp_path))
    _, rows = read_csv(m["files"]["csv"])
    got = np.array(rows)
    want = np.array([s.row() for s in m["samples"]])
    np.testing.assert_array_equal(got, want)
