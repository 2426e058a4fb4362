"""Experiment runner: config validation, report layout, determinism."""
import json
import os

import pytest

from monoflow import cli


def ssh_config(out_dir: str, points: int = 21) -> dict:
    return {"model": {"kind": "ssh"},
            "box": {"d": 1, "radius": 10, "offset": [0.0]},
            "alpha_grid": {"points": points, "refine_tol": 1e-4},
            "tasks": ["spectral_flow", "index", "oracle"],
            "seed": 0,
            "output_dir": out_dir}


def write_config(tmp_path, cfg: dict) -> str:
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_validate_preset(capsys):
    assert cli.main(["validate", "--preset", "ssh"]) == 0
    assert "config ok" in capsys.readouterr().out


def test_validate_requires_exactly_one_source(capsys):
    assert cli.main(["validate"]) == 2
    assert cli.main(["validate", "--preset", "ssh",
                     "--config", "x.json"]) == 2
    assert "exactly one" in capsys.readouterr().err


def test_unknown_preset_lists_available(capsys):
    assert cli.main(["validate", "--preset", "no_such"]) == 2
    err = capsys.readouterr().err
    assert "available" in err and "ssh" in err


def test_malformed_config_exits_2(tmp_path, capsys):
    path = write_config(tmp_path, {"model": {"kind": "heisenberg"}})
    assert cli.main(["validate", "--config", path]) == 2
    assert "model.kind" in capsys.readouterr().err


@pytest.mark.parametrize("mangle,fragment", [
    (lambda c: c.update(extra_key=1), "unknown config keys"),
    (lambda c: c.pop("box"), "box is required"),
    (lambda c: c["box"].update(offset=[0.0, 0.0]), "offset length"),
    (lambda c: c.update(tasks=["spectral_flow", "plot"]), "tasks"),
    (lambda c: c.update(tasks=[]), "tasks"),
    (lambda c: c["alpha_grid"].update(points=1), "at least 2"),
])
def test_config_rejections(mangle, fragment):
    raw = ssh_config("runs/x")
    mangle(raw)
    with pytest.raises(cli.ConfigError, match=fragment):
        cli.ExperimentConfig.from_dict(raw)


def test_mass_required_for_lattice_dirac():
    raw = {"model": {"kind": "even_dirac"},
           "box": {"d": 2, "radius": 4, "offset": [0.5, 0.5]},
           "tasks": ["index"]}
    with pytest.raises(cli.ConfigError, match="mass"):
        cli.ExperimentConfig.from_dict(raw)


def test_config_hash_ignores_output_dir_only():
    a = cli.ExperimentConfig.from_dict(ssh_config("runs/a"))
    b = cli.ExperimentConfig.from_dict(ssh_config("runs/b"))
    assert cli.config_hash(a) == cli.config_hash(b)
    c = cli.ExperimentConfig.from_dict(ssh_config("runs/a"))
    c.seed = 99
    assert cli.config_hash(c) != cli.config_hash(a)


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in ("ssh", "harness", "dirac2_m1", "chiral3_m1",
                 "identity_d2", "dirac2_fullpath"):
        assert name in out


def test_run_ssh_report_and_trajectories(tmp_path, capsys):
    out_dir = str(tmp_path / "out")
    path = write_config(tmp_path, ssh_config(out_dir))
    assert cli.main(["run", "--config", path]) == 0
    stdout = capsys.readouterr().out
    assert "[pass] SF == Ind: 1 vs 1" in stdout

    with open(os.path.join(out_dir, "report.json")) as f:
        report = json.load(f)
    assert report["schema"] == "monoflow-report/1"
    assert report["config"]["model"]["kind"] == "ssh"
    flow = report["results"]["flow"]["dressed_shift"]
    assert flow["net_flow"] == 1
    assert flow["crossings"][0]["alpha"] == pytest.approx(0.5, abs=1e-3)
    assert report["results"]["index"]["value"] == 1
    assert report["results"]["oracle"] == 1
    assert all(v["passed"] for v in report["verdicts"])
    assert report["config_hash"] == cli.config_hash(
        cli.ExperimentConfig.from_dict(ssh_config(out_dir)))

    csv_path = os.path.join(out_dir, "trajectories_dressed_shift.csv")
    with open(csv_path) as f:
        header = f.readline().strip()
    assert header == "alpha,track,re,im,bulk"


def test_rerun_is_deterministic(tmp_path):
    reports, csvs = [], []
    for tag in ("one", "two"):
        out_dir = str(tmp_path / tag)
        path = write_config(tmp_path, ssh_config(out_dir))
        assert cli.main(["run", "--config", path]) == 0
        with open(os.path.join(out_dir, "report.json")) as f:
            rep = json.load(f)
        rep.pop("wall_time_s")
        rep["config"].pop("output_dir")
        reports.append(rep)
        with open(os.path.join(out_dir,
                               "trajectories_dressed_shift.csv"),
                  "rb") as f:
            csvs.append(f.read())
    assert csvs[0] == csvs[1]
    assert reports[0] == reports[1]


def test_run_harness_preset_scaled_down(tmp_path, capsys):
    out_dir = str(tmp_path / "h")
    raw = {"model": {"kind": "harness", "trials": 6, "dim_max": 8},
           "alpha_grid": {"points": 41, "refine_tol": 1e-4},
           "tasks": ["spectral_flow", "index"],
           "seed": 3,
           "output_dir": out_dir}
    path = write_config(tmp_path, raw)
    assert cli.main(["run", "--config", path]) == 0
    with open(os.path.join(out_dir, "report.json")) as f:
        report = json.load(f)
    h = report["results"]["harness"]
    assert h["trials"] == 6 and h["matches"] == 6
    assert len(h["table"]) == 6
    assert all(row["sf"] == row["index"] for row in h["table"])


def test_seed_override_changes_hash_and_draws(tmp_path):
    raw = {"model": {"kind": "harness", "trials": 3, "dim_max": 6},
           "alpha_grid": {"points": 31},
           "tasks": ["spectral_flow", "index"],
           "seed": 3, "output_dir": str(tmp_path / "a")}
    path = write_config(tmp_path, raw)
    assert cli.main(["run", "--config", path, "--seed", "11",
                     "--out", str(tmp_path / "b")]) == 0
    with open(tmp_path / "b" / "report.json") as f:
        report = json.load(f)
    assert report["config"]["seed"] == 11
    base = cli.ExperimentConfig.from_dict(raw)
    assert report["config_hash"] != cli.config_hash(base)
