"""Batch pipeline: artifacts, exit codes, determinism, staged runs."""

import json
import os
import shutil

import pytest

from spectral_forge.cli import main

HALFLINE_CFG = {
    "eigenvalues": [1.0],
    "mode": "schrodinger_halfline",
    "a": 4.0,
    "k_max": 3,
    "C_min": 4,
    "J1": 60.0,
    "min_offset": 55.0,
    "boundary_angles": {"1.0": 0.0},
    "resolution": 512,
}


def write_cfg(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli_run")
    cfg = write_cfg(tmp, HALFLINE_CFG)
    out = tmp / "out"
    code = main(["run", "--config", cfg, "--out", str(out), "--plots", "on"])
    assert code == 0
    return tmp, cfg, out


def test_run_writes_all_artifacts(run_dir):
    _, _, out = run_dir
    for name in ("plan.json", "potential.json", "potential.csv",
                 "metric.csv", "ledger.json", "report.json"):
        assert (out / name).exists(), name
    assert (out / "eigenfunctions" / "lambda_1.csv").exists()
    assert (out / "plots" / "potential.svg").exists()
    assert (out / "plots" / "ledger.svg").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True


def test_rerun_is_byte_identical(run_dir):
    tmp, cfg, out = run_dir
    out2 = tmp / "out2"
    assert main(["run", "--config", cfg, "--out", str(out2),
                 "--plots", "off"]) == 0
    for name in ("plan.json", "potential.json", "potential.csv",
                 "metric.csv", "ledger.json", "report.json"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name


def test_staged_run_matches_full_run(run_dir):
    tmp, cfg, out = run_dir
    out3 = tmp / "out3"
    assert main(["plan", "--config", cfg, "--out", str(out3)]) == 0
    assert (out / "plan.json").read_bytes() == \
        (out3 / "plan.json").read_bytes()
    assert main(["build", "--config", cfg, "--out", str(out3)]) == 0
    assert (out / "potential.json").read_bytes() == \
        (out3 / "potential.json").read_bytes()
    assert main(["verify", "--config", cfg, "--out", str(out3)]) == 0


def test_export_resolution(run_dir):
    tmp, cfg, out = run_dir
    out4 = tmp / "out4"
    shutil.copytree(out, out4)
    assert main(["export", "--config", cfg, "--out", str(out4),
                 "--resolution", "100"]) == 0
    rows = (out4 / "potential.csv").read_text().strip().splitlines()
    assert len(rows) == 101  # header + samples


def test_probe_stage(run_dir):
    tmp, cfg, out = run_dir
    cfg2 = dict(HALFLINE_CFG)
    cfg2["probe"] = {"X": 60.0, "h_grid": 0.01}
    cfg2_path = write_cfg(tmp, cfg2, "probe_cfg.json")
    assert main(["probe", "--config", cfg2_path, "--out", str(out)]) == 0
    lines = (out / "probe.csv").read_text().strip().splitlines()
    assert lines[0] == "lambda,eigenvalue,error,localization_mass"
    assert len(lines) == 2


def test_missing_config_keys_exit_3(tmp_path):
    bad = dict(HALFLINE_CFG)
    del bad["a"]
    cfg = write_cfg(tmp_path, bad)
    assert main(["plan", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_countable_without_budget_exit_3(tmp_path):
    bad = dict(HALFLINE_CFG)
    bad["mode"] = "manifold_countable"
    del bad["boundary_angles"]
    cfg = write_cfg(tmp_path, bad)
    assert main(["plan", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_missing_artifact_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, HALFLINE_CFG)
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["build", "--config", cfg, "--out", str(empty)]) == 3


def test_nonexistent_config_exit_3(tmp_path):
    assert main(["plan", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path)]) == 3


def test_verify_fails_on_corrupted_ledger_exit_2(run_dir):
    tmp, cfg, out = run_dir
    out5 = tmp / "out5"
    shutil.copytree(out, out5)
    led = json.loads((out5 / "ledger.json").read_text())
    led["eigenvalues"][0]["junction_norms"][-1] = \
        led["eigenvalues"][0]["junction_norms"][-2] * 0.99
    (out5 / "ledger.json").write_text(json.dumps(led))
    assert main(["verify", "--config", cfg, "--out", str(out5)]) == 2
    report = json.loads((out5 / "report.json").read_text())
    assert report["passed"] is False
