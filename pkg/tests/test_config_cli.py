import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from heisenberg_mf import cli
from heisenberg_mf.config import DEFAULTS, config_hash, load_config
from heisenberg_mf.errors import ValidationError

SMALL = {"measure": {"truncation_radius": 2.0}, "grid": {"n_radial": 12, "n_angular": 12},
         "solver": {"beta": 3.0}}


def write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_defaults_validate():
    cfg = load_config()
    assert cfg["solver"]["beta"] == DEFAULTS["solver"]["beta"]
    assert config_hash(cfg) == config_hash(load_config())


@pytest.mark.parametrize("bad", [{"solver": {"betta": 1}}, {"nope": 1}, {"solver": {"beta": 8.0}},
                                 {"solver": {"damping": 0.0}}, {"ensemble": {"burn_in": 10, "chain_length": 5}},
                                 {"probes": ["made_up"]}, {"sweep": {"betas": [2.0, 1.0]}},
                                 {"measure": {"allow_truncated": "yes"}}, {"compact": {"total_curvature": 200.0}},
                                 {"seed": -1}, {"solver": 3}])
def test_invalid_configs(tmp_path, bad):
    with pytest.raises(ValidationError):
        load_config(write(tmp_path, bad))


def test_hash_changes_with_content():
    a = load_config(overrides={"seed": 1})
    b = load_config(overrides={"seed": 2})
    assert config_hash(a) != config_hash(b)


def test_unknown_key_exit_code_and_error_json(tmp_path, capsys):
    out = tmp_path / "o"
    code = cli.main(["solve", "--config", write(tmp_path, {"solverr": {}}), "--out", str(out)])
    assert code == cli.EXIT_VALIDATION
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ValidationError" and "solverr" in err["message"]
    assert json.loads((out / "error.json").read_text())["exit_code"] == 2


def test_solve_outputs_and_reproducibility(tmp_path):
    cfg = write(tmp_path, SMALL)
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
        outs.append(out)
    for name in ("density.csv", "u.csv", "solver_report.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        meta = json.loads((outs[0] / (name + ".meta.json")).read_text())
        assert meta["config_hash"] == config_hash(load_config(cfg)) and meta["seed"] == 12345
    rep = json.loads((outs[0] / "solver_report.json").read_text())
    assert rep["converged"]


def test_convergence_exit_code(tmp_path):
    cfg = write(tmp_path, {**SMALL, "solver": {"beta": 6.0, "max_iter": 2}})
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == cli.EXIT_CONVERGENCE
    err = json.loads((out / "error.json").read_text())
    assert err["report"]["iterations"] == 2


def test_verify_empty_probe_list_warns(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", write(tmp_path, SMALL), "--out", str(out)]) == cli.EXIT_OK
    assert "empty probe list" in capsys.readouterr().err
    assert json.loads((out / "probes.json").read_text()) == []


def test_verify_missing_artifact(tmp_path):
    cfg = write(tmp_path, {**SMALL, "probes": ["normality"], "verify": {"require_artifacts": True}})
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_MISSING


def test_verify_probe_failure_exit_code(tmp_path):
    # a slope target that cannot hold is a probe failure, not an error
    cfg = write(tmp_path, {**SMALL, "probes": [{"name": "slope", "betas": [1.0, 2.0], "target": 5.0}]})
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", cfg, "--out", str(out)]) == cli.EXIT_PROBE
    rows = (out / "probes_summary.csv").read_text().splitlines()
    assert rows[0].startswith("probe,parameter") and any(r.endswith(",fail") for r in rows[1:])


def test_sweep_outputs(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["sweep", "--config", write(tmp_path, SMALL), "--out", str(out), "--betas", "1,2.5"])
    assert code == cli.EXIT_OK
    rows = (out / "sweep_summary.csv").read_text().splitlines()
    assert rows[0].split(",")[:3] == ["beta", "iterations", "residual"] and len(rows) == 3
    slope = float(rows[2].split(",")[3])
    assert abs(slope + 1.25) < 0.02
    assert cli.main(["sweep", "--config", write(tmp_path, SMALL), "--out", str(out), "--betas", "2,1"]) \
        == cli.EXIT_VALIDATION


def test_sample_small(tmp_path):
    cfg = write(tmp_path, {**SMALL, "ensemble": {"chain_length": 3000, "burn_in": 300, "n_particles": 3,
                                                 "n_chains": 2, "n_bins": 4, "save_chain": True}})
    out = tmp_path / "o"
    assert cli.main(["sample", "--config", cfg, "--out", str(out), "--threads", "2"]) == cli.EXIT_OK
    marg = json.loads((out / "marginal.json").read_text())
    assert len(marg["masses"]) == 4 and abs(sum(marg["masses"]) - 1) < 1e-12
    assert (out / "chain_0.csv").exists() and (out / "chain_1.csv.json").exists()


def test_compact_pipeline(tmp_path):
    cfg = write(tmp_path, {"pipeline": "compact", "compact": {"nodes": 6}})
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    data = np.loadtxt(out / "density.csv", delimiter=",", skiprows=1)
    assert abs(np.sum(data[:, 1] * data[:, 2]) - 1) < 1e-12
    assert cli.main(["sample", "--config", cfg, "--out", str(out)]) == cli.EXIT_VALIDATION


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "heisenberg_mf.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "solve" in r.stdout


@pytest.mark.parametrize("name", ["quick.yaml", "verify.yaml", "ensemble.yaml", "compact.yaml"])
def test_shipped_configs_validate(name):
    import heisenberg_mf
    path = os.path.join(os.path.dirname(heisenberg_mf.__file__), "configs", name)
    load_config(path)
