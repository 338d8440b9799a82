import json
import logging

import pytest

from aerokin import __version__
from aerokin.cli import main
from aerokin.config import ConfigError, defaults, parse_config


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        f = tmp_path / "empty.toml"
        f.write_text("")
        cfg = parse_config("simulate-vns", {}, f)
        assert cfg.values == defaults("simulate-vns")
        assert cfg.values["particles"]["count"] == 10_000

    def test_flag_beats_file_and_is_logged(self, tmp_path, caplog):
        f = tmp_path / "c.toml"
        f.write_text("steps = 20\nnu = 0.1\n[particles]\ncount = 50\n")
        with caplog.at_level(logging.INFO, logger="aerokin.config"):
            cfg = parse_config("simulate-vns", {"steps": 99, "particles.count": 7}, f)
        assert cfg["steps"] == 99 and cfg["nu"] == 0.1 and cfg["particles"]["count"] == 7
        assert cfg.provenance["steps"] == "flag" and cfg.provenance["nu"] == "file"
        assert "steps = 99 from flag overrides 20 from file" in caplog.text

    def test_unknown_key_is_named(self, tmp_path):
        f = tmp_path / "c.toml"
        f.write_text("epsilonn = 0.1\n")
        with pytest.raises(ConfigError, match="epsilonn"):
            parse_config("verify-kernels", {}, f)
        f.write_text("[particles]\ncnt = 3\n")
        with pytest.raises(ConfigError, match="particles.cnt"):
            parse_config("simulate-vns", {}, f)

    def test_section_named_after_command(self, tmp_path):
        f = tmp_path / "c.toml"
        f.write_text("[limit_sweep]\nprop = 'flux'\n")
        assert parse_config("limit-sweep", {}, f)["prop"] == "flux"

    @pytest.mark.parametrize("command,flags,match", [
        ("verify-kernels", {"kernel": "nope"}, "kernel"),
        ("coeffs", {"Q_preset": "bogus"}, "Q_preset"),
        ("limit-sweep", {"state_preset": "nope"}, "state_preset"),
        ("limit-sweep", {"schedule": "0.1,0.2"}, "schedule"),
        ("simulate-vns", {"steps": "ten"}, "steps"),
    ])
    def test_invalid_values(self, command, flags, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(command, flags)

    def test_hash_tracks_values(self):
        a = parse_config("coeffs", {})
        b = parse_config("coeffs", {"degree": 4})
        assert a.config_hash != b.config_hash
        assert a.config_hash == parse_config("coeffs", {}).config_hash
        assert a.meta()["version"] == __version__


def test_verify_kernels_report(tmp_path):
    out = tmp_path / "report.json"
    assert main(["verify-kernels", "--kernel", "charles_inelastic", "--samples", "50000", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["meta"]["seed"] == 0 and rep["meta"]["version"] == __version__ and rep["meta"]["config_hash"]
    for r in rep["reports"]:
        assert {"check", "inputs", "estimate", "closed_form", "stderr", "verdict"} <= set(r)


def test_coeffs_charles(tmp_path):
    out = tmp_path / "coeffs.json"
    assert main(["coeffs", "--Q-preset", "charles:1.0", "--degree", "4", "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["kappa"] == pytest.approx(2.96324, abs=1e-5)
    assert {"nu", "kappa", "alpha_profile", "residuals", "meta"} <= set(res)


def test_limit_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["limit-sweep", "--prop", "friction", "--schedule", "0.4,0.1,0.05", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# ") and "config_hash=" in lines[0] and "seed=0" in lines[0]
    assert lines[1].startswith("epsilon,eta,")
    assert lines[-1].startswith("fitted_order,")


def test_simulate_vns_outputs_and_reproducibility(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("grid_n = 16\nsteps = 6\ndt = 0.02\nsnapshot_every = 3\n[particles]\ncount = 100\n")
    runs = []
    for name, workers in (("a", "1"), ("b", "4")):
        d = tmp_path / name
        assert main(["simulate-vns", "--config", str(cfg), "--seed", "5", "--workers", workers, "--out", str(d)]) == 0
        runs.append(d)
    meta = json.loads((runs[0] / "run.json").read_text())["meta"]
    assert meta["seed"] == 5
    csv_a = (runs[0] / "diagnostics.csv").read_text()
    assert csv_a.startswith("# ") and meta["config_hash"] in csv_a.splitlines()[0]
    # workers enter the config hash but not the physics: header numbers and arrays match
    a = (runs[0] / "snapshot_000006.vns").read_bytes()
    b = (runs[1] / "snapshot_000006.vns").read_bytes()
    assert a[:76] == b[:76] and a[108:] == b[108:]


def test_unknown_key_exit_code(tmp_path, capsys):
    f = tmp_path / "c.toml"
    f.write_text("epsilonn = 1\n")
    assert main(["verify-kernels", "--config", str(f)]) == 2
    assert "epsilonn" in capsys.readouterr().err


def test_numerical_error_exit_code(tmp_path):
    assert main(["simulate-vns", "--grid-n", "16", "--steps", "2", "--dt", "5.0", "--out", str(tmp_path)]) == 3
