import json

import numpy as np
import pytest

from pulseforge.cli import main
from pulseforge.config import ConfigError, load_config, parse_config_text
from pulseforge.controls import read_waveform_csv

SINGLE_POINT_INI = """\
# smoke configuration
model = reqc
target = phase_gate
output_dir = {out}

[grid]
points = 1.0, 0.0, gate

[parametrization]
n_harmonics = 4
duration = 75.39822368615503
amplitude_bound = 1.0
n_steps = 256

[optimizer]
p_schedule = 10
max_iters = 120
seed = 24301

[landscape]
gamma_range = 0.9 1.1
delta_range = -1 1
resolution = 3 3
"""


def write_config(tmp_path, text=None, name="run.ini"):
    path = tmp_path / name
    path.write_text(text if text is not None else SINGLE_POINT_INI.format(out=tmp_path / "out"))
    return path


class TestConfigParsing:
    def test_ini_round_trip(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.model == "reqc"
        assert cfg.n_harmonics == 4
        assert cfg.n_steps == 256
        assert cfg.p_schedule == (10.0,)
        assert cfg.grid_points == [(1.0, 0.0, "gate")]
        assert cfg.resolution == (3, 3)

    def test_json_equivalent(self):
        cfg = parse_config_text(json.dumps({
            "run": {"model": "reqc", "target": "identity", "output_dir": "x"},
            "grid": {"points": [[1.0, 0.0, "gate"], [1.0, 6.0, "identity"]]},
            "parametrization": {"n_harmonics": 2, "duration": 10.0, "n_steps": 64},
            "optimizer": {"p_schedule": [10, 100], "seed": 3},
        }))
        assert cfg.target == "identity"
        assert cfg.grid_points == [(1.0, 0.0, "gate"), (1.0, 6.0, "identity")]
        assert cfg.p_schedule == (10.0, 100.0)
        assert cfg.seed == 3

    def test_defaults_applied(self):
        cfg = parse_config_text("model = reqc\n")
        assert cfg.grid_preset == "default_reqc_49"
        assert cfg.n_harmonics == 24
        assert cfg.duration == pytest.approx(24 * np.pi)

    def test_negative_duration_names_field(self):
        with pytest.raises(ConfigError, match="parametrization.duration"):
            parse_config_text("[parametrization]\nduration = -2.0\n")

    def test_unknown_model_named(self):
        with pytest.raises(ConfigError, match="'model'"):
            parse_config_text("model = bogus\n")

    def test_unknown_preset_named(self):
        with pytest.raises(ConfigError, match="grid.preset"):
            parse_config_text("[grid]\npreset = nope\n")

    def test_bad_number_reported(self):
        with pytest.raises(ConfigError, match="n_steps"):
            parse_config_text("[parametrization]\nn_steps = many\n")

    def test_bad_point_target(self):
        with pytest.raises(ConfigError, match="grid.points"):
            parse_config_text("[grid]\npoints = 1.0, 0.0, sideways\n")

    def test_invalid_json_reports_line(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config_text('{"run": }')

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.ini")


class TestCliOptimize:
    def test_single_point_run_writes_artifacts(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(["optimize", str(cfg), "--threads", "1"])
        assert code == 0
        out = tmp_path / "out"
        result = json.loads((out / "result.json").read_text())
        assert result["J_max"] <= 1e-8
        assert result["termination_reason"] == "converged"
        assert (out / "history.csv").exists()
        waveform = read_waveform_csv(out / "waveform.csv")
        assert waveform.samples.shape == (257, 4)

    def test_malformed_config_exit_1(self, tmp_path, capsys):
        bad = SINGLE_POINT_INI.format(out=tmp_path).replace(
            "duration = 75.39822368615503", "duration = -5"
        )
        code = main(["optimize", str(write_config(tmp_path, bad))])
        assert code == 1
        assert "parametrization.duration" in capsys.readouterr().err

    def test_deterministic_rerun_bit_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["optimize", str(cfg), "--threads", "1"])
        first = (tmp_path / "out" / "result.json").read_bytes()
        main(["optimize", str(cfg), "--threads", "1"])
        second = (tmp_path / "out" / "result.json").read_bytes()
        assert first == second

    def test_iteration_exhaustion_exit_2_with_artifacts(self, tmp_path):
        text = SINGLE_POINT_INI.format(out=tmp_path / "out").replace(
            "points = 1.0, 0.0, gate", "points = 0.9, 1.0, gate"
        ).replace("max_iters = 120", "max_iters = 2")
        code = main(["optimize", str(write_config(tmp_path, text)), "--threads", "1"])
        assert code == 2
        out = tmp_path / "out"
        result = json.loads((out / "result.json").read_text())
        assert result["termination_reason"] == "max_iterations"
        assert (out / "history.csv").exists()
        assert (out / "waveform.csv").exists()


class TestCliLandscape:
    def test_smoke_grid_rows(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(["landscape", str(cfg), "--baseline", "naive", "--threads", "1"])
        assert code == 0
        lines = (tmp_path / "out" / "landscape.csv").read_text().splitlines()
        assert len(lines) == 1 + 9
        assert (tmp_path / "out" / "plot_landscape.py").exists()

    def test_naive_baseline_ideal_cell(self, tmp_path):
        text = SINGLE_POINT_INI.format(out=tmp_path / "out").replace(
            "gamma_range = 0.9 1.1", "gamma_range = 1.0 1.0"
        ).replace("delta_range = -1 1", "delta_range = 0 0").replace(
            "resolution = 3 3", "resolution = 1 1"
        )
        main(["landscape", str(write_config(tmp_path, text)), "--baseline", "naive"])
        row = (tmp_path / "out" / "landscape.csv").read_text().splitlines()[1]
        f_value = float(row.split(",")[2])
        assert abs(f_value - 1.0) <= 1e-10

    def test_missing_waveform_exit_1(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(["landscape", str(cfg), "--waveform", str(tmp_path / "none.csv")])
        assert code == 1

    def test_no_source_exit_1(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["landscape", str(cfg)]) == 1

    def test_running_max_artifact(self, tmp_path):
        cfg = write_config(tmp_path)
        code = main(["landscape", str(cfg), "--baseline", "naive", "--running-max"])
        assert code == 0
        assert (tmp_path / "out" / "landscape_runmax.csv").exists()


class TestCliBaseline:
    def test_emits_waveform(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["baseline", "sech", str(cfg)]) == 0
        wf = read_waveform_csv(tmp_path / "out" / "baseline_sech.csv")
        assert wf.samples.shape == (257, 4)
        assert wf.duration == pytest.approx(75.39822368615503)


class TestCliCheck:
    def test_fast_check_passes(self, capsys):
        assert main(["check", "--fast"]) == 0
        out = capsys.readouterr().out
        assert out.count("pass") == 4

    def test_injected_sign_flip_fails(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = main(["check", "--fast", "--inject-gradient-sign-flip"])
        assert code == 3
        report = json.loads((tmp_path / "check_failure.json").read_text())
        assert report and report[0]["name"] == "gradient_vs_fd"
