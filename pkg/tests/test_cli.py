"""测试命令行流水线"""

import csv
import json
import math

import pytest

from ion_autocorr.__main__ import build_run_config, main, parse_args
from ion_autocorr.cli import RunConfig, parse_overrides, resolve_parameters
from ion_autocorr.config import Config
from ion_autocorr.errors import ConfigError
from ion_autocorr.io import MANIFEST_NAME

# 小网格，保持积分类命令在秒级
FAST = ["--n-phase", "8", "--set", "n_delays=5", "--set", "delay_max_ps=10"]


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


def manifest(out):
    return json.loads((out / MANIFEST_NAME).read_text(encoding="utf-8"))


class TestParameterResolution:
    """测试参数合并顺序"""

    def test_flags_override_set_and_file(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text(json.dumps({"sigma_ps": 2.0, "nbar": 5}), encoding="utf-8")
        config = RunConfig(command="pulse", output_dir=tmp_path, config_path=path,
                           overrides={"sigma_ps": "2.5", "n_phase": "12"}, flags={"sigma_ps": 3.0, "c0": None})
        params = resolve_parameters(config)
        assert params["sigma_ps"] == 3.0
        assert params["nbar"] == 5.0
        assert params["n_phase"] == 12
        assert params["c0"] == Config.DEFAULTS["c0"]

    def test_unknown_key(self, tmp_path):
        config = RunConfig(command="pulse", output_dir=tmp_path, overrides={"tod_ps3": "1"})
        with pytest.raises(ConfigError) as info:
            resolve_parameters(config)
        assert info.value.key == "tod_ps3"

    def test_invalid_value(self, tmp_path):
        config = RunConfig(command="pulse", output_dir=tmp_path, overrides={"n_phase": "many"})
        with pytest.raises(ConfigError):
            resolve_parameters(config)

    def test_null_restores_infinite_step(self, tmp_path):
        config = RunConfig(command="pulse", output_dir=tmp_path, overrides={"max_step_ps": "null"})
        assert math.isinf(resolve_parameters(config)["max_step_ps"])

    def test_parse_overrides(self):
        assert parse_overrides(["a=1", " b = x "]) == {"a": "1", "b": "x"}
        with pytest.raises(ConfigError):
            parse_overrides(["novalue"])

    def test_flags_map_to_parameter_keys(self, tmp_path):
        args = parse_args(["pulse", "--sigma-ps", "1.54", "--gdd-ps2", "6.8", "--out", str(tmp_path)])
        config = build_run_config(args)
        assert config.flags["sigma_ps"] == 1.54
        assert config.flags["nbar"] is None
        assert config.output_dir == tmp_path


class TestCommands:
    """测试各子命令的产物与退出码"""

    def test_pulse(self, tmp_path):
        code = main(["pulse", "--sigma-ps", "1.54", "--gdd-ps2", "6.8", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "pulse.json").read_text(encoding="utf-8"))
        assert report["fwhm_ps"] == pytest.approx(11.0, abs=0.2)
        assert report["fwhm_stretch_ps"] == pytest.approx(report["fwhm_ps"], rel=1e-8)
        assert report["carrier_frequency_rad_per_ps"] == pytest.approx(4793.0, rel=1e-3)
        recorded = manifest(tmp_path)
        assert recorded["command"] == "pulse"
        assert recorded["outputs"] == ["pulse.json"]
        assert recorded["parameters"]["sigma_ps"] == 1.54
        assert (tmp_path / Config.LOG_FILE_NAME).exists()

    def test_unknown_set_key_exits_one(self, tmp_path):
        assert main(["pulse", "--set", "tod_ps3=1", "--out", str(tmp_path)]) == 1
        assert not (tmp_path / MANIFEST_NAME).exists()

    def test_malformed_set_exits_one(self, tmp_path):
        assert main(["pulse", "--set", "sigma_ps", "--out", str(tmp_path)]) == 1

    def test_invalid_physics_exits_one(self, tmp_path):
        assert main(["pulse", "--sigma-ps", "-1", "--out", str(tmp_path)]) == 1

    def test_autocorr_without_field_is_flat(self, tmp_path):
        code = main(["autocorr", "--intensity", "0", *FAST, "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "interference.csv")
        assert rows[0] == ["delay_ps", "p_return", "dip_fwhm_ps"]
        assert [float(r[1]) for r in rows[1:-1]] == [1.0] * 5
        assert rows[-1] == ["", "", "nan"]

    def test_autocorr_dip_width_scan(self, tmp_path):
        code = main(["autocorr", *FAST, "--set", "n_dip_energies=2", "--set", "omega0_max=2", "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "dip_width.csv")
        assert rows[0] == ["omega0_sq", "dip_fwhm_ps", "chirped_fwhm_ps"]
        assert [float(r[0]) for r in rows[1:]] == pytest.approx([1.0, 4.0])
        assert all(9.4 <= float(r[2]) <= 10.1 for r in rows[1:])
        assert "dip_width.csv" in manifest(tmp_path)["outputs"]

    def test_rap_scan(self, tmp_path):
        code = main(["rap-scan", "--n-phase", "8", "--set", "n_amplitudes=4", "--set", "omega0_max=3",
                     "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "energy_scan.csv")
        assert rows[0] == ["omega0_sq", "p1", "p2"]
        assert len(rows) == 5
        assert float(rows[1][1]) == 0.0
        assert float(rows[-1][0]) == pytest.approx(9.0)

    def test_contrast(self, tmp_path):
        assert main(["contrast", *FAST, "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "contrast.csv")
        assert rows[0] == ["delay_ps", "contrast", "background"]
        assert len(rows) == 6
        assert manifest(tmp_path)["outputs"] == ["contrast.csv", "contrast_model.json"]

    def test_contrast_revival(self, tmp_path):
        assert main(["contrast", "--revival", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "revival.csv")
        assert rows[0] == ["delay_us", "contrast"]
        assert len(rows) == 1 + Config.DEFAULTS["n_taus"]
        values = [float(r[1]) for r in rows[1:]]
        assert max(values) <= 0.5 * (1.0 + Config.DEFAULTS["c0"]) + 1e-9

    def test_kick(self, tmp_path, capsys):
        assert main(["kick", "--nu-khz", "1000", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "kick.json").read_text(encoding="utf-8"))
        assert report["delta_n"] == pytest.approx(0.5167, abs=5e-4)
        assert report["nbar_estimate"] is None
        assert '"delta_n"' in capsys.readouterr().out

    def test_kick_train_and_measured_gain(self, tmp_path):
        code = main(["kick", "--nu-khz", "1000", "--p-red", "0.1", "--p-blue", "0.2", "--set", "n_cpp=4",
                     "--set", "nbar0=0.1", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "kick.json").read_text(encoding="utf-8"))
        assert report["n_cpp"] == 4
        assert report["delta_n_train"] == pytest.approx(4.0 * report["delta_n"], rel=1e-9)
        assert report["delta_n_measured"] == pytest.approx(0.9)

    def test_kick_degenerate_sidebands_exit_two(self, tmp_path):
        assert main(["kick", "--p-red", "0.3", "--p-blue", "0.2", "--out", str(tmp_path)]) == 2

    def test_fit_requires_input(self, tmp_path):
        assert main(["fit", "--out", str(tmp_path)]) == 1

    def test_fit_rejects_malformed_dataset(self, tmp_path, write_dataset_file):
        path = write_dataset_file(["delay_ps,contrast", "0,0.5"])
        assert main(["fit", "--input", str(path), "--out", str(tmp_path / "out")]) == 1

    def test_synth_revival_is_reproducible(self, tmp_path):
        first, second, rerun = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert main(["synth", "--revival", "--seed", "7", "--out", str(first)]) == 0
        assert main(["synth", "--revival", "--seed", "7", "--out", str(second)]) == 0
        data = (first / "synthetic_revival.csv").read_bytes()
        assert data == (second / "synthetic_revival.csv").read_bytes()
        assert manifest(first)["seed"] == 7

        # 用清单重跑：参数与种子都从清单恢复
        assert main(["synth", "--revival", "--config", str(first / MANIFEST_NAME), "--out", str(rerun)]) == 0
        assert (rerun / "synthetic_revival.csv").read_bytes() == data
        assert (rerun / MANIFEST_NAME).read_bytes() == (first / MANIFEST_NAME).read_bytes()

    def test_synth_without_seed_records_one(self, tmp_path):
        assert main(["synth", "--revival", "--out", str(tmp_path)]) == 0
        assert isinstance(manifest(tmp_path)["seed"], int)

    def test_fit_revival_round_trip(self, tmp_path):
        synth = tmp_path / "synth"
        assert main(["synth", "--revival", "--seed", "11", "--set", "noise_rms=0.01", "--out", str(synth)]) == 0
        out = tmp_path / "fit"
        data = synth / "synthetic_revival.csv"
        assert main(["fit-revival", "--input", str(data), "--nbar", "15", "--c0", "0.5", "--out", str(out)]) == 0
        result = json.loads((out / "revival_fit.json").read_text(encoding="utf-8"))
        assert result["nbar"] == pytest.approx(21.0, rel=0.15)
        assert result["c0"] == pytest.approx(0.56, abs=0.05)
        assert result["seed"] is None
        assert set(manifest(out)["inputs"]) == {"synthetic_revival.csv"}
        assert len(manifest(out)["inputs"]["synthetic_revival.csv"]) == 64

    def test_fit_revival_non_convergence_exits_two(self, tmp_path):
        synth = tmp_path / "synth"
        assert main(["synth", "--revival", "--seed", "5", "--out", str(synth)]) == 0
        out = tmp_path / "fit"
        code = main(["fit-revival", "--input", str(synth / "synthetic_revival.csv"), "--nbar", "5",
                     "--c0", "0.3", "--set", "fit_max_nfev=1", "--out", str(out)])
        assert code == 2
        assert json.loads((out / "revival_fit.json").read_text(encoding="utf-8"))["converged"] is False

    @pytest.mark.slow
    def test_synth_then_fit(self, tmp_path):
        synth = tmp_path / "synth"
        assert main(["synth", "--seed", "7", "--n-phase", "8", "--set", "n_delays=16",
                     "--set", "delay_max_ps=30", "--out", str(synth)]) == 0
        out = tmp_path / "fit"
        code = main(["fit", "--input", str(synth / "synthetic.csv"), "--n-phase", "8", "--fixed", "gdd",
                     "--sigma-ps", "1.8", "--intensity", "0.6", "--out", str(out)])
        assert code in (0, 2)
        result = json.loads((out / "fit.json").read_text(encoding="utf-8"))
        assert result["sigma"] == pytest.approx(1.5, rel=0.15)
        assert result["fixed_mask"]["gdd"] is True
        assert len(result["curve"]) == 16
