import json

import numpy as np
import pytest
import yaml

from aoloop import ConfigError, load_config, resolve_config
from aoloop.cli import main
from aoloop.presets import PRESETS, get_preset


class TestPresets:
    def test_five_presets_exist(self):
        assert sorted(PRESETS) == ["bright1best", "bright1worst", "red1fast",
                                   "red3medium", "red5best"]

    def test_bright1best_parameters(self):
        p = get_preset("bright1best")
        assert p.f1_hz == 1000.0 and p.f2_hz == 3000.0
        assert p.n_modes1 == 1200 and p.n_modes2 == 400
        assert p.seeing_arcsec == 0.4 and p.t0_ms == 9.0
        assert p.g_mag == 5.5 and p.j_mag == 5.2
        assert p.lambda1_um == 0.69 and p.lambda2_um == 1.04

    def test_red3medium_rates(self):
        p = get_preset("red3medium")
        assert p.f1_hz == 50.0 and p.f2_hz == 1250.0

    def test_unknown_preset_lists_names(self):
        with pytest.raises(ConfigError) as err:
            get_preset("nonexistent")
        msg = str(err.value)
        for name in PRESETS:
            assert name in msg


class TestResolveConfig:
    def test_preset_expansion(self):
        cfg = resolve_config({"preset": "bright1best"})
        assert cfg.f1_hz == 1000.0 and cfg.f2_hz == 3000.0
        assert cfg.n_modes == 400
        assert cfg.latency1_s == pytest.approx(0.5e-3)
        assert cfg.latency2_s == pytest.approx(0.5 / 3000.0)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            resolve_config({"preset": "bright1best", "bogus_key": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="synth.bogus"):
            resolve_config({"preset": "bright1best", "synth": {"bogus": 2}})

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ConfigError, match="unknown strategy"):
            resolve_config({"preset": "bright1best",
                            "stage2": {"strategies": ["pid"]}})

    def test_duration_too_short_rejected(self):
        with pytest.raises(ConfigError, match="duration too short"):
            resolve_config({"preset": "bright1best", "duration_s": 0.001})

    def test_welch_segment_bound(self):
        with pytest.raises(ConfigError, match="Welch segment"):
            resolve_config({"preset": "bright1best", "duration_s": 0.5,
                            "welch": {"segment_length": 4096}})

    def test_explicit_parameters_without_preset(self):
        cfg = resolve_config({
            "scheme": "dcao",
            "duration_s": 1.0,
            "stage1": {"rate_hz": 500.0, "latency_frames": 1.0},
            "stage2": {"rate_hz": 1000.0, "latency_frames": 1.0},
            "disturbance": {"rms": 100.0, "knee_hz": 20.0},
        })
        assert cfg.scheme == "dcao"
        assert cfg.f1_hz == 500.0 and cfg.f2_hz == 1000.0
        assert cfg.n_modes == 1
        assert cfg.dist_slope < 0

    def test_missing_rates_without_preset(self):
        with pytest.raises(ConfigError, match="rates"):
            resolve_config({"duration_s": 1.0,
                            "disturbance": {"rms": 1.0, "knee_hz": 10.0}})

    def test_tilt_experiment_defaults(self):
        cfg = resolve_config({"preset": "bright1best",
                              "disturbance": {"tilt_experiment": True}})
        assert cfg.n_modes == 1
        assert len(cfg.vibration_peaks) == 3
        assert cfg.dist_knee_hz == pytest.approx(2.0)

    def test_vibration_peak_parsing(self):
        cfg = resolve_config({
            "preset": "bright1best",
            "disturbance": {"vibration_peaks": [
                {"center_hz": 40.0, "q": 30.0, "gain": 10.0}]},
        })
        assert len(cfg.vibration_peaks) == 1
        assert cfg.vibration_peaks[0].center_hz == 40.0

    def test_bad_schema_version(self):
        with pytest.raises(ConfigError, match="schema_version"):
            resolve_config({"schema_version": 99, "preset": "bright1best"})


class TestLoadConfig:
    def test_yaml_roundtrip(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({
            "preset": "red5best",
            "seed": 7,
            "duration_s": 1.0,
            "output_dir": "out",
        }))
        cfg = load_config(path)
        assert cfg.preset.name == "red5best"
        assert cfg.seed == 7
        assert cfg.output_dir == tmp_path / "out"

    def test_parse_error_carries_location(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("preset: [unclosed\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.yaml")


class TestCli:
    def test_presets_list(self, capsys):
        assert main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        for name in PRESETS:
            assert name in out
        assert "3000" in out

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("unknown_root_key: 1\n")
        assert main(["simulate", "--config", str(bad)]) == 2
        assert "unknown" in capsys.readouterr().err

    def test_requires_config_or_preset(self, capsys):
        assert main(["simulate"]) == 2

    def test_conflicting_sources_rejected(self, tmp_path, capsys):
        path = tmp_path / "c.yaml"
        path.write_text("preset: bright1best\n")
        assert main(["simulate", "--config", str(path),
                     "--preset", "red5best"]) == 2
