"""Run configuration: YAML loading, strict validation, preset expansion."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .disturbance import VibrationPeak
from .errors import ConfigError
from .presets import (DEFAULT_SLOPE, DISTURBANCE_RMS_PER_ARCSEC,
                      KNEE_T0_CONSTANT, MODE_DECAY_EXPONENT, STROKE_LIMIT,
                      SciencePreset, get_preset, preset_noise)

SCHEMA_VERSION = 1

STRATEGY_REFERENCE = "reference-integrator"
STRATEGY_OPTIMIZED_GAIN = "optimized-modal-gain"
STRATEGY_DATA_DRIVEN = "data-driven"
STRATEGIES = (STRATEGY_REFERENCE, STRATEGY_OPTIMIZED_GAIN, STRATEGY_DATA_DRIVEN)

_SCHEMA = {
    "schema_version": int,
    "preset": (str, type(None)),
    "scheme": str,
    "duration_s": (int, float),
    "seed": int,
    "output_dir": (str, type(None)),
    "modes": (int, type(None)),
    "trace_modes": int,
    "stage1": {
        "rate_hz": (int, float, type(None)),
        "latency_frames": (int, float, type(None)),
        "strategy": str,
        "gain": (int, float, type(None)),
    },
    "stage2": {
        "rate_hz": (int, float, type(None)),
        "latency_frames": (int, float, type(None)),
        "strategies": list,
        "order": int,
    },
    "synth": {
        "mu": (int, float),
        "alpha": (int, float),
        "order": int,
    },
    "solver": {
        "eps": (int, float),
        "max_iter": int,
        "rel_tol": (int, float),
        "grid_points": int,
    },
    "disturbance": {
        "rms": (int, float, type(None)),
        "knee_hz": (int, float, type(None)),
        "slope": (int, float, type(None)),
        "mode_decay": (int, float),
        "vibration_peaks": list,
        "tilt_experiment": bool,
    },
    "noise": {
        "enabled": bool,
    },
    "stroke_limit": (int, float),
    "welch": {
        "segment_length": (int, type(None)),
    },
}

_PEAK_SCHEMA = {"center_hz": (int, float), "q": (int, float), "gain": (int, float)}


def _defaults() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "preset": None,
        "scheme": "standalone",
        "duration_s": 0.5,
        "seed": 1234,
        "output_dir": None,
        "modes": None,
        "trace_modes": 4,
        "stage1": {"rate_hz": None, "latency_frames": None,
                   "strategy": STRATEGY_REFERENCE, "gain": None},
        "stage2": {"rate_hz": None, "latency_frames": None,
                   "strategies": [STRATEGY_REFERENCE, STRATEGY_DATA_DRIVEN],
                   "order": 5},
        "synth": {"mu": 0.5, "alpha": 0.0, "order": 5},
        "solver": {"eps": 1e-9, "max_iter": 20, "rel_tol": 1e-4,
                   "grid_points": 512},
        "disturbance": {"rms": None, "knee_hz": None, "slope": None,
                        "mode_decay": MODE_DECAY_EXPONENT,
                        "vibration_peaks": [], "tilt_experiment": False},
        "noise": {"enabled": True},
        "stroke_limit": STROKE_LIMIT,
        "welch": {"segment_length": None},
    }


def _check_keys(data: dict, schema: dict, path: str):
    for key, val in data.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key {where!r}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            _check_keys(val, expected, where)
        elif expected is list or expected is bool or isinstance(expected, type):
            if not isinstance(val, expected):
                raise ConfigError(f"{where!r} has wrong type {type(val).__name__}")
        else:
            if not isinstance(val, expected):
                raise ConfigError(f"{where!r} has wrong type {type(val).__name__}")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            out[key] = _merge(base[key], val)
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    """Fully resolved run parameters."""

    preset: SciencePreset | None
    scheme: str
    duration_s: float
    seed: int
    output_dir: Path
    n_modes: int
    trace_modes: int
    f1_hz: float
    f2_hz: float
    latency1_s: float
    latency2_s: float
    stage1_strategy: str
    stage1_gain: float | None
    stage2_strategies: list
    dd_order: int
    mu: float
    alpha: float
    solver_eps: float
    solver_max_iter: int
    solver_rel_tol: float
    grid_points: int
    dist_rms: float
    dist_knee_hz: float
    dist_slope: float
    mode_decay: float
    vibration_peaks: list
    tilt_experiment: bool
    noise_enabled: bool
    stroke_limit: float
    welch_segment: int | None

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.f2_hz))


def resolve_config(raw: dict, config_dir: Path | None = None) -> RunConfig:
    """Validate a raw mapping and expand the preset into explicit values."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, _SCHEMA, "")
    data = _merge(_defaults(), raw)
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {data['schema_version']}")

    preset = get_preset(data["preset"]) if data["preset"] else None

    scheme = data["scheme"]
    if scheme not in ("standalone", "dcao"):
        raise ConfigError(f"scheme must be standalone or dcao, got {scheme!r}")

    s1, s2 = data["stage1"], data["stage2"]
    f1 = s1["rate_hz"] if s1["rate_hz"] is not None else (preset.f1_hz if preset else None)
    f2 = s2["rate_hz"] if s2["rate_hz"] is not None else (preset.f2_hz if preset else None)
    if f1 is None or f2 is None:
        raise ConfigError("stage rates required (set a preset or stage*.rate_hz)")
    lat1_frames = s1["latency_frames"]
    if lat1_frames is None:
        lat1_frames = preset.latency_frames if preset else 1.0
    lat2_frames = s2["latency_frames"]
    if lat2_frames is None:
        lat2_frames = preset.latency_frames if preset else 1.0

    dist = data["disturbance"]
    tilt = dist["tilt_experiment"]
    if dist["rms"] is not None:
        rms = dist["rms"]
    elif preset:
        rms = DISTURBANCE_RMS_PER_ARCSEC * preset.seeing_arcsec
    else:
        raise ConfigError("disturbance.rms required without a preset")
    if dist["knee_hz"] is not None:
        knee = dist["knee_hz"]
    elif tilt:
        from .presets import TILT_KNEE_HZ
        knee = TILT_KNEE_HZ
    elif preset:
        knee = KNEE_T0_CONSTANT / preset.t0_ms
    else:
        raise ConfigError("disturbance.knee_hz required without a preset")
    if dist["slope"] is not None:
        slope = dist["slope"]
    elif tilt:
        from .presets import TILT_SLOPE
        slope = TILT_SLOPE
    else:
        slope = DEFAULT_SLOPE

    peaks = []
    for i, pk in enumerate(dist["vibration_peaks"]):
        if not isinstance(pk, dict):
            raise ConfigError(f"disturbance.vibration_peaks[{i}] must be a mapping")
        _check_keys(pk, _PEAK_SCHEMA, f"disturbance.vibration_peaks[{i}]")
        try:
            peaks.append(VibrationPeak(center_hz=pk["center_hz"],
                                       quality_factor=pk["q"],
                                       power_gain=pk["gain"]))
        except KeyError as exc:
            raise ConfigError(
                f"disturbance.vibration_peaks[{i}] missing key {exc}") from exc
    if tilt and not peaks:
        from .presets import TILT_VIBRATION_PEAKS
        peaks = list(TILT_VIBRATION_PEAKS)

    if tilt:
        n_modes = 1
    elif data["modes"] is not None:
        n_modes = data["modes"]
    elif preset:
        n_modes = preset.n_modes2
    else:
        n_modes = 1
    if n_modes < 1:
        raise ConfigError("modes must be >= 1")

    strategies = list(s2["strategies"])
    if not strategies:
        raise ConfigError("stage2.strategies must not be empty")
    for st in strategies:
        if st not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {st!r}; valid: {', '.join(STRATEGIES)}")
    if s1["strategy"] != STRATEGY_REFERENCE:
        raise ConfigError("stage1.strategy must be reference-integrator")

    duration = float(data["duration_s"])
    n_samples = int(round(duration * f2))
    seg = data["welch"]["segment_length"]
    if seg is not None and n_samples < 2 * seg:
        raise ConfigError(
            f"duration too short: {n_samples} samples < 2 x Welch segment {seg}")
    if n_samples < 16:
        raise ConfigError("duration too short: need at least 16 stage-2 samples")

    out_dir = data["output_dir"]
    if out_dir is None:
        out_dir = "aoloop_out"
    out_path = Path(out_dir)
    if config_dir is not None and not out_path.is_absolute():
        out_path = config_dir / out_path

    return RunConfig(
        preset=preset,
        scheme=scheme,
        duration_s=duration,
        seed=int(data["seed"]),
        output_dir=out_path,
        n_modes=int(n_modes),
        trace_modes=int(data["trace_modes"]),
        f1_hz=float(f1),
        f2_hz=float(f2),
        latency1_s=float(lat1_frames) / float(f1),
        latency2_s=float(lat2_frames) / float(f2),
        stage1_strategy=s1["strategy"],
        stage1_gain=s1["gain"],
        stage2_strategies=strategies,
        dd_order=int(s2["order"]),
        mu=float(data["synth"]["mu"]),
        alpha=float(data["synth"]["alpha"]),
        solver_eps=float(data["solver"]["eps"]),
        solver_max_iter=int(data["solver"]["max_iter"]),
        solver_rel_tol=float(data["solver"]["rel_tol"]),
        grid_points=int(data["solver"]["grid_points"]),
        dist_rms=float(rms),
        dist_knee_hz=float(knee),
        dist_slope=float(slope),
        mode_decay=float(dist["mode_decay"]),
        vibration_peaks=peaks,
        tilt_experiment=bool(tilt),
        noise_enabled=bool(data["noise"]["enabled"]),
        stroke_limit=float(data["stroke_limit"]),
        welch_segment=seg,
    )


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"YAML parse error in {path}{loc}: {exc}") from exc
    if raw is None:
        raw = {}
    return resolve_config(raw, config_dir=path.parent)
