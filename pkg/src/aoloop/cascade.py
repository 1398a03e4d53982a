"""Discrete-time multirate simulator of the two-stage loop.

Everything runs on the stage-2 (fast) clock. Stage 1 closes at a rate
``R`` times slower: its WFS averages the fast-rate residual over each slow
frame (measurement available at the next frame boundary), while the stage-2
WFS is a one-sample delay. Commands take effect after each stage's latency;
fractional latencies are applied by linear interpolation of the command
stream, matching the frequency-domain plant models used for synthesis.

In the disentangled scheme the stage-2 mirror subtracts the projection of
the stage-1 correction as currently applied by the stage-1 DM (i.e. the
replica is time-aligned with the stage-1 latency), so with an exact
projection the stage-2 loop sees the full disturbance.

Saturated commands are written back into the controller history, so the
filter recursion tracks what the DM actually applied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .disturbance import NoiseParams, measurement_noise_sigma
from .errors import ConfigError, ParameterError
from .freqmodel import LoopTiming
from .iirfilter import FilterState, IirController, step

SCHEME_STANDALONE = "standalone"
SCHEME_DCAO = "dcao"


@dataclass
class StageConfig:
    rate_hz: float
    timing: LoopTiming
    controller: IirController
    noise: NoiseParams | None = None
    stroke_limit: float = np.inf
    n_modes: int = 1

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ConfigError("rate_hz must be positive")
        if self.stroke_limit <= 0:
            raise ConfigError("stroke_limit must be positive")
        if self.n_modes < 1:
            raise ConfigError("n_modes must be >= 1")
        if not np.isclose(self.timing.sample_period, 1.0 / self.rate_hz, rtol=1e-9):
            raise ConfigError("timing.sample_period inconsistent with rate_hz")


@dataclass
class CascadeConfig:
    stage1: StageConfig
    stage2: StageConfig
    scheme: str = SCHEME_STANDALONE
    projection: float = 1.0

    def __post_init__(self):
        if self.scheme not in (SCHEME_STANDALONE, SCHEME_DCAO):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        ratio = self.stage2.rate_hz / self.stage1.rate_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("stage2 rate must be an integer multiple of stage1 rate")

    @property
    def rate_ratio(self) -> int:
        return int(round(self.stage2.rate_hz / self.stage1.rate_hz))


@dataclass
class SimTrace:
    """Per-mode series on the stage-2 clock; e2 is the performance signal."""

    rate_hz: float
    phi: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    sat1: np.ndarray
    sat2: np.ndarray

    SIGNALS = ("phi", "e1", "e2", "m1", "m2", "u1", "u2", "sat1", "sat2")

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def n_modes(self) -> int:
        return self.phi.shape[1]

    def rms(self, signal: str = "e2") -> float:
        return float(np.sqrt(np.mean(np.asarray(getattr(self, signal)) ** 2)))

    def mode(self, signal: str, index: int = 0) -> np.ndarray:
        return np.asarray(getattr(self, signal))[:, index]

    def summary(self) -> dict:
        out = {"rate_hz": self.rate_hz,
               "n_samples": int(self.n_samples),
               "n_modes": int(self.n_modes),
               "saturation_count_stage1": int(self.sat1.sum()),
               "saturation_count_stage2": int(self.sat2.sum())}
        for name in ("phi", "e1", "e2", "u1", "u2"):
            out[f"rms_{name}"] = self.rms(name)
        return out


def apply_stroke_limit(u, limit: float):
    """Clamp to [-limit, limit]; the flag marks strict clipping only."""
    if limit <= 0:
        raise ParameterError("limit must be positive")
    u = np.asarray(u, dtype=float)
    saturated = np.abs(u) > limit
    return np.clip(u, -limit, limit), saturated


def _delayed(cmd: np.ndarray, k: int, delay: float) -> np.ndarray:
    """Command stream value at fast-sample time k - delay, linearly
    interpolated; zero before the run starts."""
    idx = k - delay
    i0 = int(np.floor(idx))
    lam = idx - i0
    lo = cmd[i0] if i0 >= 0 else 0.0
    if lam == 0.0:
        return lo
    hi = cmd[i0 + 1] if i0 + 1 >= 0 else 0.0
    return (1.0 - lam) * lo + lam * hi


def _sigma(noise: NoiseParams | None) -> float:
    if noise is None or noise.n_q == 0:
        return 0.0
    return measurement_noise_sigma(noise)


def _run(cfg: CascadeConfig, disturbance: np.ndarray, seed, mirror: bool) -> SimTrace:
    phi = np.asarray(disturbance, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    n, n_modes = phi.shape
    if n_modes != cfg.stage2.n_modes:
        raise ConfigError("disturbance mode count != stage2.n_modes")
    ratio = cfg.rate_ratio
    dt2 = 1.0 / cfg.stage2.rate_hz
    d1 = cfg.stage1.timing.latency / dt2
    d2 = cfg.stage2.timing.latency / dt2

    rng = np.random.default_rng(seed)
    sig1 = _sigma(cfg.stage1.noise)
    sig2 = _sigma(cfg.stage2.noise)

    k1, k2 = cfg.stage1.controller, cfg.stage2.controller
    st1 = FilterState(k1.order, n_modes)
    st2 = FilterState(k2.order, n_modes)

    e1 = np.zeros((n, n_modes))
    e2 = np.zeros((n, n_modes))
    m1 = np.zeros((n, n_modes))
    m2 = np.zeros((n, n_modes))
    u1 = np.zeros((n, n_modes))
    u2 = np.zeros((n, n_modes))
    sat1 = np.zeros((n, n_modes), dtype=bool)
    sat2 = np.zeros((n, n_modes), dtype=bool)

    proj = cfg.projection
    u1_now = np.zeros(n_modes)
    m1_now = np.zeros(n_modes)

    for k in range(n):
        # stage-2 RTC: one-sample-delayed residual plus noise
        meas2 = (e2[k - 1] if k > 0 else np.zeros(n_modes)) \
            + sig2 * rng.standard_normal(n_modes)
        cmd2 = step(k2, st2, meas2)
        cmd2, flag2 = apply_stroke_limit(cmd2, cfg.stage2.stroke_limit)
        st2.override_last_command(cmd2)
        u2[k] = cmd2
        sat2[k] = flag2
        m2[k] = meas2

        # stage-1 RTC at frame boundaries: frame-averaged residual
        if k % ratio == 0:
            if k > 0:
                meas1 = e1[k - ratio:k].mean(axis=0) \
                    + sig1 * rng.standard_normal(n_modes)
                cmd1 = step(k1, st1, meas1)
                cmd1, flag1 = apply_stroke_limit(cmd1, cfg.stage1.stroke_limit)
                st1.override_last_command(cmd1)
                u1_now = cmd1
                m1_now = meas1
                sat1[k] = flag1
        u1[k] = u1_now
        m1[k] = m1_now

        c1 = _delayed(u1, k, d1)
        c2 = _delayed(u2, k, d2)
        e1[k] = phi[k] - c1
        applied2 = c2 - proj * c1 if mirror else c2
        e2[k] = e1[k] - applied2

    return SimTrace(rate_hz=cfg.stage2.rate_hz, phi=phi, e1=e1, e2=e2,
                    m1=m1, m2=m2, u1=u1, u2=u2, sat1=sat1, sat2=sat2)


def run_standalone(cfg: CascadeConfig, disturbance: np.ndarray, seed) -> SimTrace:
    """Second stage closes on the first-stage residual; no information shared."""
    if cfg.scheme != SCHEME_STANDALONE:
        raise ConfigError("config scheme is not standalone")
    return _run(cfg, disturbance, seed, mirror=False)


def run_dcao(cfg: CascadeConfig, disturbance: np.ndarray, seed) -> SimTrace:
    """Disentangled scheme: the stage-2 DM replays -projection times the
    stage-1 correction, so its loop sees the full disturbance."""
    if cfg.scheme != SCHEME_DCAO:
        raise ConfigError("config scheme is not dcao")
    return _run(cfg, disturbance, seed, mirror=True)


def run_cascade(cfg: CascadeConfig, disturbance: np.ndarray, seed) -> SimTrace:
    if cfg.scheme == SCHEME_DCAO:
        return run_dcao(cfg, disturbance, seed)
    return run_standalone(cfg, disturbance, seed)


def reconstruct_open_loop(trace: SimTrace, cfg: CascadeConfig) -> np.ndarray:
    """Stage-2 pseudo-open-loop estimate: measurement plus the replayed own
    correction, time-aligned one sample back. With exact projection in the
    disentangled scheme (and no noise) this reproduces the disturbance."""
    d2 = cfg.stage2.timing.latency * cfg.stage2.rate_hz
    n = trace.n_samples
    rec = np.zeros_like(trace.phi)
    for k in range(1, n):
        rec[k] = trace.m2[k] + _delayed(trace.u2, k - 1, d2)
    return rec


def single_stage_config(rate_hz: float, controller: IirController,
                        timing: LoopTiming | None = None,
                        noise: NoiseParams | None = None,
                        stroke_limit: float = np.inf,
                        n_modes: int = 1) -> CascadeConfig:
    """Degenerate cascade exercising only stage 2 (stage 1 has zero gain)."""
    if timing is None:
        timing = LoopTiming(sample_period=1.0 / rate_hz)
    idle = IirController(b=[0.0], a=[])
    s1 = StageConfig(rate_hz=rate_hz,
                     timing=LoopTiming(sample_period=1.0 / rate_hz),
                     controller=idle, noise=None,
                     stroke_limit=stroke_limit, n_modes=n_modes)
    s2 = StageConfig(rate_hz=rate_hz, timing=timing, controller=controller,
                     noise=noise, stroke_limit=stroke_limit, n_modes=n_modes)
    return CascadeConfig(stage1=s1, stage2=s2, scheme=SCHEME_STANDALONE)


def write_trace_csv(trace: SimTrace, directory, max_modes: int | None = None):
    """One CSV per signal: sample index, time_s, then one column per mode."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n_modes = trace.n_modes if max_modes is None else min(max_modes, trace.n_modes)
    t = np.arange(trace.n_samples) / trace.rate_hz
    for name in trace.SIGNALS:
        data = np.asarray(getattr(trace, name), dtype=float)[:, :n_modes]
        cols = np.column_stack([np.arange(trace.n_samples), t, data])
        header = "sample,time_s," + ",".join(f"mode_{i:03d}" for i in range(n_modes))
        np.savetxt(directory / f"{name}.csv", cols, delimiter=",",
                   header=header, comments="", fmt="%.17g")


def write_summary_json(trace: SimTrace, path):
    with open(path, "w") as fh:
        json.dump(trace.summary(), fh, indent=2)
        fh.write("\n")
