"""Experiment driver: synthesis per strategy, cascade simulation, artifacts.

Modal channels are identical up to a scale factor (the spatial calibration
is out of scope), and the synthesis weights are scale-invariant, so one
controller per strategy serves every mode; each mode still gets its own
disturbance realization and noise stream in the simulator.

In the standalone scheme the second stage is designed against the
first-stage residual spectrum |S1|*Phi; in the disentangled scheme it sees
the full disturbance and is designed against Phi directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .analysis import (WelchConfig, compare, default_welch, welch_psd,
                       write_psd_csv)
from .cascade import (CascadeConfig, SCHEME_DCAO, SCHEME_STANDALONE,
                      SimTrace, StageConfig, run_cascade, write_summary_json,
                      write_trace_csv)
from .config import (RunConfig, STRATEGY_DATA_DRIVEN, STRATEGY_OPTIMIZED_GAIN,
                     STRATEGY_REFERENCE)
from .disturbance import (FirModel, NoiseParams, add_vibration_peaks,
                          atmospheric_psd, fit_fir_to_psd, generate_timeseries)
from .errors import AoLoopError
from .freqmodel import (FrequencyGrid, FrequencyResponse, LoopTiming,
                        WFS_AVERAGING, WFS_UNIT_DELAY, averaging_wfs_response,
                        default_grid, plant_response, sensitivity)
from .iirfilter import IirController, eval_freq, integrator, to_json
from .presets import mode_scales, preset_noise, scaled_atmospheric_params
from .synthesis import (STRUCTURE_INTEGRATOR, SynthesisProblem,
                        SynthesisResult, optimize_integrator_gain, synthesize)


@dataclass
class StageDesign:
    strategy: str
    controller: IirController
    result: SynthesisResult | None = None
    gain: float | None = None


@dataclass
class RunArtifacts:
    designs: dict
    traces: dict
    report_path: Path
    output_dir: Path


def disturbance_psd_input(cfg: RunConfig, f_hz: np.ndarray) -> np.ndarray:
    """Mode-0 disturbance PSD at the stage-2 input (atmosphere + peaks)."""
    params = scaled_atmospheric_params(cfg.dist_rms, cfg.dist_knee_hz,
                                       cfg.dist_slope, cfg.f2_hz)
    psd = atmospheric_psd(params, f_hz)
    if cfg.vibration_peaks:
        psd = add_vibration_peaks(psd, cfg.vibration_peaks, f_hz)
    return psd


def stage1_response(cfg: RunConfig, k1: IirController,
                    f_hz: np.ndarray) -> np.ndarray:
    """|S1| sampled at arbitrary frequencies from the slow-loop model."""
    w = 2 * np.pi * np.asarray(f_hz)
    g1 = averaging_wfs_response(w, 1.0 / cfg.f1_hz) * np.exp(-1j * w * cfg.latency1_s)
    zinv1 = np.exp(-1j * w / cfg.f1_hz)
    num = np.polynomial.polynomial.polyval(zinv1, k1.b)
    den = np.polynomial.polynomial.polyval(zinv1, np.concatenate([[1.0], k1.a]))
    return np.abs(1.0 / (1.0 + g1 * num / den))


def design_stage1(cfg: RunConfig) -> StageDesign:
    """Reference integrator for the slow stage; gain fixed or scanned."""
    if cfg.stage1_gain is not None:
        return StageDesign(strategy=STRATEGY_REFERENCE,
                           controller=integrator(cfg.stage1_gain),
                           gain=cfg.stage1_gain)
    grid1 = default_grid(cfg.f1_hz, min(cfg.grid_points, 256))
    timing1 = LoopTiming(1.0 / cfg.f1_hz, cfg.latency1_s, WFS_AVERAGING)
    plant1 = plant_response(timing1, grid1)
    psd1 = disturbance_psd_input(cfg, grid1.hz)
    problem = SynthesisProblem(plant=plant1, disturbance_amplitude=np.sqrt(psd1),
                               grid=grid1, order=1, alpha=cfg.alpha,
                               modulus_margin=cfg.mu,
                               structure=STRUCTURE_INTEGRATOR)
    gain, _ = optimize_integrator_gain(problem, n_gains=60)
    return StageDesign(strategy=STRATEGY_REFERENCE, controller=integrator(gain),
                       gain=gain)


def stage2_problem(cfg: RunConfig, k1: IirController,
                   structure: str, order: int) -> SynthesisProblem:
    grid2 = default_grid(cfg.f2_hz, cfg.grid_points)
    timing2 = LoopTiming(1.0 / cfg.f2_hz, cfg.latency2_s, WFS_UNIT_DELAY)
    plant2 = plant_response(timing2, grid2)
    psd_in = disturbance_psd_input(cfg, grid2.hz)
    if cfg.scheme == SCHEME_STANDALONE:
        psd_in = stage1_response(cfg, k1, grid2.hz) ** 2 * psd_in
    return SynthesisProblem(plant=plant2, disturbance_amplitude=np.sqrt(psd_in),
                            grid=grid2, order=order, alpha=cfg.alpha,
                            modulus_margin=cfg.mu, structure=structure,
                            solver_eps=cfg.solver_eps)


def design_stage2(cfg: RunConfig, k1: IirController, strategy: str) -> StageDesign:
    if strategy == STRATEGY_REFERENCE:
        problem = stage2_problem(cfg, k1, STRUCTURE_INTEGRATOR, 1)
        gain, _ = optimize_integrator_gain(problem, n_gains=100)
        return StageDesign(strategy=strategy, controller=integrator(gain), gain=gain)
    if strategy == STRATEGY_OPTIMIZED_GAIN:
        problem = stage2_problem(cfg, k1, STRUCTURE_INTEGRATOR, 1)
        result = synthesize(problem, integrator(0.1),
                            max_iter=cfg.solver_max_iter,
                            rel_tol=cfg.solver_rel_tol)
        if result.status == "infeasible":
            raise AoLoopError("optimized-modal-gain synthesis infeasible")
        return StageDesign(strategy=strategy, controller=result.controller,
                           result=result, gain=float(result.controller.b[0]))
    if strategy == STRATEGY_DATA_DRIVEN:
        problem = stage2_problem(cfg, k1, "iir", cfg.dd_order)
        result = synthesize(problem, integrator(0.1),
                            max_iter=cfg.solver_max_iter,
                            rel_tol=cfg.solver_rel_tol)
        if result.status == "infeasible":
            raise AoLoopError("data-driven synthesis infeasible")
        return StageDesign(strategy=strategy, controller=result.controller,
                           result=result)
    raise AoLoopError(f"unknown strategy {strategy!r}")


def build_disturbance(cfg: RunConfig, n: int, seed) -> np.ndarray:
    """Per-mode colored series at the stage-2 rate: one FIR model fit to the
    mode-0 target, independent realizations per mode, power-law scales."""
    f = np.linspace(0, cfg.f2_hz / 2, 2049)
    target = disturbance_psd_input(cfg, f)
    length = min(2048, 2 * (f.size - 1))
    model = fit_fir_to_psd(target, f, length, cfg.f2_hz)
    scales = mode_scales(cfg.n_modes, cfg.mode_decay)
    seeds = np.random.SeedSequence(seed).spawn(cfg.n_modes)
    out = np.empty((n, cfg.n_modes))
    for j in range(cfg.n_modes):
        out[:, j] = scales[j] * generate_timeseries(model, n, seeds[j])
    return out


def cascade_config(cfg: RunConfig, k1: IirController,
                   k2: IirController) -> CascadeConfig:
    noise1 = preset_noise(cfg.preset, 1) if (cfg.noise_enabled and cfg.preset) else None
    noise2 = preset_noise(cfg.preset, 2) if (cfg.noise_enabled and cfg.preset) else None
    s1 = StageConfig(rate_hz=cfg.f1_hz,
                     timing=LoopTiming(1.0 / cfg.f1_hz, cfg.latency1_s, WFS_AVERAGING),
                     controller=k1, noise=noise1,
                     stroke_limit=cfg.stroke_limit, n_modes=cfg.n_modes)
    s2 = StageConfig(rate_hz=cfg.f2_hz,
                     timing=LoopTiming(1.0 / cfg.f2_hz, cfg.latency2_s, WFS_UNIT_DELAY),
                     controller=k2, noise=noise2,
                     stroke_limit=cfg.stroke_limit, n_modes=cfg.n_modes)
    return CascadeConfig(stage1=s1, stage2=s2, scheme=cfg.scheme, projection=1.0)


def run(cfg: RunConfig, make_figures: bool = True) -> RunArtifacts:
    """Full pipeline: design, simulate, compare, write artifacts.

    Layout under ``cfg.output_dir``: controllers/, traces/<strategy>/,
    psd/, figures/, report.json.
    """
    out = Path(cfg.output_dir)
    (out / "controllers").mkdir(parents=True, exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    (out / "psd").mkdir(exist_ok=True)

    stage1 = design_stage1(cfg)
    designs = {"stage1": stage1}
    k1 = stage1.controller

    n = cfg.n_samples
    disturbance = build_disturbance(cfg, n, cfg.seed)
    if cfg.welch_segment is None:
        wcfg = default_welch(n, cfg.f2_hz)
    else:
        wcfg = WelchConfig(segment_length=cfg.welch_segment, rate_hz=cfg.f2_hz)

    traces: dict[str, SimTrace] = {}
    psds: dict[str, tuple] = {}
    for strategy in cfg.stage2_strategies:
        design = design_stage2(cfg, k1, strategy)
        designs[strategy] = design
        cc = cascade_config(cfg, k1, design.controller)
        trace = run_cascade(cc, disturbance, cfg.seed)
        if not np.all(np.isfinite(trace.e2)):
            raise AoLoopError(f"simulation produced non-finite residuals "
                              f"({strategy})")
        traces[strategy] = trace

        (out / "controllers" / f"{strategy}.json").write_text(
            to_json(design.controller, rate_hz=cfg.f2_hz) + "\n")
        write_trace_csv(trace, out / "traces" / strategy,
                        max_modes=cfg.trace_modes)
        write_summary_json(trace, out / "traces" / strategy / "summary.json")

        f_psd, p_res = welch_psd(trace.mode("e2", 0), wcfg)
        psds[strategy] = (f_psd, p_res)
        write_psd_csv(out / "psd" / f"residual_{strategy}.csv", f_psd, p_res)

    (out / "controllers" / "stage1.json").write_text(
        to_json(k1, rate_hz=cfg.f1_hz) + "\n")

    f_psd, p_dist = welch_psd(traces[cfg.stage2_strategies[0]].mode("phi", 0), wcfg)
    write_psd_csv(out / "psd" / "disturbance.csv", f_psd, p_dist)

    if len(traces) >= 2:
        payload = compare(traces, welch=wcfg).to_dict()
    else:
        only = next(iter(traces))
        payload = {"reference": only,
                   "entries": [{"name": only, "rms": traces[only].rms("e2"),
                                "band_rms": {}, "max_rejection": None,
                                "saturation_count":
                                    int(traces[only].sat1.sum()
                                        + traces[only].sat2.sum())}],
                   "relative_gain_percent": {}}
    report_path = out / "report.json"
    payload["config"] = {
        "preset": cfg.preset.name if cfg.preset else None,
        "scheme": cfg.scheme,
        "duration_s": cfg.duration_s,
        "seed": cfg.seed,
        "modes": cfg.n_modes,
        "stage1_gain": stage1.gain,
    }
    report_path.write_text(json.dumps(payload, indent=2) + "\n")

    if make_figures:
        report.render_run_figures(out / "figures", cfg, traces, psds,
                                  (f_psd, p_dist), designs)

    return RunArtifacts(designs=designs, traces=traces,
                        report_path=report_path, output_dir=out)
