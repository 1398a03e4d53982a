"""Figure rendering for run reports.

PNG figures are written next to the CSV/JSON artifacts; the delimited files
remain the machine-readable contract.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .analysis import empirical_rejection
from .freqmodel import default_grid, plant_response, LoopTiming, WFS_UNIT_DELAY, sensitivity
from .iirfilter import eval_freq


def plot_psd_comparison(path, f_hz, residual_psds: dict, disturbance_psd):
    """Log-log residual PSDs per strategy against the disturbance."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    sel = f_hz > 0
    ax.loglog(f_hz[sel], disturbance_psd[sel], "k--", lw=1.2, label="disturbance")
    for name, psd in residual_psds.items():
        ax.loglog(f_hz[sel], psd[sel], lw=1.0, label=f"residual: {name}")
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("PSD [unit$^2$/Hz]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_rejection_comparison(path, f_hz, curves: dict, peak_freqs=()):
    """Semilog-x empirical |S| curves; optional markers at vibration peaks."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    sel = f_hz > 0
    for name, c in curves.items():
        style = "--" if name.startswith("model") else "-"
        ax.semilogx(f_hz[sel], 20 * np.log10(np.maximum(c[sel], 1e-12)),
                    style, lw=1.0, label=name)
    for fp in peak_freqs:
        ax.axvline(fp, color="gray", alpha=0.4, lw=0.8)
    ax.axhline(0.0, color="k", lw=0.6, alpha=0.5)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("|S| [dB]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_trace_preview(path, trace, n_show: int = 2000):
    """Disturbance and residuals for mode 0 over the first samples."""
    fig, ax = plt.subplots(figsize=(7, 4))
    n = min(n_show, trace.n_samples)
    t = np.arange(n) / trace.rate_hz
    ax.plot(t, trace.mode("phi")[:n], lw=0.7, alpha=0.8, label="disturbance")
    ax.plot(t, trace.mode("e1")[:n], lw=0.7, alpha=0.8, label="stage-1 residual")
    ax.plot(t, trace.mode("e2")[:n], lw=0.7, alpha=0.9, label="stage-2 residual")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("mode 0 [unit]")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_run_figures(fig_dir, cfg, traces: dict, residual_psds: dict,
                       disturbance_psd, designs: dict):
    """Standard figure set for one run."""
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)

    f_dist, p_dist = disturbance_psd
    plot_psd_comparison(fig_dir / "psd_comparison.png", f_dist,
                        {k: v[1] for k, v in residual_psds.items()}, p_dist)

    curves = {}
    for name, tr in traces.items():
        f = residual_psds[name][0]
        curves[f"measured: {name}"] = empirical_rejection(residual_psds[name][1], p_dist)
    grid = default_grid(cfg.f2_hz, 512)
    plant = plant_response(
        LoopTiming(1.0 / cfg.f2_hz, cfg.latency2_s, WFS_UNIT_DELAY), grid)
    model_curves = {}
    for name, design in designs.items():
        if name == "stage1":
            continue
        s = sensitivity(plant, eval_freq(design.controller, grid)).magnitude()
        model_curves[f"model |S2|: {name}"] = np.interp(f_dist, grid.hz, s)
    curves.update(model_curves)
    peak_freqs = [pk.center_hz for pk in cfg.vibration_peaks]
    plot_rejection_comparison(fig_dir / "sensitivity_comparison.png",
                              f_dist, curves, peak_freqs)

    first = next(iter(traces.values()))
    plot_trace_preview(fig_dir / "trace_preview.png", first)
