"""Spectral estimation and controller-comparison reporting."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ParameterError

WINDOW_HANN = "hann"
WINDOW_RECTANGULAR = "rectangular"


@dataclass(frozen=True)
class WelchConfig:
    segment_length: int
    rate_hz: float
    overlap: float = 0.5
    window: str = WINDOW_HANN

    def __post_init__(self):
        if self.segment_length < 8:
            raise ParameterError("segment_length must be >= 8")
        if not 0 <= self.overlap < 1:
            raise ParameterError("overlap must lie in [0, 1)")
        if self.window not in (WINDOW_HANN, WINDOW_RECTANGULAR):
            raise ParameterError(f"unknown window {self.window!r}")


def default_welch(n_samples: int, rate_hz: float) -> WelchConfig:
    """Hann, 50% overlap, segment = min(4096, n/8)."""
    seg = int(min(4096, max(8, n_samples // 8)))
    return WelchConfig(segment_length=seg, rate_hz=rate_hz)


def welch_psd(x: np.ndarray, cfg: WelchConfig):
    """One-sided averaged periodogram (density scaling).

    Returns (frequencies_hz, psd). Parseval: sum(psd)*df matches the signal
    variance within a few percent for a Hann window and enough segments.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 * cfg.segment_length:
        raise ParameterError("signal shorter than 2 segments")
    win = "hann" if cfg.window == WINDOW_HANN else "boxcar"
    noverlap = int(cfg.overlap * cfg.segment_length)
    f, p = sps.welch(x, fs=cfg.rate_hz, window=win, nperseg=cfg.segment_length,
                     noverlap=noverlap, detrend="constant", scaling="density")
    return f, p


def band_rms(psd: np.ndarray, f_hz: np.ndarray, f_lo: float, f_hi: float) -> float:
    """sqrt of the trapezoidal PSD integral over [f_lo, f_hi]."""
    f = np.asarray(f_hz, dtype=float)
    p = np.asarray(psd, dtype=float)
    if not 0 <= f_lo < f_hi <= f[-1] * (1 + 1e-12):
        raise ParameterError("band must satisfy 0 <= f_lo < f_hi <= Nyquist")
    grid = np.unique(np.concatenate([[f_lo, f_hi], f[(f > f_lo) & (f < f_hi)]]))
    vals = np.interp(grid, f, p)
    return float(np.sqrt(np.trapezoid(vals, grid)))


def empirical_rejection(residual_psd: np.ndarray, disturbance_psd: np.ndarray) -> np.ndarray:
    """sqrt(residual/disturbance) per bin - the measured |S|.

    Bins with zero disturbance are marked NaN (excluded)."""
    r = np.asarray(residual_psd, dtype=float)
    d = np.asarray(disturbance_psd, dtype=float)
    if r.shape != d.shape:
        raise ParameterError("PSDs must share a grid")
    out = np.full(r.shape, np.nan)
    ok = d > 0
    out[ok] = np.sqrt(r[ok] / d[ok])
    return out


@dataclass
class ControllerSummary:
    name: str
    rms: float
    band_rms: dict
    max_rejection: float
    saturation_count: int


@dataclass
class ComparisonReport:
    """Residual statistics per controller plus pairwise relative gains
    (RMS_ref - RMS_test) / RMS_ref against the first-named reference."""

    entries: list
    reference: str
    relative_gain: dict

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "entries": [vars(e) for e in self.entries],
            "relative_gain_percent": {
                k: (None if v is None else 100 * v)
                for k, v in self.relative_gain.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def relative_gain(rms_ref: float, rms_test: float):
    """(RMS_ref - RMS_test)/RMS_ref, or None when the reference is zero."""
    if rms_ref == 0:
        return None
    return (rms_ref - rms_test) / rms_ref


def compare(traces: dict, bands=None, welch: WelchConfig | None = None,
            signal_name: str = "e2") -> ComparisonReport:
    """Compare named :class:`~aoloop.cascade.SimTrace` runs.

    The first entry is the reference for relative gains. Residual PSDs (for
    band RMS and the empirical rejection maximum) are Welch estimates of the
    chosen signal against the disturbance of the same trace.
    """
    if len(traces) < 2:
        raise ParameterError("need at least two traces to compare")
    items = list(traces.items())
    n0 = items[0][1].n_samples
    if any(t.n_samples != n0 for _, t in items):
        raise ParameterError("traces must have equal lengths")

    entries = []
    for name, tr in items:
        cfg = welch or default_welch(tr.n_samples, tr.rate_hz)
        resid = np.asarray(getattr(tr, signal_name))[:, 0]
        f, p_res = welch_psd(resid, cfg)
        _, p_dist = welch_psd(tr.mode("phi", 0), cfg)
        rej = empirical_rejection(p_res, p_dist)
        max_rej = float(np.nanmax(rej)) if np.any(np.isfinite(rej)) else float("nan")
        if bands is None:
            top = float(f[-1])
            bands = [(0.0, top / 100), (top / 100, top / 10), (top / 10, top)]
        brms = {f"{lo:g}-{hi:g}Hz": band_rms(p_res, f, lo, hi) for lo, hi in bands}
        entries.append(ControllerSummary(
            name=name,
            rms=tr.rms(signal_name),
            band_rms=brms,
            max_rejection=max_rej,
            saturation_count=int(tr.sat1.sum() + tr.sat2.sum()),
        ))

    ref = entries[0]
    gains = {e.name: relative_gain(ref.rms, e.rms) for e in entries[1:]}
    return ComparisonReport(entries=entries, reference=ref.name, relative_gain=gains)


def write_psd_csv(path, f_hz: np.ndarray, psd: np.ndarray):
    """Columns: frequency_hz, power."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frequency_hz", "power"])
        for f, p in zip(f_hz, psd):
            wr.writerow([repr(float(f)), repr(float(p))])


def read_psd_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:2] != ["frequency_hz", "power"]:
            raise ParameterError(f"unexpected header {header!r}")
        rows = [(float(a), float(b)) for a, b in rd]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])
