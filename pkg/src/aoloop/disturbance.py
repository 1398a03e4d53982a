"""Disturbance PSDs, FIR generators for colored time series, measurement noise.

PSD convention used package-wide: one-sided power density against frequency
in Hz, so that signal variance = integral of the PSD from 0 to Nyquist.
The synthesis weight Phi is the amplitude spectrum sqrt(PSD).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ParameterError


@dataclass(frozen=True)
class AtmosphericPsdParams:
    """Parametric surrogate for the atmospheric temporal spectrum: a plateau
    up to ``knee_hz`` followed by a power-law rolloff with negative ``slope``."""

    low_freq_level: float
    knee_hz: float
    slope: float
    rate_hz: float

    def __post_init__(self):
        if self.low_freq_level <= 0:
            raise ParameterError("low_freq_level must be positive")
        if not 0 < self.knee_hz < self.rate_hz / 2:
            raise ParameterError("knee_hz must lie in (0, rate/2)")
        if self.slope >= 0:
            raise ParameterError("slope must be negative")


@dataclass(frozen=True)
class VibrationPeak:
    """Narrowband resonance: center frequency, quality factor, and peak power
    relative to the continuum at the center."""

    center_hz: float
    quality_factor: float
    power_gain: float

    def __post_init__(self):
        if self.center_hz <= 0:
            raise ParameterError("center_hz must be positive")
        if self.quality_factor <= 0:
            raise ParameterError("quality_factor must be positive")
        if self.power_gain <= 0:
            raise ParameterError("power_gain must be positive")


@dataclass(frozen=True)
class FirModel:
    """FIR taps whose white-noise response reproduces a target PSD."""

    taps: np.ndarray
    rate_hz: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        object.__setattr__(self, "taps", taps)
        if taps.size < 1 or not np.all(np.isfinite(taps)):
            raise ParameterError("need at least one finite tap")


@dataclass(frozen=True)
class NoiseParams:
    """Photon flux per frame, read noise RMS, and the modal propagation
    coefficient kappa (measurement units per unit 1/SNR)."""

    n_q: float
    n_r: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.n_q < 0 or self.n_r < 0 or self.kappa < 0:
            raise ParameterError("noise parameters must be nonnegative")


def atmospheric_psd(params: AtmosphericPsdParams, f_hz: np.ndarray) -> np.ndarray:
    """PSD(f) = level / (1 + (f/knee)^(-slope)); monotone non-increasing."""
    f = np.asarray(f_hz, dtype=float)
    return params.low_freq_level / (1.0 + (f / params.knee_hz) ** (-params.slope))


def resonance_power_profile(f_hz: np.ndarray, center_hz: float, q: float) -> np.ndarray:
    """Unit-peak second-order resonance |H_res|^2 with bandwidth center/q."""
    u = np.asarray(f_hz, dtype=float) / center_hz
    return (u / q) ** 2 / ((1 - u ** 2) ** 2 + (u / q) ** 2)


def add_vibration_peaks(psd: np.ndarray, peaks, f_hz: np.ndarray) -> np.ndarray:
    """Add per-peak resonance power gain*continuum(center)*|H_res|^2.

    Never decreases power at any frequency.
    """
    f = np.asarray(f_hz, dtype=float)
    out = np.asarray(psd, dtype=float).copy()
    for pk in peaks:
        if not 0 < pk.center_hz < f[-1] * (1 + 1e-12):
            raise ParameterError("peak center outside (0, Nyquist)")
        level = np.interp(pk.center_hz, f, psd)
        out += pk.power_gain * level * resonance_power_profile(f, pk.center_hz, pk.quality_factor)
    return out


def fit_fir_to_psd(target_psd: np.ndarray, f_hz: np.ndarray, length: int,
                   rate_hz: float) -> FirModel:
    """Frequency-sampling FIR design against a one-sided target PSD.

    Takes the inverse DFT of the desired magnitude sqrt(target * rate/2)
    (the white-noise drive has one-sided PSD 2/rate), rotates it to linear
    phase, truncates to ``length`` taps and applies a Hann window. The target
    must be sampled uniformly on [0, Nyquist].
    """
    f = np.asarray(f_hz, dtype=float)
    t = np.asarray(target_psd, dtype=float)
    if f.shape != t.shape or f.ndim != 1 or f.size < 2:
        raise ParameterError("target and frequencies must be equal-length 1-D")
    df = np.diff(f)
    if not (np.allclose(df, df[0], rtol=1e-9, atol=1e-12) and np.isclose(f[0], 0.0)
            and np.isclose(f[-1], rate_hz / 2, rtol=1e-9)):
        raise ParameterError("target grid must be uniform over [0, Nyquist]")
    if np.any(t < 0):
        raise ParameterError("target PSD must be nonnegative")
    n_half = f.size - 1
    if not 1 <= length <= 2 * n_half:
        raise ParameterError("length must lie in [1, 2*(grid size - 1)]")
    mag = np.sqrt(t * rate_hz / 2)
    full = np.concatenate([mag, mag[-2:0:-1]])
    h = np.fft.ifft(full).real
    h = np.roll(h, full.size // 2)
    center = full.size // 2
    start = center - length // 2
    taps = h[start:start + length] * np.hanning(length)
    return FirModel(taps=taps, rate_hz=rate_hz)


def generate_timeseries(model: FirModel, n: int, seed) -> np.ndarray:
    """Unit-variance white Gaussian noise convolved with the taps.

    The first len(taps)-1 warm-up samples are discarded; output is
    deterministic for a given seed.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n + model.taps.size - 1)
    return sps.fftconvolve(white, model.taps, mode="valid")


def fir_psd(model: FirModel, f_hz: np.ndarray) -> np.ndarray:
    """One-sided PSD of the generated process at the given frequencies."""
    w = 2 * np.pi * np.asarray(f_hz, dtype=float) / model.rate_hz
    zinv = np.exp(-1j * w)
    resp = np.polynomial.polynomial.polyval(zinv, model.taps)
    return np.abs(resp) ** 2 * 2 / model.rate_hz


def measurement_noise_sigma(p: NoiseParams) -> float:
    """sigma = kappa / SNR with SNR = n_q / sqrt(n_q + 4*n_r^2)."""
    if p.n_q <= 0:
        raise ParameterError("n_q must be positive for a finite noise level")
    snr = p.n_q / np.sqrt(p.n_q + 4 * p.n_r ** 2)
    return p.kappa / snr


def sample_photon_noise(n_q: float, seed, size=None):
    """Poisson photon count(s) with mean n_q, deterministic per seed."""
    if n_q < 0:
        raise ParameterError("n_q must be nonnegative")
    rng = np.random.default_rng(seed)
    return rng.poisson(n_q, size=size)
