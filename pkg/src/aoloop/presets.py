"""Science-case presets and their mapping onto disturbance/noise surrogates.

The five cases pin observing parameters (seeing, coherence time, guide-star
magnitudes, loop rates, mode counts, wavelengths). The optical pipeline that
would turn these into spectra is out of scope, so documented constants
bridge them to the parametric surrogates:

* ``knee_hz = KNEE_T0_CONSTANT / t0_ms`` - faster atmospheres move the
  temporal knee up;
* plateau level scaled so the mode-0 disturbance RMS is
  ``DISTURBANCE_RMS_PER_ARCSEC * seeing``;
* photons per frame ``n_q = PHOTON_ZERO_POINT_RATE * 10**(-0.4 m) / rate``
  with the G magnitude feeding stage 1 and the J magnitude stage 2;
* per-mode disturbance scale ``(j+1)**-MODE_DECAY_EXPONENT``.

These are declared conventions, not results. All signal units are the
arbitrary common unit of the simulator (nominally nm of wavefront).

The tilt-vibration experiment reuses the bright-case timing with a
tilt-specific continuum (low knee, shallow slope) plus three resonance
peaks; the peak parameters are stand-ins for unavailable telemetry, chosen
so the peaks dominate the second stage's input spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disturbance import AtmosphericPsdParams, NoiseParams, VibrationPeak
from .errors import ConfigError

KNEE_T0_CONSTANT = 150.0          # Hz * ms
DISTURBANCE_RMS_PER_ARCSEC = 500.0  # signal units per arcsec of seeing
DEFAULT_SLOPE = -17.0 / 3.0
MODE_DECAY_EXPONENT = 1.0
PHOTON_ZERO_POINT_RATE = 1e10     # photons/s at magnitude 0
READ_NOISE_E = 0.5
KAPPA_NM = 30.0
STROKE_LIMIT = 4000.0
BRIGHT_LATENCY_FRAMES = 0.5
FAINT_LATENCY_FRAMES = 1.0

TILT_KNEE_HZ = 2.0
TILT_SLOPE = -8.0 / 3.0
# stand-in telemetry surrogate; heights chosen so the peaks dominate the
# second stage's input after first-stage rejection
TILT_VIBRATION_PEAKS = (
    VibrationPeak(center_hz=18.0, quality_factor=30.0, power_gain=200.0),
    VibrationPeak(center_hz=48.0, quality_factor=50.0, power_gain=300.0),
    VibrationPeak(center_hz=95.0, quality_factor=50.0, power_gain=1200.0),
)
TILT_EXPERIMENT_MU = 0.55
TILT_EXPERIMENT_STAGE1_GAIN = 0.5


@dataclass(frozen=True)
class SciencePreset:
    name: str
    seeing_arcsec: float
    t0_ms: float
    g_mag: float
    j_mag: float
    f1_hz: float
    f2_hz: float
    n_modes1: int
    n_modes2: int
    lambda1_um: float
    lambda2_um: float
    bright: bool

    @property
    def latency_frames(self) -> float:
        return BRIGHT_LATENCY_FRAMES if self.bright else FAINT_LATENCY_FRAMES


PRESETS = {
    p.name: p for p in (
        SciencePreset("bright1best", 0.4, 9.0, 5.5, 5.2, 1000.0, 3000.0,
                      1200, 400, 0.69, 1.04, bright=True),
        SciencePreset("bright1worst", 1.0, 2.0, 5.5, 5.2, 1000.0, 3000.0,
                      1200, 540, 0.69, 1.04, bright=True),
        SciencePreset("red1fast", 0.7, 2.0, 11.9, 8.5, 300.0, 3000.0,
                      400, 540, 0.69, 1.04, bright=False),
        SciencePreset("red3medium", 0.7, 5.5, 14.5, 10.1, 50.0, 1250.0,
                      400, 540, 0.69, 1.14, bright=False),
        SciencePreset("red5best", 0.4, 9.0, 16.8, 12.5, 10.0, 300.0,
                      400, 400, 0.69, 1.14, bright=False),
    )
}


def get_preset(name: str) -> SciencePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}")


def photons_per_frame(magnitude: float, rate_hz: float) -> float:
    return PHOTON_ZERO_POINT_RATE * 10 ** (-0.4 * magnitude) / rate_hz


def preset_noise(preset: SciencePreset, stage: int) -> NoiseParams:
    mag = preset.g_mag if stage == 1 else preset.j_mag
    rate = preset.f1_hz if stage == 1 else preset.f2_hz
    return NoiseParams(n_q=photons_per_frame(mag, rate),
                       n_r=READ_NOISE_E, kappa=KAPPA_NM)


def scaled_atmospheric_params(rms: float, knee_hz: float, slope: float,
                              rate_hz: float) -> AtmosphericPsdParams:
    """Set the plateau level so the band-integrated RMS equals ``rms``."""
    f = np.linspace(0, rate_hz / 2, 4097)
    shape = 1.0 / (1.0 + (np.maximum(f, 1e-12) / knee_hz) ** (-slope))
    shape[0] = 1.0
    integral = np.trapezoid(shape, f)
    return AtmosphericPsdParams(low_freq_level=rms ** 2 / integral,
                                knee_hz=knee_hz, slope=slope, rate_hz=rate_hz)


def preset_atmosphere(preset: SciencePreset) -> AtmosphericPsdParams:
    return scaled_atmospheric_params(
        rms=DISTURBANCE_RMS_PER_ARCSEC * preset.seeing_arcsec,
        knee_hz=KNEE_T0_CONSTANT / preset.t0_ms,
        slope=DEFAULT_SLOPE,
        rate_hz=preset.f2_hz,
    )


def tilt_vibration_atmosphere(preset: SciencePreset) -> AtmosphericPsdParams:
    """Tilt-mode continuum for the vibration experiment."""
    return scaled_atmospheric_params(
        rms=DISTURBANCE_RMS_PER_ARCSEC * preset.seeing_arcsec,
        knee_hz=TILT_KNEE_HZ,
        slope=TILT_SLOPE,
        rate_hz=preset.f2_hz,
    )


def mode_scales(n_modes: int, decay: float = MODE_DECAY_EXPONENT) -> np.ndarray:
    return (np.arange(n_modes) + 1.0) ** (-decay)
