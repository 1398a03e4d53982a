"""Frequency grids, loop-element responses, and closed-loop transfer functions.

All loop elements (WFS, RTC latency, DM, controller) are represented by
complex samples on a shared frequency grid. The plant lumps WFS delay,
computing latency and a unity DM; the controller response comes from
:mod:`aoloop.iirfilter`. Conventions:

* grids store angular frequency in rad/s, strictly increasing, DC excluded,
  Nyquist included;
* pure delays are represented exactly as ``exp(-j*w*tau)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SingularityError

WFS_UNIT_DELAY = "unit-delay"
WFS_AVERAGING = "averaging"


@dataclass(frozen=True)
class FrequencyGrid:
    """Angular frequencies (rad/s) on (0, pi/Ts] plus the loop period Ts."""

    omega: np.ndarray
    sample_period: float

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        if self.sample_period <= 0:
            raise ParameterError("sample_period must be positive")
        if w.ndim != 1 or w.size < 2:
            raise ParameterError("grid needs at least 2 frequencies")
        if np.any(np.diff(w) <= 0):
            raise ParameterError("grid frequencies must be strictly increasing")
        nyq = np.pi / self.sample_period
        if w[0] <= 0 or w[-1] > nyq * (1 + 1e-12):
            raise ParameterError("frequencies must lie in (0, pi/Ts]")

    @property
    def hz(self) -> np.ndarray:
        return self.omega / (2 * np.pi)

    @property
    def rate_hz(self) -> float:
        return 1.0 / self.sample_period

    @property
    def nyquist_hz(self) -> float:
        return 0.5 / self.sample_period

    def __len__(self) -> int:
        return self.omega.size


@dataclass
class FrequencyResponse:
    """Complex samples of a transfer function on a :class:`FrequencyGrid`."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.omega.shape:
            raise ParameterError("one value per grid frequency required")
        if not np.all(np.isfinite(v)):
            raise ParameterError("response values must be finite")
        self.values = v

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def phase(self) -> np.ndarray:
        return np.unwrap(np.angle(self.values))


@dataclass(frozen=True)
class LoopTiming:
    """Sampling period, computing latency and the WFS temporal model."""

    sample_period: float
    latency: float = 0.0
    wfs_model: str = WFS_UNIT_DELAY

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ParameterError("sample_period must be positive")
        if self.latency < 0:
            raise ParameterError("latency must be nonnegative")
        if self.wfs_model not in (WFS_UNIT_DELAY, WFS_AVERAGING):
            raise ParameterError(f"unknown wfs_model {self.wfs_model!r}")

    @property
    def rate_hz(self) -> float:
        return 1.0 / self.sample_period


def make_grid(rate_hz: float, count: int, spacing: str = "log",
              f_min_hz: float | None = None) -> FrequencyGrid:
    """Build a grid from ``f_min_hz`` up to and including Nyquist.

    ``spacing`` is "linear" or "log". The Nyquist point is always the last
    sample, pinned exactly.
    """
    if rate_hz <= 0:
        raise ParameterError("rate must be positive")
    nyq = rate_hz / 2
    if f_min_hz is None:
        f_min_hz = rate_hz / 1e4
    if count < 2:
        raise ParameterError("count must be >= 2")
    if not 0 < f_min_hz < nyq:
        raise ParameterError("f_min must lie in (0, rate/2)")
    if spacing == "linear":
        f = np.linspace(f_min_hz, nyq, count)
    elif spacing == "log":
        f = np.geomspace(f_min_hz, nyq, count)
    else:
        raise ParameterError(f"unknown spacing {spacing!r}")
    f[-1] = nyq
    return FrequencyGrid(2 * np.pi * f, 1.0 / rate_hz)


def default_grid(rate_hz: float, count: int = 512) -> FrequencyGrid:
    """Log grid from rate/1e4 to Nyquist; resolves both the disturbance
    power law and features near Nyquist."""
    return make_grid(rate_hz, count, "log", rate_hz / 1e4)


def averaging_wfs_response(omega: np.ndarray, integration_time: float) -> np.ndarray:
    """Frame-averaging WFS response (1 - exp(-j*w*T)) / (j*w*T)."""
    wT = np.asarray(omega, dtype=float) * integration_time
    out = np.ones(wT.shape, dtype=complex)
    nz = wT != 0
    out[nz] = (1 - np.exp(-1j * wT[nz])) / (1j * wT[nz])
    return out


def plant_response(timing: LoopTiming, grid: FrequencyGrid) -> FrequencyResponse:
    """Open-loop plant G = WFS * latency * DM on the grid (DM = 1).

    Unit-delay mode: G = exp(-j*w*Ts) * exp(-j*w*tau).
    Averaging mode:  G = (1 - exp(-j*w*Ts))/(j*w*Ts) * exp(-j*w*tau).
    """
    if not np.isclose(timing.sample_period, grid.sample_period, rtol=1e-9):
        raise ParameterError("grid sample_period inconsistent with timing")
    w = grid.omega
    lat = np.exp(-1j * w * timing.latency)
    if timing.wfs_model == WFS_UNIT_DELAY:
        wfs = np.exp(-1j * w * timing.sample_period)
    else:
        wfs = averaging_wfs_response(w, timing.sample_period)
    return FrequencyResponse(grid, wfs * lat)


def _check_same_grid(a: FrequencyResponse, b: FrequencyResponse):
    if a.grid is b.grid:
        return
    if (a.grid.sample_period != b.grid.sample_period
            or a.grid.omega.shape != b.grid.omega.shape
            or not np.array_equal(a.grid.omega, b.grid.omega)):
        raise ParameterError("responses must share one grid")


def sensitivity(plant: FrequencyResponse, controller: FrequencyResponse) -> FrequencyResponse:
    """S = 1 / (1 + G*K), the rejection profile."""
    _check_same_grid(plant, controller)
    denom = 1 + plant.values * controller.values
    if np.any(denom == 0):
        raise SingularityError("1 + G*K vanishes on the grid")
    return FrequencyResponse(plant.grid, 1.0 / denom)


def comp_sensitivity(plant: FrequencyResponse, controller: FrequencyResponse) -> FrequencyResponse:
    """T = G*K / (1 + G*K); satisfies S + T = 1 pointwise."""
    _check_same_grid(plant, controller)
    gk = plant.values * controller.values
    denom = 1 + gk
    if np.any(denom == 0):
        raise SingularityError("1 + G*K vanishes on the grid")
    return FrequencyResponse(plant.grid, gk / denom)


def interp_response(resp: FrequencyResponse, grid: FrequencyGrid) -> FrequencyResponse:
    """Resample a response onto a new grid of the same rate.

    Magnitude and unwrapped phase are interpolated linearly in omega, which
    is exact for pure delays and accurate for smooth responses.
    """
    if resp.grid.sample_period != grid.sample_period:
        raise ParameterError("grids must share the sample period")
    mag = np.interp(grid.omega, resp.grid.omega, resp.magnitude())
    ph = np.interp(grid.omega, resp.grid.omega, resp.phase())
    return FrequencyResponse(grid, mag * np.exp(1j * ph))


def write_response_csv(path, resp: FrequencyResponse):
    """Columns: frequency_hz, real, imag."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frequency_hz", "real", "imag"])
        for f, v in zip(resp.grid.hz, resp.values):
            wr.writerow([repr(float(f)), repr(float(v.real)), repr(float(v.imag))])


def read_response_csv(path, sample_period: float) -> FrequencyResponse:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:3] != ["frequency_hz", "real", "imag"]:
            raise ParameterError(f"unexpected header {header!r}")
        rows = [(float(a), float(b), float(c)) for a, b, c in rd]
    f = np.array([r[0] for r in rows])
    v = np.array([complex(r[1], r[2]) for r in rows])
    return FrequencyResponse(FrequencyGrid(2 * np.pi * f, sample_period), v)
