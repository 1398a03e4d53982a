"""IIR controller: coefficients, Direct-Form I execution, frequency evaluation.

The controller is K(z) = (b0 + b1 z^-1 + ... + bn z^-n) /
(1 + a1 z^-1 + ... + an z^-n); the denominator tail ``a`` is stored exactly
with that sign convention, so the recursion subtracts the ``a``-weighted
command history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SingularityError
from .freqmodel import FrequencyGrid, FrequencyResponse


@dataclass(frozen=True)
class IirController:
    """Numerator b (length order+1) and denominator tail a (length order)."""

    b: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float)) if np.size(self.a) else np.zeros(0)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)
        if b.size != a.size + 1:
            raise ParameterError("need len(b) == order+1 and len(a) == order")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise ParameterError("coefficients must be finite")

    @property
    def order(self) -> int:
        return self.a.size


class FilterState:
    """Direct-Form I history for one controller, optionally multi-channel.

    Holds the last ``order`` measurements and commands, zero-initialised.
    ``channels=None`` gives scalar operation; an integer gives that many
    independent modal channels stepped together.
    """

    def __init__(self, order: int, channels: int | None = None):
        self.order = order
        self.channels = channels
        shape = (order,) if channels is None else (order, channels)
        self.m_hist = np.zeros(shape)
        self.u_hist = np.zeros(shape)

    def reset(self):
        self.m_hist[:] = 0.0
        self.u_hist[:] = 0.0

    def override_last_command(self, u_applied):
        """Replace the newest command in the history (post-saturation)."""
        if self.order:
            self.u_hist[0] = u_applied


def step(ctrl: IirController, state: FilterState, m_k):
    """One Direct-Form I update: u[k] = sum b_i m[k-i] - sum a_i u[k-i].

    Shifts the state by one sample. Non-finite inputs propagate into the
    command and the history rather than raising.
    """
    if state.order != ctrl.order:
        raise ParameterError("state sized for a different controller order")
    m_k = np.asarray(m_k, dtype=float) if state.channels is not None else float(m_k)
    if ctrl.order == 0:
        return ctrl.b[0] * m_k
    u = ctrl.b[0] * m_k + ctrl.b[1:] @ state.m_hist - ctrl.a @ state.u_hist
    state.m_hist[1:] = state.m_hist[:-1]
    state.m_hist[0] = m_k
    state.u_hist[1:] = state.u_hist[:-1]
    state.u_hist[0] = u
    return u


def run(ctrl: IirController, measurements: np.ndarray) -> np.ndarray:
    """Filter a whole measurement sequence from zero state."""
    state = FilterState(ctrl.order)
    return np.array([step(ctrl, state, m) for m in np.asarray(measurements, dtype=float)])


def eval_freq(ctrl: IirController, grid: FrequencyGrid) -> FrequencyResponse:
    """K evaluated at z = exp(j*w*Ts) on the grid."""
    zinv = np.exp(-1j * grid.omega * grid.sample_period)
    num = np.polynomial.polynomial.polyval(zinv, ctrl.b)
    den = np.polynomial.polynomial.polyval(zinv, np.concatenate([[1.0], ctrl.a]))
    if np.any(den == 0):
        raise SingularityError("controller denominator vanishes on the grid")
    return FrequencyResponse(grid, num / den)


def integrator(gain: float) -> IirController:
    """K(z) = gain / (1 - z^-1): new command = gain*measurement + previous."""
    if not np.isfinite(gain):
        raise ParameterError("gain must be finite")
    return IirController(b=[gain, 0.0], a=[-1.0])


def passthrough() -> IirController:
    """Order-0 identity filter."""
    return IirController(b=[1.0], a=[])


def denominator_poles(ctrl: IirController) -> np.ndarray:
    """Roots of z^n + a1 z^(n-1) + ... + an (companion-matrix eigenvalues)."""
    if ctrl.order == 0:
        return np.zeros(0, dtype=complex)
    return np.roots(np.concatenate([[1.0], ctrl.a]))


def to_json(ctrl: IirController, rate_hz: float | None = None) -> str:
    obj = {"order": ctrl.order, "b": list(ctrl.b), "a": list(ctrl.a)}
    if rate_hz is not None:
        obj["rate_hz"] = rate_hz
    return json.dumps(obj, indent=2)


def from_json(text: str) -> IirController:
    obj = json.loads(text)
    ctrl = IirController(b=obj["b"], a=obj["a"])
    if ctrl.order != obj["order"]:
        raise ParameterError("inconsistent order in serialized controller")
    return ctrl
