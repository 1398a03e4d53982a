"""Iterated convexification of the mixed H2/Hinf design on a frequency grid.

The controller is searched as K = X/Y with Y monic. At each grid frequency
the performance, stroke and modulus-margin requirements are 2x2 Hermitian
matrix inequalities whose lower-right entry is the linearization
``P*Pc + Pc*P - Pc*Pc`` of |Y + G X|^2 around the previous iterate. Because
every block is 2x2 with scalar complex off-diagonal entries, positive
semidefiniteness reduces to ``a >= 0, c >= 0, a*c >= |b|^2`` - a rotated
second-order cone - so the whole step is one SOCP. Iterating with the
previous optimizer as linearization point drives a monotone objective.

For conditioning, each block is scaled by the congruence diag(1, 1/|Pc|),
which leaves the cone unchanged; the strictness epsilon applies to the
scaled lower-right entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .errors import (BandwidthUndefinedError, DegenerateLinearizationError,
                     ParameterError, SynthesisInfeasibleError)
from .freqmodel import (FrequencyGrid, FrequencyResponse, interp_response,
                        make_grid, sensitivity)
from .iirfilter import IirController, denominator_poles, eval_freq, integrator

STRUCTURE_IIR = "iir"
STRUCTURE_INTEGRATOR = "integrator"

PHI_FLOOR_REL = 1e-12
PSD_EPS_DEFAULT = 1e-9


@dataclass
class SynthesisProblem:
    """Everything a synthesis run needs besides the initial controller.

    ``disturbance_amplitude`` is the amplitude spectrum sqrt(PSD) on the
    grid; it is floored at 1e-12 of its maximum. ``structure`` selects the
    full IIR search or the fixed-denominator integrator (single optimized
    gain). ``bandwidth_hz`` overrides the weight normalization frequency.
    """

    plant: FrequencyResponse
    disturbance_amplitude: np.ndarray
    grid: FrequencyGrid
    order: int = 5
    alpha: float = 0.0
    modulus_margin: float = 0.5
    bandwidth_hz: float | None = None
    structure: str = STRUCTURE_IIR
    solver_eps: float = PSD_EPS_DEFAULT

    def __post_init__(self):
        phi = np.asarray(self.disturbance_amplitude, dtype=float)
        if phi.shape != self.grid.omega.shape:
            raise ParameterError("disturbance amplitude must match the grid")
        if np.any(phi < 0) or not np.all(np.isfinite(phi)):
            raise ParameterError("disturbance amplitude must be finite and >= 0")
        peak = phi.max()
        if peak <= 0:
            raise ParameterError("disturbance amplitude must not be all zero")
        self.disturbance_amplitude = np.maximum(phi, PHI_FLOOR_REL * peak)
        if not 0 < self.modulus_margin <= 1:
            raise ParameterError("modulus margin must lie in (0, 1]")
        if self.order < 1:
            raise ParameterError("order must be >= 1")
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if self.structure not in (STRUCTURE_IIR, STRUCTURE_INTEGRATOR):
            raise ParameterError(f"unknown structure {self.structure!r}")
        if self.structure == STRUCTURE_INTEGRATOR:
            self.order = 1


@dataclass
class ControllerFactorization:
    """K = X/Y with X of length order+1 and Y monic (leading 1)."""

    x: np.ndarray
    y: np.ndarray  # full monic coefficients [1, y1..yn]

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y[0] != 1.0:
            raise ParameterError("Y must be monic")
        if self.x.size != self.y.size:
            raise ParameterError("X and Y must have equal length (order+1)")

    @property
    def order(self) -> int:
        return self.y.size - 1

    def controller(self) -> IirController:
        return IirController(b=self.x, a=self.y[1:])

    @classmethod
    def from_controller(cls, ctrl: IirController, order: int) -> "ControllerFactorization":
        if ctrl.order > order:
            raise ParameterError("controller order exceeds factorization order")
        pad = order - ctrl.order
        x = np.concatenate([ctrl.b, np.zeros(pad)])
        y = np.concatenate([[1.0], ctrl.a, np.zeros(pad)])
        return cls(x=x, y=y)


@dataclass
class ValidationReport:
    stable: bool
    max_sensitivity: float
    margin_ok: bool
    modulus_margin: float
    winding_number: int
    expected_winding: int
    grid_points: int

    @property
    def passed(self) -> bool:
        return self.stable and self.margin_ok


@dataclass
class SynthesisResult:
    controller: IirController
    objective_trace: list
    gamma: float
    gamma_grid: np.ndarray
    margin_achieved: float
    iterations: int
    status: str
    refinement_trace: list = field(default_factory=list)
    validation: ValidationReport | None = None


def _polybasis(zinv: np.ndarray, order: int) -> np.ndarray:
    """Vandermonde-style basis [1, z^-1, ..., z^-n] per grid point."""
    return np.stack([zinv ** i for i in range(order + 1)], axis=1)


def _polyval(coeffs: np.ndarray, zinv: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(zinv, coeffs)


def trapezoid_weights(omega: np.ndarray) -> np.ndarray:
    """Quadrature weights for 2x the integral over the positive grid
    (conjugate symmetry supplies the negative frequencies)."""
    wt = np.zeros_like(omega)
    dw = np.diff(omega)
    wt[:-1] += dw / 2
    wt[1:] += dw / 2
    return 2.0 * wt


def hermitian2x2_psd(a: float, b: complex, c: float) -> bool:
    """PSD test for [[a, b], [conj(b), c]]: a >= 0, c >= 0, a*c >= |b|^2.

    This determinant form is exactly the rotated second-order cone the
    solver reduction uses.
    """
    return a >= 0 and c >= 0 and a * c >= abs(b) ** 2


def _soc_2x2(a, b, c):
    """cvxpy constraint equivalent of hermitian2x2_psd for affine a, b, c:
    ||(2 Re b, 2 Im b, a - c)||_2 <= a + c."""
    return cp.SOC(a + c, cp.vstack([2 * cp.real(b), 2 * cp.imag(b), a - c]), axis=0)


def build_weights(problem: SynthesisProblem, k_init: IirController):
    """Performance and stroke weights W1 = Phi/Phi(w_bw), W2 = alpha.

    The normalization frequency is ``problem.bandwidth_hz`` if given, else
    the lowest grid frequency where |S| of the initial controller first
    reaches 0 dB.
    """
    phi = problem.disturbance_amplitude
    f = problem.grid.hz
    if problem.bandwidth_hz is not None:
        f_bw = problem.bandwidth_hz
        if not f[0] <= f_bw <= f[-1]:
            raise ParameterError("bandwidth_hz outside the grid")
    else:
        s0 = sensitivity(problem.plant, eval_freq(k_init, problem.grid)).magnitude()
        crossings = np.nonzero(s0 >= 1.0)[0]
        if crossings.size == 0:
            raise BandwidthUndefinedError(
                "initial |S| never reaches 0 dB; pass bandwidth_hz explicitly")
        f_bw = f[crossings[0]]
    phi_bw = float(np.interp(f_bw, f, phi))
    w1 = FrequencyResponse(problem.grid, phi / phi_bw)
    w2 = FrequencyResponse(problem.grid, np.full(len(problem.grid), problem.alpha))
    return w1, w2


def convex_step(problem: SynthesisProblem, kc: ControllerFactorization,
                w1: FrequencyResponse, w2: FrequencyResponse,
                extra_margin: FrequencyResponse | None = None,
                margin_backoff: float = 0.0):
    """Solve one convexified step around ``kc``.

    Returns (factorization, objective, gamma, gamma_grid). ``extra_margin``
    optionally carries additional plant samples where only the margin and
    positivity blocks are enforced (used by dense-grid refinement).
    """
    n = problem.order
    grid = problem.grid
    zinv = np.exp(-1j * grid.omega * grid.sample_period)
    g = problem.plant.values
    pc = _polyval(kc.y, zinv) + g * _polyval(kc.x, zinv)
    if np.any(np.abs(pc) == 0):
        raise DegenerateLinearizationError("P_c vanishes at a grid point")
    scale = np.abs(pc)
    basis = _polybasis(zinv, n)
    m = len(grid)

    if problem.structure == STRUCTURE_INTEGRATOR:
        gain = cp.Variable(nonneg=True)
        x_resp = basis[:, 0] * gain
        y_resp = cp.Constant(1.0 - zinv)
    else:
        x = cp.Variable(n + 1)
        y = cp.Variable(n)
        x_resp = basis @ x
        y_resp = cp.Constant(np.ones(m, dtype=complex)) + basis[:, 1:] @ y

    gamma = cp.Variable(nonneg=True)
    gamma_grid = cp.Variable(m, nonneg=True)
    p_resp = y_resp + cp.multiply(g, x_resp)
    # scaled linearization of |P|^2: 2 Re(conj(Pc) P)/|Pc|^2 - 1
    low_right = 2 * cp.real(cp.multiply(np.conj(pc) / scale ** 2, p_resp)) - 1.0

    cons = [low_right >= problem.solver_eps]
    cons.append(_soc_2x2(gamma_grid, cp.multiply(w1.values.real / scale, y_resp), low_right))
    if problem.alpha > 0:
        cons.append(_soc_2x2(cp.promote(gamma, (m,)),
                             cp.multiply(w2.values.real * g / scale, x_resp), low_right))
    # margin_backoff > 0 (set by dense-grid refinement) tightens the margin
    # uniformly by a relative hair so between-grid-point |S| stays compliant
    mu = problem.modulus_margin * (1.0 + margin_backoff)
    cons.append(_soc_2x2(np.ones(m), cp.multiply(mu / scale, y_resp), low_right))

    if extra_margin is not None and len(extra_margin.grid):
        ze = np.exp(-1j * extra_margin.grid.omega * grid.sample_period)
        ge = extra_margin.values
        pce = _polyval(kc.y, ze) + ge * _polyval(kc.x, ze)
        if np.any(np.abs(pce) == 0):
            raise DegenerateLinearizationError("P_c vanishes at a refinement point")
        se = np.abs(pce)
        be = _polybasis(ze, n)
        if problem.structure == STRUCTURE_INTEGRATOR:
            xe = be[:, 0] * gain
            ye = cp.Constant(1.0 - ze)
        else:
            xe = be @ x
            ye = cp.Constant(np.ones(ze.size, dtype=complex)) + be[:, 1:] @ y
        pe = ye + cp.multiply(ge, xe)
        lre = 2 * cp.real(cp.multiply(np.conj(pce) / se ** 2, pe)) - 1.0
        cons.append(lre >= problem.solver_eps)
        # slightly tightened margin at refinement points so the true |S|
        # between points stays inside the dense-grid allowance
        mu_e = mu * (1.0 + margin_backoff)
        cons.append(_soc_2x2(np.ones(ze.size), cp.multiply(mu_e / se, ye), lre))

    wt = trapezoid_weights(grid.omega)
    prob = cp.Problem(cp.Minimize(gamma + wt @ gamma_grid), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError as exc:
        raise SynthesisInfeasibleError(f"solver failed: {exc}") from exc
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        raise SynthesisInfeasibleError(
            "convexified program infeasible (margin too aggressive or order too low)")
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SynthesisInfeasibleError(f"solver returned status {prob.status}")

    if problem.structure == STRUCTURE_INTEGRATOR:
        x_new = np.array([float(gain.value), 0.0])
        y_new = np.array([1.0, -1.0])
    else:
        x_new = np.asarray(x.value, dtype=float)
        y_new = np.concatenate([[1.0], np.asarray(y.value, dtype=float)])
    fact = ControllerFactorization(x=x_new, y=y_new)
    return fact, float(prob.value), float(gamma.value), np.asarray(gamma_grid.value)


def validate(ctrl: IirController, plant: FrequencyResponse, mu: float,
             density: int = 8) -> ValidationReport:
    """Dense-grid margin check plus a discrete Nyquist stability test.

    |S| is evaluated on a grid at least ``density`` times finer than the
    plant's and compared against 1/mu. Stability comes from the winding
    number of 1 + G K around 0 over the full frequency sweep (negative
    frequencies by conjugate symmetry), which must equal the number of
    controller poles strictly outside the unit circle; unit-circle poles at
    z = 1 are handled by an analytic indentation correction across the
    excluded-DC gap.
    """
    base = plant.grid
    dense = make_grid(base.rate_hz, density * len(base),
                      "log", base.hz[0])
    g_dense = interp_response(plant, dense).values
    k_dense = eval_freq(ctrl, dense).values
    f_char = 1.0 + g_dense * k_dense
    smax = float(np.max(1.0 / np.abs(f_char)))

    poles = denominator_poles(ctrl)
    tol = 1e-7
    n_outside = int(np.sum(np.abs(poles) > 1 + tol))
    n_dc = int(np.sum(np.abs(poles - 1.0) <= tol))
    # numerator roots at z = 1 cancel marginal poles (e.g. zero-gain integrator)
    if np.any(ctrl.b != 0):
        zeros = np.roots(ctrl.b)
        n_dc = max(n_dc - int(np.sum(np.abs(zeros - 1.0) <= tol)), 0)
    else:
        n_dc = 0

    # full sweep: conjugate branch then positive branch
    f_full = np.concatenate([np.conj(f_char[::-1]), f_char])
    ang = np.angle(f_full)
    dang = np.diff(ang)
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    # DC gap between the two branches: m uncancelled poles at z=1 contribute
    # -m*pi (outside indentation); re-wrap the measured step around that.
    gap_index = f_char.size - 1
    raw = dang[gap_index]
    target = -n_dc * np.pi
    dang[gap_index] = target + np.angle(np.exp(1j * (raw - target)))
    winding = int(np.round(dang.sum() / (2 * np.pi)))

    stable = winding == n_outside
    margin_ok = smax <= 1.0 / mu + 1e-6
    return ValidationReport(
        stable=stable,
        max_sensitivity=smax,
        margin_ok=margin_ok,
        modulus_margin=mu,
        winding_number=winding,
        expected_winding=n_outside,
        grid_points=len(dense),
    )


def synthesize(problem: SynthesisProblem, k0: IirController,
               max_iter: int = 20, rel_tol: float = 1e-4,
               refine_rounds: int = 4) -> SynthesisResult:
    """Iterate convex_step from a stabilizing initial controller.

    Stops when the relative objective decrease falls below ``rel_tol`` or
    after ``max_iter`` steps, then validates on a 10x denser grid. If |S|
    exceeds 1/mu between grid points, the worst offenders are added as
    margin-only constraints and a few more steps run (``refinement_trace``);
    the main ``objective_trace`` stays monotone by construction.
    """
    mu = problem.modulus_margin
    pre = validate(k0, problem.plant, mu)
    if not pre.stable:
        raise ParameterError("initial controller does not stabilize the plant")

    w1, w2 = build_weights(problem, k0)
    fact = ControllerFactorization.from_controller(k0, problem.order)

    trace: list[float] = []
    gamma = 0.0
    gamma_grid = np.zeros(len(problem.grid))
    status = "max_iter"
    iterations = 0
    try:
        for _ in range(max_iter):
            fact, obj, gamma, gamma_grid = convex_step(problem, fact, w1, w2)
            iterations += 1
            trace.append(obj)
            if len(trace) >= 2 and trace[-2] - trace[-1] < rel_tol * max(1.0, abs(trace[-2])):
                status = "converged"
                break
            if len(trace) == 1 and not np.isfinite(rel_tol):
                status = "converged"
                break
    except SynthesisInfeasibleError:
        if not trace:
            return SynthesisResult(
                controller=k0, objective_trace=[], gamma=np.nan,
                gamma_grid=gamma_grid, margin_achieved=np.nan,
                iterations=0, status="infeasible")
        status = "infeasible"

    ctrl = fact.controller()
    report = validate(ctrl, problem.plant, mu, density=10)
    refinement: list[float] = []
    if status != "infeasible" and not report.margin_ok:
        extra_f: list[float] = []
        dense = make_grid(problem.grid.rate_hz, 10 * len(problem.grid),
                          "log", problem.grid.hz[0])
        for round_i in range(refine_rounds):
            g_dense = interp_response(problem.plant, dense).values
            s_dense = 1.0 / np.abs(1.0 + g_dense * eval_freq(ctrl, dense).values)
            bad = np.nonzero(s_dense > 1.0 / mu)[0]
            if bad.size == 0:
                break
            worst = bad[np.argsort(s_dense[bad])[::-1][:48]]
            # include flanking points so the constraint brackets each peak
            worst = np.unique(np.clip(
                np.concatenate([worst - 1, worst, worst + 1]), 0, len(dense) - 1))
            extra_f.extend(dense.hz[worst])
            extra_grid = FrequencyGrid(
                2 * np.pi * np.unique(np.asarray(extra_f)), problem.grid.sample_period)
            extra = interp_response(problem.plant, extra_grid)
            overshoot = max(s_dense.max() * mu - 1.0, 1e-7)
            backoff = min(overshoot * 2 ** (round_i + 1), 1e-3)
            try:
                for _ in range(4):
                    fact, obj, gamma, gamma_grid = convex_step(
                        problem, fact, w1, w2, extra_margin=extra,
                        margin_backoff=backoff)
                    refinement.append(obj)
            except SynthesisInfeasibleError:
                status = "infeasible"
                break
            ctrl = fact.controller()
            report = validate(ctrl, problem.plant, mu, density=10)
            if report.margin_ok:
                break
        if not report.margin_ok and status != "infeasible":
            status = "infeasible"

    if status != "infeasible" and not report.stable:
        status = "infeasible"

    return SynthesisResult(
        controller=ctrl,
        objective_trace=trace,
        gamma=gamma,
        gamma_grid=gamma_grid,
        margin_achieved=report.max_sensitivity,
        iterations=iterations,
        status=status,
        refinement_trace=refinement,
        validation=report,
    )


def optimize_integrator_gain(problem: SynthesisProblem, n_gains: int = 100,
                             g_max: float = 1.5):
    """Scan integrator gains, keeping on-grid margin feasibility, and return
    (best_gain, best_objective) for the weighted residual objective.

    A coarse product-side reference; tests carry their own independent scan.
    """
    w1, _ = build_weights(problem, integrator(0.1))
    zinv = np.exp(-1j * problem.grid.omega * problem.grid.sample_period)
    g = problem.plant.values
    wt = trapezoid_weights(problem.grid.omega)
    best_gain, best_obj = None, np.inf
    for gain in np.linspace(g_max / n_gains, g_max, n_gains):
        k = gain / (1 - zinv)
        s = 1.0 / (1.0 + g * k)
        if np.max(np.abs(s)) > 1.0 / problem.modulus_margin:
            continue
        obj = float(wt @ (np.abs(w1.values.real * s) ** 2))
        if obj < best_obj:
            best_gain, best_obj = gain, obj
    if best_gain is None:
        raise SynthesisInfeasibleError("no margin-feasible integrator gain found")
    return best_gain, best_obj


def problem_to_json(problem: SynthesisProblem) -> str:
    return json.dumps({
        "rate_hz": problem.grid.rate_hz,
        "frequency_hz": list(problem.grid.hz),
        "plant_real": list(problem.plant.values.real),
        "plant_imag": list(problem.plant.values.imag),
        "disturbance_amplitude": list(problem.disturbance_amplitude),
        "order": problem.order,
        "alpha": problem.alpha,
        "modulus_margin": problem.modulus_margin,
        "bandwidth_hz": problem.bandwidth_hz,
        "structure": problem.structure,
    }, indent=2)


def problem_from_json(text: str) -> SynthesisProblem:
    obj = json.loads(text)
    grid = FrequencyGrid(2 * np.pi * np.asarray(obj["frequency_hz"]),
                         1.0 / obj["rate_hz"])
    plant = FrequencyResponse(
        grid, np.asarray(obj["plant_real"]) + 1j * np.asarray(obj["plant_imag"]))
    return SynthesisProblem(
        plant=plant,
        disturbance_amplitude=np.asarray(obj["disturbance_amplitude"]),
        grid=grid,
        order=obj["order"],
        alpha=obj["alpha"],
        modulus_margin=obj["modulus_margin"],
        bandwidth_hz=obj["bandwidth_hz"],
        structure=obj["structure"],
    )


def result_to_json(result: SynthesisResult) -> str:
    return json.dumps({
        "controller": {"order": result.controller.order,
                       "b": list(result.controller.b),
                       "a": list(result.controller.a)},
        "objective_trace": list(result.objective_trace),
        "gamma": result.gamma,
        "margin_achieved": result.margin_achieved,
        "iterations": result.iterations,
        "status": result.status,
        "refinement_trace": list(result.refinement_trace),
    }, indent=2)
