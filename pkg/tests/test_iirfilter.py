import json

import numpy as np
import pytest

from aoloop import (FilterState, IirController, ParameterError, denominator_poles,
                    eval_freq, integrator, make_grid, passthrough, step)
from aoloop.iirfilter import from_json, run, to_json


class TestStep:
    def test_integrator_ramps_on_constant_input(self):
        ctrl = integrator(0.5)
        state = FilterState(ctrl.order)
        assert step(ctrl, state, 1.0) == pytest.approx(0.5)
        assert step(ctrl, state, 1.0) == pytest.approx(1.0)
        assert step(ctrl, state, 1.0) == pytest.approx(1.5)

    def test_zero_input_zero_output(self):
        ctrl = IirController(b=[0.3, -0.2, 0.1], a=[-0.5, 0.25])
        state = FilterState(ctrl.order)
        for _ in range(5):
            assert step(ctrl, state, 0.0) == 0.0

    def test_passthrough_identity(self):
        ctrl = passthrough()
        state = FilterState(ctrl.order)
        for x in (0.1, -3.0, 42.0):
            assert step(ctrl, state, x) == x

    def test_integrator_impulse_response_constant(self):
        ctrl = integrator(1.0)
        imp = np.zeros(32)
        imp[0] = 1.0
        out = run(ctrl, imp)
        np.testing.assert_allclose(out, 1.0)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        ctrl = IirController(b=rng.standard_normal(4), a=[-0.4, 0.1, 0.05])
        m1 = rng.standard_normal(64)
        m2 = rng.standard_normal(64)
        a, b = 1.7, -0.6
        lhs = run(ctrl, a * m1 + b * m2)
        rhs = a * run(ctrl, m1) + b * run(ctrl, m2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_nonfinite_input_propagates(self):
        ctrl = integrator(0.5)
        state = FilterState(ctrl.order)
        out = step(ctrl, state, np.nan)
        assert np.isnan(out)
        assert np.isnan(step(ctrl, state, 1.0))

    def test_wrong_state_size_rejected(self):
        with pytest.raises(ParameterError):
            step(integrator(0.5), FilterState(3), 1.0)

    def test_multichannel_matches_scalar(self):
        ctrl = IirController(b=[0.2, 0.1, -0.05], a=[-0.8, 0.3])
        rng = np.random.default_rng(11)
        m = rng.standard_normal((40, 3))
        state = FilterState(ctrl.order, channels=3)
        vec = np.array([step(ctrl, state, mk) for mk in m])
        for ch in range(3):
            np.testing.assert_allclose(vec[:, ch], run(ctrl, m[:, ch]), atol=1e-14)


class TestEvalFreq:
    def test_integrator_at_nyquist(self):
        grid = make_grid(1000.0, 64, "log", 0.1)
        resp = eval_freq(integrator(0.7), grid)
        assert abs(resp.values[-1] - 0.35) < 1e-12

    def test_passthrough_unity(self):
        grid = make_grid(1000.0, 32, "log", 0.1)
        np.testing.assert_allclose(eval_freq(passthrough(), grid).values, 1.0)

    def test_integrator_low_frequency_blowup(self):
        grid = make_grid(1000.0, 32, "log", 1e-6)
        resp = eval_freq(integrator(0.3), grid)
        assert resp.magnitude()[0] > 1e4


class TestTimeFrequencyConsistency:
    def test_sinusoid_steady_state_matches_eval(self):
        rng = np.random.default_rng(2024)
        grid = make_grid(1000.0, 48, "log", 1.0)
        for trial in range(20):
            order = rng.integers(1, 6)
            radius = rng.uniform(0.2, 0.9, order)
            angle = rng.uniform(0, np.pi, order)
            poles = []
            i = 0
            while i < order:
                if i + 1 < order and rng.random() < 0.6:
                    poles += [radius[i] * np.exp(1j * angle[i]),
                              radius[i] * np.exp(-1j * angle[i])]
                    i += 2
                else:
                    poles.append(radius[i] * np.sign(rng.standard_normal()))
                    i += 1
            a = np.real(np.poly(poles))[1:]
            b = rng.standard_normal(order + 1)
            ctrl = IirController(b=b, a=a)

            idx = rng.integers(0, len(grid))
            w = grid.omega[idx]
            ts = grid.sample_period
            n = 6000
            k = np.arange(n)
            m = np.cos(w * k * ts)
            u = run(ctrl, m)
            tail = slice(n - 2000, n)
            basis = np.column_stack([np.cos(w * k[tail] * ts),
                                     np.sin(w * k[tail] * ts)])
            coef, *_ = np.linalg.lstsq(basis, u[tail], rcond=None)
            measured = coef[0] - 1j * coef[1]
            expected = eval_freq(ctrl, grid).values[idx]
            assert abs(measured - expected) <= 1e-6 * max(1e-12, abs(expected))


class TestPoles:
    def test_integrator_pole_at_one(self):
        np.testing.assert_allclose(denominator_poles(integrator(0.4)), [1.0])

    def test_hand_solved_quadratic(self):
        ctrl = IirController(b=[1.0, 0.0, 0.0], a=[0.0, 0.25])
        roots = sorted(denominator_poles(ctrl), key=lambda z: z.imag)
        np.testing.assert_allclose(roots, [-0.5j, 0.5j], atol=1e-12)

    def test_order_zero_empty(self):
        assert denominator_poles(passthrough()).size == 0


class TestSerialization:
    def test_roundtrip_preserves_digits(self):
        ctrl = IirController(b=[0.123456789012345678, -1.9876543210987654e-7, 3.0],
                             a=[-0.99999999999999912, 0.5])
        back = from_json(to_json(ctrl, rate_hz=3000.0))
        np.testing.assert_allclose(back.b, ctrl.b, rtol=1e-15)
        np.testing.assert_allclose(back.a, ctrl.a, rtol=1e-15)

    def test_json_fields(self):
        obj = json.loads(to_json(integrator(0.5), rate_hz=1000.0))
        assert obj["order"] == 1
        assert obj["rate_hz"] == 1000.0
        assert obj["b"] == [0.5, 0.0]
        assert obj["a"] == [-1.0]

    def test_coefficient_validation(self):
        with pytest.raises(ParameterError):
            IirController(b=[1.0, 2.0], a=[0.1, 0.2])
        with pytest.raises(ParameterError):
            IirController(b=[np.inf, 0.0], a=[0.0])
