import numpy as np
import pytest

from aoloop import (CascadeConfig, ConfigError, IirController, LoopTiming,
                    NoiseParams, ParameterError, StageConfig,
                    apply_stroke_limit, integrator, passthrough,
                    reconstruct_open_loop, run_dcao, run_standalone,
                    single_stage_config)
from aoloop.cascade import SCHEME_DCAO, SCHEME_STANDALONE, write_trace_csv
from aoloop.freqmodel import WFS_AVERAGING, WFS_UNIT_DELAY


def _zero_ctrl():
    return IirController(b=[0.0], a=[])


def _stage(rate, ctrl, latency_frames=0.0, noise=None, stroke=np.inf, n_modes=1,
           wfs=WFS_UNIT_DELAY):
    return StageConfig(
        rate_hz=rate,
        timing=LoopTiming(1.0 / rate, latency_frames / rate, wfs),
        controller=ctrl, noise=noise, stroke_limit=stroke, n_modes=n_modes)


def _cascade(rate1, rate2, k1, k2, scheme=SCHEME_STANDALONE, projection=1.0,
             lat1=0.0, lat2=0.0, noise1=None, noise2=None, stroke=np.inf,
             n_modes=1):
    return CascadeConfig(
        stage1=_stage(rate1, k1, lat1, noise1, stroke, n_modes, WFS_AVERAGING),
        stage2=_stage(rate2, k2, lat2, noise2, stroke, n_modes),
        scheme=scheme, projection=projection)


class TestApplyStrokeLimit:
    def test_within_limit(self):
        assert apply_stroke_limit(0.5, 1.0) == (0.5, False)

    def test_clamped(self):
        u, flag = apply_stroke_limit(-3.0, 1.0)
        assert u == -1.0 and flag

    def test_boundary_not_flagged(self):
        u, flag = apply_stroke_limit(1.0, 1.0)
        assert u == 1.0 and not flag

    def test_vectorized(self):
        u, flag = apply_stroke_limit(np.array([0.2, -5.0, 2.0]), 1.0)
        np.testing.assert_array_equal(u, [0.2, -1.0, 1.0])
        np.testing.assert_array_equal(flag, [False, True, True])

    def test_bad_limit(self):
        with pytest.raises(ParameterError):
            apply_stroke_limit(1.0, 0.0)


class TestOpenLoop:
    def test_zero_controllers_pass_disturbance(self):
        cfg = _cascade(1000.0, 1000.0, _zero_ctrl(), _zero_ctrl())
        rng = np.random.default_rng(0)
        phi = rng.standard_normal(512)
        trace = run_standalone(cfg, phi, seed=1)
        np.testing.assert_allclose(trace.mode("e2"), phi)
        np.testing.assert_allclose(trace.mode("e1"), phi)


class TestStepRejection:
    def test_integrator_drives_constant_disturbance_to_zero(self):
        # stage-2 only, integrator 0.5, constant disturbance
        cfg = single_stage_config(1000.0, integrator(0.5))
        phi = np.ones(400)
        trace = run_standalone(cfg, phi, seed=0)
        e = trace.mode("e2")
        # with zero latency the residual is an exact geometric decay
        np.testing.assert_allclose(e[:40], 0.5 ** np.arange(40), atol=1e-12)
        assert abs(e[-1]) < 1e-20

    def test_two_frame_loop_hand_iteration(self):
        # unit-delay WFS + one-frame latency, integrator g on a step:
        # u[k] = u[k-1] + g*e[k-2], e[k] = 1 - u[k-1]
        g = 0.3
        cfg = single_stage_config(
            1000.0, integrator(g),
            timing=LoopTiming(1e-3, 1e-3, WFS_UNIT_DELAY))
        phi = np.ones(40)
        trace = run_standalone(cfg, phi, seed=0)
        e_hand = np.zeros(40)
        u_hand = np.zeros(40)
        for k in range(40):
            m = e_hand[k - 1] if k >= 1 else 0.0
            u_hand[k] = (u_hand[k - 1] if k >= 1 else 0.0) + g * m
            c = u_hand[k - 1] if k >= 1 else 0.0
            e_hand[k] = phi[k] - c
        np.testing.assert_allclose(trace.mode("e2"), e_hand, atol=1e-14)
        np.testing.assert_allclose(trace.mode("u2"), u_hand, atol=1e-14)


class TestMultirate:
    def test_noninteger_ratio_rejected(self):
        with pytest.raises(ConfigError):
            _cascade(700.0, 1000.0, _zero_ctrl(), _zero_ctrl())

    def test_stage1_frame_average_measurement(self):
        # R = 4; stage-1 passthrough controller scaled tiny so commands are
        # negligible; measurements must equal previous-frame means of e1.
        k1 = IirController(b=[1e-12], a=[])
        cfg = _cascade(250.0, 1000.0, k1, _zero_ctrl())
        rng = np.random.default_rng(5)
        phi = rng.standard_normal(64)
        trace = run_standalone(cfg, phi, seed=2)
        m1 = trace.mode("m1")
        e1 = trace.mode("e1")
        for j in range(1, 16):
            k = 4 * j
            assert m1[k] == pytest.approx(e1[k - 4:k].mean(), abs=1e-9)

    def test_fractional_latency_interpolates_commands(self):
        # latency = 0.5 frames: applied correction is the midpoint of the
        # two bracketing commands
        g = 0.4
        cfg = single_stage_config(
            1000.0, integrator(g),
            timing=LoopTiming(1e-3, 0.5e-3, WFS_UNIT_DELAY))
        phi = np.ones(30)
        trace = run_standalone(cfg, phi, seed=0)
        u = trace.mode("u2")
        e = trace.mode("e2")
        for k in range(1, 30):
            c = 0.5 * (u[k] + u[k - 1])
            assert e[k] == pytest.approx(1.0 - c, abs=1e-12)


class TestDcao:
    def test_projection_zero_matches_standalone(self):
        k1, k2 = integrator(0.4), integrator(0.3)
        noise = NoiseParams(n_q=1000.0, n_r=1.0, kappa=5.0)
        rng = np.random.default_rng(9)
        phi = rng.standard_normal((256, 2))
        cfg_sa = _cascade(500.0, 1000.0, k1, k2, SCHEME_STANDALONE,
                          noise1=noise, noise2=noise, n_modes=2)
        cfg_dc = _cascade(500.0, 1000.0, k1, k2, SCHEME_DCAO, projection=0.0,
                          noise1=noise, noise2=noise, n_modes=2)
        t_sa = run_standalone(cfg_sa, phi, seed=7)
        t_dc = run_dcao(cfg_dc, phi, seed=7)
        for name in ("e1", "e2", "u1", "u2", "m1", "m2"):
            np.testing.assert_array_equal(getattr(t_sa, name), getattr(t_dc, name))

    def test_stage2_sees_full_disturbance_when_idle(self):
        # exact projection, stage-2 controller zero: its measurement is the
        # full disturbance (one WFS delay later)
        cfg = _cascade(1000.0, 1000.0, integrator(0.5), _zero_ctrl(),
                       SCHEME_DCAO, lat1=1.0, lat2=1.0)
        rng = np.random.default_rng(3)
        phi = rng.standard_normal(256)
        trace = run_dcao(cfg, phi, seed=4)
        np.testing.assert_allclose(trace.mode("m2")[1:], phi[:-1], atol=1e-10)

    def test_open_loop_reconstruction(self):
        cfg = _cascade(1000.0, 1000.0, integrator(0.5), integrator(0.4),
                       SCHEME_DCAO, lat1=1.0, lat2=1.0)
        rng = np.random.default_rng(13)
        phi = rng.standard_normal(2048)
        trace = run_dcao(cfg, phi, seed=11)
        rec = reconstruct_open_loop(trace, cfg)
        err = rec[2:, 0] - phi[1:-1]
        assert np.sqrt(np.mean(err ** 2)) < 1e-10


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        noise = NoiseParams(n_q=500.0, n_r=1.0, kappa=10.0)
        cfg = _cascade(500.0, 1000.0, integrator(0.4), integrator(0.3),
                       noise1=noise, noise2=noise)
        phi = np.random.default_rng(0).standard_normal(512)
        a = run_standalone(cfg, phi, seed=42)
        b = run_standalone(cfg, phi, seed=42)
        for name in a.SIGNALS:
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_different_seed_differs(self):
        noise = NoiseParams(n_q=500.0, n_r=1.0, kappa=10.0)
        cfg = _cascade(1000.0, 1000.0, integrator(0.4), integrator(0.3),
                       noise1=noise, noise2=noise)
        phi = np.random.default_rng(0).standard_normal(512)
        a = run_standalone(cfg, phi, seed=42)
        b = run_standalone(cfg, phi, seed=43)
        assert not np.array_equal(a.m2, b.m2)


class TestSaturation:
    def test_flags_and_clamp(self):
        cfg = single_stage_config(1000.0, integrator(0.8), stroke_limit=0.5)
        phi = np.ones(100) * 3.0
        trace = run_standalone(cfg, phi, seed=0)
        assert trace.sat2.sum() > 0
        assert np.abs(trace.u2).max() <= 0.5

    def test_raising_limit_does_not_hurt_noise_free(self):
        rng = np.random.default_rng(21)
        phi = np.cumsum(0.1 * rng.standard_normal(2048))
        rms = []
        for limit in (0.2, 0.5, 2.0, 10.0):
            cfg = single_stage_config(1000.0, integrator(0.5), stroke_limit=limit)
            rms.append(run_standalone(cfg, phi, seed=0).rms("e2"))
        assert all(a >= b - 1e-12 for a, b in zip(rms, rms[1:]))


class TestTraceExport:
    def test_csv_layout(self, tmp_path):
        cfg = _cascade(500.0, 1000.0, integrator(0.4), integrator(0.3), n_modes=3)
        phi = np.random.default_rng(1).standard_normal((128, 3))
        trace = run_standalone(cfg, phi, seed=5)
        write_trace_csv(trace, tmp_path, max_modes=2)
        for name in trace.SIGNALS:
            path = tmp_path / f"{name}.csv"
            assert path.exists()
            header = path.read_text().splitlines()[0]
            assert header == "sample,time_s,mode_000,mode_001"
        data = np.loadtxt(tmp_path / "e2.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 2:], trace.e2[:, :2], rtol=1e-15)
