import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from stochmhd import noise as nz
from stochmhd import spectral as sp
from stochmhd.errors import HypothesisViolationError, InvalidParameterError, UnsupportedConfigurationError


def _model(cutoff=4, **kw):
    wiener = nz.WienerSpec.shell(cutoff, kw.pop("trace", 0.05), kw.pop("k2_max", 2))
    sigma = nz.SigmaFamily(kw.pop("sigma_kind", "additive"), kw.pop("alpha", 1.0), kw.pop("beta", 0.0))
    jump = nz.JumpSpec(**({"intensity": 5.0, "mark_amp": 0.1, "mark_modes": 16} | kw))
    return nz.NoiseModel(wiener, sigma, jump)


class TestWienerSpec:
    def test_shell_trace_and_support(self):
        w = nz.WienerSpec.shell(6, 0.3, 2)
        assert w.trace_q == pytest.approx(0.3)
        ms = sp.wave_indices(6)
        ksq = ms.ksq[ms.coord_mode]
        assert np.all(w.q[ksq > 2] == 0)
        # |k|^2 <= 2 holds 4 wavevectors, 2 fields, 2 real parts
        assert w.support == 16

    def test_support_independent_of_cutoff(self):
        a, b = nz.WienerSpec.shell(4, 0.1, 5), nz.WienerSpec.shell(12, 0.1, 5)
        assert a.support == b.support
        assert np.array_equal(a.q[: a.support], b.q[: b.support])

    def test_shell_beyond_cutoff(self):
        with pytest.raises(InvalidParameterError):
            nz.WienerSpec.shell(2, 0.1, 5)

    def test_rejects_negative(self):
        with pytest.raises(InvalidParameterError):
            nz.WienerSpec(np.array([0.1, -0.1]))

    def test_increment_variance(self):
        w = nz.WienerSpec.shell(3, 0.4, 2, decay=1.0)
        rng = np.random.default_rng(0)
        dt, n = 0.01, 20000
        draws = np.array([nz.sample_wiener_increment(w, dt, rng) for _ in range(n)])
        var = draws.var(axis=0)
        se = w.q * dt * math.sqrt(2.0 / n)
        assert np.all(np.abs(var - w.q * dt) <= 4 * se + 1e-300)
        assert np.all(np.abs(draws.mean(0)) <= 4 * np.sqrt(w.q * dt / n) + 1e-300)


class TestMarks:
    @pytest.mark.parametrize("p", [2, 3, 4, 6])
    def test_centred_moment_closed_form(self, p):
        j = nz.JumpSpec(intensity=1.0, mark_amp=0.3)
        want = integrate.quad(lambda z: abs(0.3 * z) ** p * stats.norm.pdf(z), -np.inf, np.inf)[0]
        assert j.mark_moment(p) == pytest.approx(want, rel=1e-9)

    def test_shifted_moment(self):
        j = nz.JumpSpec(intensity=1.0, mark_amp=0.2, mark_mean=0.1)
        assert j.mark_moment(2) == pytest.approx(0.2 ** 2 + 0.1 ** 2, rel=1e-9)

    def test_jump_counts_are_poisson(self):
        spec = nz.JumpSpec(intensity=3.0, mark_amp=0.5, mark_modes=4)
        rng = np.random.default_rng(1)
        counts = np.array([len(nz.sample_jumps(spec, 0.2, rng)) for _ in range(20000)])
        lam = 0.6
        assert abs(counts.mean() - lam) <= 4 * math.sqrt(lam / counts.size)
        assert abs(counts.var() - lam) <= 4 * math.sqrt((lam + 2 * lam ** 2) / counts.size)

    def test_mark_law(self):
        spec = nz.JumpSpec(intensity=1.0, mark_amp=0.5, mark_modes=4)
        idx, val = nz.draw_marks(spec, 40000, np.random.default_rng(2))
        assert set(np.unique(idx)) == {0, 1, 2, 3}
        assert abs(val.std() - 0.5) <= 4 * 0.5 / math.sqrt(2 * val.size)
        assert stats.kstest(val / 0.5, "norm").pvalue > 1e-4

    def test_no_jumps_without_intensity(self, rng):
        assert nz.sample_jumps(nz.JumpSpec(), 1.0, rng) == []


class TestConstants:
    def test_additive(self):
        c = _model().constants()
        assert c.K == pytest.approx(0.05 + 5 * 0.01)
        assert c.L == 0.0
        assert c.M1 == pytest.approx(0.05) and c.M3 == pytest.approx(0.05)

    def test_state_dependent(self):
        m = _model(sigma_kind="diagonal-damped", beta=0.5, g_kind="multiplicative-bounded",
                   gamma1=0.5)
        c = m.constants()
        qmax = m.wiener.q.max()
        assert c.K_sigma == pytest.approx(1.5 ** 2 * 0.05)
        assert c.L_sigma == pytest.approx(0.25 * qmax)
        assert c.K_g == pytest.approx(1.5 ** 2 * 5 * 0.01)
        assert c.L_g == pytest.approx(0.25 * 5 * 0.01)
        assert c.M1 is None and c.M3 is None

    def test_k1(self):
        c = _model().constants(4)
        assert c.K1 == pytest.approx(0.05 ** 2 + 5 * 3 * 0.1 ** 4)

    def test_lipschitz_violation(self):
        with pytest.raises(HypothesisViolationError, match="below 1"):
            _model(g_kind="multiplicative-bounded", gamma1=5.0)

    @given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(0, 2 ** 31))
    @settings(max_examples=40, deadline=None)
    def test_growth_and_lipschitz_hold(self, beta, gamma1, seed):
        try:
            m = _model(sigma_kind="diagonal-damped", beta=beta, g_kind="multiplicative-bounded",
                       gamma1=gamma1)
        except HypothesisViolationError:
            return
        c = m.constants()
        rng = np.random.default_rng(seed)
        x = sp.random_state(4, 1.0, rng, h_norm=rng.uniform(0, 3))
        y = sp.random_state(4, 1.0, rng, h_norm=rng.uniform(0, 3))
        hs = nz.sigma_hs_norm(m, 0.0, x)
        g2 = m.jump.phi(sp.norm_h(x)) ** 2 * m.jump.intensity * m.jump.mark_moment(2)
        assert hs + g2 <= c.K * (1 + sp.norm_h(x) ** 2) * (1 + 1e-12)
        q = m.wiener.q
        ds = m.sigma.entries(x.coords()) - m.sigma.entries(y.coords())
        dphi = m.jump.phi(sp.norm_h(x)) - m.jump.phi(sp.norm_h(y))
        diff = np.sum(q * ds ** 2) + dphi ** 2 * m.jump.intensity * m.jump.mark_moment(2)
        assert diff <= c.L * sp.norm_h(x - y) ** 2 * (1 + 1e-12) + 1e-15


class TestApplication:
    def test_apply_sigma_additive(self, rng):
        m = _model()
        x = sp.random_state(4, 1.0, rng)
        dw = nz.sample_wiener_increment(m.wiener, 0.1, rng)
        assert np.allclose(nz.apply_sigma(m, 0.0, x, dw).coords(), dw)

    def test_apply_g(self, rng):
        m = _model(g_kind="multiplicative-bounded", gamma1=0.5)
        x = sp.random_state(4, 1.0, rng, h_norm=2.0)
        out = nz.apply_g(m, x, nz.Mark(3, 0.2)).coords()
        assert out[3] == pytest.approx((1 + 0.5 * math.tanh(2.0)) * 0.2)
        assert np.count_nonzero(out) == 1

    def test_compensator(self, rng):
        x = sp.random_state(4, 1.0, rng)
        assert np.all(nz.compensator_drift(_model(), x).coords() == 0)
        with pytest.raises(UnsupportedConfigurationError):
            nz.compensator_drift(_model(mark_mean=0.1), x)
        m = _model(mark_mean=0.1, mc_compensation=True, mc_samples=200000)
        c = nz.compensator_drift(m, x, np.random.default_rng(3)).coords()
        # nu * E z = 5 * 0.1 / 16 on each of the first 16 coordinates
        assert np.allclose(c[:16], 5 * 0.1 / 16, rtol=0.05)
        assert np.all(c[16:] == 0)


class TestPathNoise:
    def test_state_roundtrip(self):
        m = _model()
        a = nz.PathNoise(m, 9, 2, 1.0)
        a.wiener(0.01)
        state = a.get_state()
        b = nz.PathNoise(m, 9, 2, 1.0)
        b.set_state(state)
        assert np.array_equal(a.wiener(0.01), b.wiener(0.01))

    def test_paths_are_independent_streams(self):
        m = _model()
        a, b = nz.PathNoise(m, 9, 0, 1.0), nz.PathNoise(m, 9, 1, 1.0)
        assert not np.array_equal(a.wiener(0.01), b.wiener(0.01))

    def test_jump_times_sorted_in_window(self):
        m = _model(intensity=50.0)
        p = nz.PathNoise(m, 4, 0, 2.0)
        assert np.all(np.diff(p.jump_times) >= 0)
        assert np.all((p.jump_times >= 0) & (p.jump_times <= 2.0))
        total = sum(len(p.marks_in_step(k, 0.1)[0]) for k in range(20))
        assert total == p.jump_times.size
