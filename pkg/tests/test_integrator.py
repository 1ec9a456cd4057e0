import json
import math

import numpy as np
import pytest

from stochmhd import integrator as ig
from stochmhd import noise as nz
from stochmhd import spectral as sp
from stochmhd.errors import BlowUpError, InvalidParameterError, UnsupportedConfigurationError
from stochmhd.operators import make_context


def _ctx(n=6, re=1.0, rm=1.0, s=1.0):
    return make_context(sp.make_basis(n, re, rm, s))


def _noise(n=6, trace=0.05, intensity=5.0, **kw):
    return nz.NoiseModel(nz.WienerSpec.shell(n, trace, 2),
                         nz.SigmaFamily(kw.pop("sigma_kind", "additive"), 1.0, kw.pop("beta", 0.0)),
                         nz.JumpSpec(intensity=intensity, mark_amp=0.1, mark_modes=16, **kw))


def _quiet(n=6):
    return nz.NoiseModel(nz.WienerSpec.zero(n))


class TestConfig:
    def test_record_times(self):
        cfg = ig.IntegratorConfig(dt=0.1, t_end=1.0, record_every=3)
        assert cfg.n_steps == 10
        assert list(cfg.record_steps()) == [0, 3, 6, 9, 10]
        assert cfg.record_times()[-1] == 1.0

    @pytest.mark.parametrize("kw", [dict(dt=0.3, t_end=1.0), dict(dt=0.0, t_end=1.0),
                                    dict(dt=0.1, t_end=1.0, scheme="rk4"),
                                    dict(dt=0.1, t_end=1.0, record_every=0)])
    def test_rejects(self, kw):
        with pytest.raises(InvalidParameterError):
            ig.IntegratorConfig(**kw)


class TestDeterministic:
    def test_linear_modes_decay_exactly(self, rng):
        ctx = _ctx(re=2.0, rm=0.5, s=1.5)
        x0 = sp.random_state(6, 1.5, rng)
        cfg = ig.IntegratorConfig(dt=0.05, t_end=1.0, nonlinear=False)
        rec = ig.simulate_path(ctx, _quiet(), cfg, x0, seed=1)
        n = cfg.n_steps
        want_u = x0.u.coeffs / (1 + 0.05 * ctx.basis.eigs_u) ** n
        want_b = x0.b.coeffs / (1 + 0.05 * ctx.basis.eigs_b) ** n
        assert np.allclose(rec.final_u, want_u, rtol=1e-12)
        assert np.allclose(rec.final_b, want_b, rtol=1e-12)

    def test_energy_decreases_without_noise(self, rng):
        ctx = _ctx(8)
        x0 = sp.random_state(8, 1.0, rng, slope=1.0)
        rec = ig.simulate_path(ctx, _quiet(8), ig.IntegratorConfig(dt=0.01, t_end=0.5), x0, 1)
        assert np.all(np.diff(rec.h2) <= 1e-15)
        assert np.all(rec.sup_h2 == rec.h2[0])

    def test_step_function_matches_engine_without_noise(self, rng):
        ctx = _ctx()
        x0 = sp.random_state(6, 1.0, rng)
        x1 = ig.step(ctx, _quiet(), x0, 0.0, 0.01, rng)
        rec = ig.simulate_path(ctx, _quiet(), ig.IntegratorConfig(dt=0.01, t_end=0.01), x0, 3)
        assert np.allclose(x1.u.coeffs, rec.final_u, atol=1e-15)


class TestStochastic:
    def test_second_moment_matches_linear_recursion(self):
        # without B every coordinate is a scalar OU-with-jumps recursion
        n, dt, t_end, paths = 4, 0.05, 0.5, 4000
        ctx = _ctx(n)
        model = _noise(n, intensity=20.0)
        x0 = sp.random_state(n, 1.0, np.random.default_rng(5), h_norm=0.5)
        cfg = ig.IntegratorConfig(dt=dt, t_end=t_end, nonlinear=False, record_every=10)
        recs = ig.simulate_ensemble(ctx, model, cfg, x0, seed=11, n_paths=paths, threads=2)
        h2 = np.array([r.h2[-1] for r in recs])
        r = 1 / (1 + dt * ctx.basis.coord_eigs())
        k = cfg.n_steps
        v = model.wiener.q.copy()
        v[:16] += model.jump.intensity * model.jump.mark_moment(2) / 16
        want = np.sum(x0.coords() ** 2 * r ** (2 * k) + v * dt * r ** 2 * (1 - r ** (2 * k)) / (1 - r ** 2))
        assert abs(h2.mean() - want) <= 4 * h2.std(ddof=1) / math.sqrt(paths)

    def test_shared_noise_across_cutoffs_linear(self, rng):
        cfg = ig.IntegratorConfig(dt=0.02, t_end=0.4, nonlinear=False)
        x0 = sp.random_state(3, 1.0, rng)
        recs = {}
        for n in (4, 8):
            big = sp.MhdState.zeros(n, 1.0)
            idx = np.arange(sp.mode_count(3))
            u, b = big.u.coeffs.copy(), big.b.coeffs.copy()
            u[idx], b[idx] = x0.u.coeffs, x0.b.coeffs
            recs[n] = ig.simulate_path(_ctx(n), _noise(n), cfg,
                                       sp.MhdState.from_arrays(u, b, 1.0), seed=8)
        m = sp.mode_count(4)
        assert np.allclose(recs[4].final_u, recs[8].final_u[:m], atol=1e-15)
        assert recs[4].jump_count == recs[8].jump_count

    def test_martingale_mean_zero(self):
        ctx = _ctx(4)
        model = _noise(4)
        x0 = sp.random_state(4, 1.0, np.random.default_rng(2))
        cfg = ig.IntegratorConfig(dt=0.05, t_end=1.0, track_martingale=True, record_every=20)
        recs = ig.simulate_ensemble(ctx, model, cfg, x0, seed=3, n_paths=2000, threads=2)
        m = np.array([r.martingale[-1] for r in recs])
        assert abs(m.mean()) <= 4 * m.std(ddof=1) / math.sqrt(m.size)
        assert all(np.all(r.martingale_sup >= np.abs(r.martingale) - 1e-15) for r in recs)


class TestReproducibility:
    def test_threads_do_not_change_results(self, rng):
        ctx = _ctx()
        cfg = ig.IntegratorConfig(dt=0.02, t_end=0.2, chunk_size=3)
        x0 = sp.random_state(6, 1.0, rng)
        a = ig.simulate_ensemble(ctx, _noise(), cfg, x0, 5, 7, threads=1)
        b = ig.simulate_ensemble(ctx, _noise(), cfg, x0, 5, 7, threads=3)
        assert all(p.same_as(q) for p, q in zip(a, b))

    def test_single_path_equals_ensemble_member(self, rng):
        ctx = _ctx()
        cfg = ig.IntegratorConfig(dt=0.02, t_end=0.2)
        x0 = sp.random_state(6, 1.0, rng)
        ens = ig.simulate_ensemble(ctx, _noise(), cfg, x0, 5, 4)
        one = ig.simulate_path(ctx, _noise(), cfg, x0, 5, path_index=2)
        assert one.same_as(ens[2])

    def test_checkpoint_resume_is_bit_identical(self, rng, tmp_path):
        ctx = _ctx()
        model = _noise(sigma_kind="diagonal-damped", beta=0.3)
        cfg = ig.IntegratorConfig(dt=0.02, t_end=0.4, record_every=2, track_martingale=True)
        x0 = sp.random_state(6, 1.0, rng)
        saved = []
        full = ig.simulate_path(ctx, model, cfg, x0, 21, 1, checkpoint_every=7,
                                on_checkpoint=saved.append)
        path = tmp_path / "ck.json"
        ig.save_checkpoint(saved[1], path)
        json.loads(path.read_text())
        ck = ig.load_checkpoint(path)
        resumed = ig.simulate_path(ctx, model, cfg, x0, 21, 1, resume=ck)
        # the resumed record starts at the checkpoint; the overlap must agree bit for bit
        k = resumed.times.size
        assert resumed.times[0] == pytest.approx(ck.time)
        for name in ("times", "h2", "energy", "sup_h2", "int_energy", "coeffs", "martingale"):
            assert getattr(resumed, name).tobytes() == getattr(full, name)[-k:].tobytes(), name
        assert resumed.final_u.tobytes() == full.final_u.tobytes()
        assert resumed.jump_count == full.jump_count

    def test_checkpoint_from_other_stream_rejected(self, rng):
        ctx = _ctx()
        cfg = ig.IntegratorConfig(dt=0.02, t_end=0.2)
        x0 = sp.random_state(6, 1.0, rng)
        saved = []
        ig.simulate_path(ctx, _noise(), cfg, x0, 21, 0, checkpoint_every=3, on_checkpoint=saved.append)
        with pytest.raises(InvalidParameterError):
            ig.simulate_path(ctx, _noise(), cfg, x0, 22, 0, resume=saved[0])


class TestCoupled:
    def test_identical_starts_stay_together(self, rng):
        ctx = _ctx()
        x0 = sp.random_state(6, 1.0, rng)
        pair = ig.simulate_coupled(ctx, _noise(), ig.IntegratorConfig(dt=0.02, t_end=0.2), x0, x0, 3)
        assert np.all(pair.w_h2 == 0)

    def test_lanes_match_separate_runs(self, rng):
        ctx = _ctx()
        cfg = ig.IntegratorConfig(dt=0.02, t_end=0.2, record_states=True)
        x0 = sp.random_state(6, 1.0, rng)
        y0 = sp.random_state(6, 1.0, rng)
        pair = ig.simulate_coupled(ctx, _noise(), cfg, x0, y0, 3, path_index=1)
        assert pair.x.same_as(ig.simulate_path(ctx, _noise(), cfg, x0, 3, 1))
        assert pair.y.same_as(ig.simulate_path(ctx, _noise(), cfg, y0, 3, 1))

    def test_stability_mode_requires_additive(self, rng):
        x0 = sp.random_state(6, 1.0, rng)
        with pytest.raises(UnsupportedConfigurationError):
            ig.simulate_coupled(_ctx(), _noise(sigma_kind="diagonal-damped", beta=0.3),
                                ig.IntegratorConfig(dt=0.02, t_end=0.2), x0, x0, 3, stability=True)


class TestBlowUp:
    def test_ensemble_marks_and_single_path_raises(self, rng):
        ctx = _ctx(8)
        x0 = sp.random_state(8, 1.0, rng, slope=0.0) * 1e30
        cfg = ig.IntegratorConfig(dt=0.5, t_end=5.0)
        recs = ig.simulate_ensemble(ctx, _quiet(8), cfg, x0, 1, 2)
        assert all(r.aborted_at is not None for r in recs)
        with pytest.raises(BlowUpError):
            ig.simulate_path(ctx, _quiet(8), cfg, x0, 1)


class TestCsv:
    def test_format(self, rng, tmp_path):
        ctx = _ctx(4)
        rec = ig.simulate_path(ctx, _noise(4), ig.IntegratorConfig(dt=0.1, t_end=0.2),
                               sp.random_state(4, 1.0, rng), 1)
        out = tmp_path / "p.csv"
        ig.write_csv(out, ig.PATH_CSV_HEADER, ig.path_rows(rec))
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(ig.PATH_CSV_HEADER)
        cells = lines[1].split(",")
        assert cells[0] == "0"
        assert all("e" in c and len(c.split("e")[0].replace("-", "").replace(".", "")) >= 12
                   for c in cells[1:])
