import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmhd import spectral as sp
from stochmhd.errors import AliasingError, InvalidParameterError

from conftest import direct_field


class TestWaveIndices:
    @pytest.mark.parametrize("n", [1, 2, 5, 16])
    def test_count_matches_box(self, n):
        ms = sp.wave_indices(n)
        assert ms.k1.size == sp.mode_count(n) == 2 * n * (n + 1)
        # exactly one of k, -k is stored and k = 0 is excluded
        pairs = set(zip(ms.k1.tolist(), ms.k2.tolist()))
        assert (0, 0) not in pairs
        assert all((-a, -b) not in pairs for a, b in pairs)

    def test_sorted_by_shell(self):
        ms = sp.wave_indices(6)
        assert np.all(np.diff(ms.ksq) >= 0)

    def test_ordering_consistent_across_cutoffs(self):
        small, large = sp.wave_indices(4), sp.wave_indices(9)
        shell = small.ksq <= 16
        n = int(shell.sum())
        assert np.array_equal(small.k1[:n], large.k1[:n])
        assert np.array_equal(small.k2[:n], large.k2[:n])
        # coordinate prefix of the complete shell agrees as well
        c = 4 * n
        assert np.array_equal(small.coord_mode[:c], large.coord_mode[:c])
        assert np.array_equal(small.coord_field[:c], large.coord_field[:c])

    def test_velocity_precedes_magnetic_within_shell(self):
        ms = sp.wave_indices(3)
        ksq = ms.ksq[ms.coord_mode]
        for shell in np.unique(ksq):
            f = ms.coord_field[ksq == shell]
            assert np.all(np.diff(f) >= 0)

    def test_invalid_cutoff(self):
        with pytest.raises(InvalidParameterError):
            sp.wave_indices(0)


class TestBasis:
    def test_lambda1(self):
        assert sp.make_basis(4, 2.0, 4.0, 1.0).lambda1 == 0.25
        assert sp.make_basis(4, 0.5, 0.1, 1.0).lambda1 == 2.0

    @pytest.mark.parametrize("bad", [dict(re=0.0), dict(rm=-1.0), dict(s=0.0)])
    def test_rejects_nonpositive(self, bad):
        args = dict(cutoff=4, re=1.0, rm=1.0, s=1.0) | bad
        with pytest.raises(InvalidParameterError):
            sp.make_basis(**args)

    def test_coord_eigs(self):
        b = sp.make_basis(3, 2.0, 0.5, 1.0)
        ms = b.modes
        eigs = b.coord_eigs()
        ksq = ms.ksq[ms.coord_mode]
        assert np.allclose(eigs[ms.coord_field == 0], ksq[ms.coord_field == 0] / 2.0)
        assert np.allclose(eigs[ms.coord_field == 1], ksq[ms.coord_field == 1] / 0.5)


class TestCoordinates:
    def test_roundtrip(self, rng):
        x = sp.random_state(5, 2.5, rng, batch=(3,))
        y = sp.state_from_coords(x.coords(), 2.5)
        assert np.allclose(y.u.coeffs, x.u.coeffs) and np.allclose(y.b.coeffs, x.b.coeffs)

    def test_coords_are_h_orthonormal(self, rng):
        x = sp.random_state(4, 3.0, rng, batch=(5,))
        y = sp.random_state(4, 3.0, rng, batch=(5,))
        assert np.allclose(sp.inner_h(x, y), np.sum(x.coords() * y.coords(), -1))

    def test_cutoff_from_count(self):
        assert sp.cutoff_from_count(sp.mode_count(7)) == 7
        with pytest.raises(InvalidParameterError):
            sp.cutoff_from_count(13)

    @given(st.integers(1, 6), st.floats(0.1, 10.0), st.integers(0, 2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_projection_idempotent_and_orthogonal(self, n, s, seed):
        rng = np.random.default_rng(seed)
        x = sp.random_state(n, s, rng)
        k = int(rng.integers(0, 4 * sp.mode_count(n) // 2 + 1))
        p = sp.project(x, k)
        assert np.allclose(sp.project(p, k).u.coeffs, p.u.coeffs)
        assert abs(sp.inner_h(x - p, p)) < 1e-12
        # the projection agrees with zeroing coordinates beyond 2k
        xi = x.coords()
        xi[2 * k:] = 0
        assert np.allclose(p.coords(), xi)


class TestNorms:
    def test_h_norm_matches_grid_quadrature(self, rng):
        x = sp.random_state(5, 1.0, rng, slope=1.0)
        g = 16
        gu = sp.to_grid(x.u, g)
        gb = sp.to_grid(x.b, g)
        cell = (2 * np.pi / g) ** 2
        val = (np.sum(gu ** 2) + np.sum(gb ** 2)) * cell
        assert val == pytest.approx(sp.norm_h(x) ** 2, rel=1e-12)

    def test_energy_norm_weights(self, rng):
        basis = sp.make_basis(4, 2.0, 0.5, 3.0)
        x = sp.random_state(4, 3.0, rng)
        ksq = basis.modes.ksq
        want = (np.sum(ksq * np.abs(x.u.coeffs) ** 2) / 2.0
                + 3.0 * np.sum(ksq * np.abs(x.b.coeffs) ** 2) / 0.5)
        assert sp.norm_energy(x, basis) ** 2 == pytest.approx(want)

    def test_single_mode_l4_closed_form(self):
        u = np.zeros(sp.mode_count(3), complex)
        u[0] = 1.0
        x = sp.MhdState.from_arrays(u, np.zeros_like(u), 1.0, 3)
        assert sp.norm_h(x) == pytest.approx(1.0)
        assert sp.norm_l4(x) == pytest.approx((3.0 / (8.0 * math.pi ** 2)) ** 0.25, rel=1e-13)

    def test_l4_grid_is_exact(self, rng):
        x = sp.random_state(4, 1.0, rng, slope=0.0)
        fine = sp.norm_l4(x, gridsize=40)
        assert sp.norm_l4(x) == pytest.approx(fine, rel=1e-12)

    def test_l4_coupling_weight(self, rng):
        x = sp.random_state(3, 2.0, rng)
        qu = sp.l4_norms(x.u.coeffs, 3, 13)
        qb = sp.l4_norms(x.b.coeffs, 3, 13)
        assert sp.norm_l4(x) ** 4 == pytest.approx(qu + 4.0 * qb)


class TestGrid:
    def test_to_grid_matches_direct_sum(self, rng):
        x = sp.random_state(4, 1.0, rng, slope=0.5)
        g = 11
        grid = sp.to_grid(x.u, g)
        pts = 2 * np.pi * np.arange(g) / g
        X, Y = np.meshgrid(pts, pts, indexing="ij")
        want = direct_field(x.u.coeffs, 4, X, Y)
        assert np.allclose(grid, want, atol=1e-13)

    def test_grid_roundtrip(self, rng):
        x = sp.random_state(6, 1.0, rng, batch=(2,))
        back = sp.from_grid(sp.to_grid(x.u, 19), 6)
        assert np.allclose(back.coeffs, x.u.coeffs, atol=1e-13)

    def test_fields_are_divergence_free(self, rng):
        x = sp.random_state(8, 1.0, rng, slope=0.0, batch=(4,))
        div = sp.divergence(x.u, 25)
        scale = np.abs(sp.to_grid(x.u, 25)).max() * 8
        assert np.abs(div).max() <= 1e-12 * scale

    def test_from_grid_projects_out_gradients(self):
        g = 16
        pts = 2 * np.pi * np.arange(g) / g
        X, Y = np.meshgrid(pts, pts, indexing="ij")
        # gradient of sin(x + 2y) has no solenoidal part
        grad = np.stack([np.cos(X + 2 * Y), 2 * np.cos(X + 2 * Y)])
        assert np.abs(sp.from_grid(grad, 4).coeffs).max() < 1e-13

    def test_too_small_grid(self):
        with pytest.raises(AliasingError):
            sp.to_grid(sp.SpectralField.zeros(5), 10)

    def test_dealias_grid_size(self):
        for n in (4, 8, 16, 32):
            g = sp.min_dealias_grid(n)
            assert g >= 3 * n + 1


class TestRandomState:
    def test_h_norm_and_reproducible(self):
        a = sp.random_state(5, 2.0, np.random.default_rng(1), h_norm=0.7, batch=(3,))
        b = sp.random_state(5, 2.0, np.random.default_rng(1), h_norm=0.7, batch=(3,))
        assert np.allclose(sp.norm_h(a), 0.7)
        assert np.array_equal(a.u.coeffs, b.u.coeffs)

    def test_cutoff_mismatch(self, rng):
        with pytest.raises(InvalidParameterError):
            sp.random_state(3, 1.0, rng) + sp.random_state(4, 1.0, rng)
