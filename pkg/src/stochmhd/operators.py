"""Linear operator A, bilinear operator B and the drift F = -A - B.

The quadratic term is evaluated pseudo-spectrally on a grid of at least
3N+1 points per axis, so the truncated product is the exact Galerkin
projection and ``b(x, y, y) = 0`` holds to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import InvalidParameterError
from .spectral import BasisDescriptor, MhdState


@dataclass(frozen=True, eq=False)
class OperatorContext:
    basis: BasisDescriptor
    dealias_grid: int
    _kx: np.ndarray = field(init=False, repr=False)
    _ky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sp.check_gridsize(self.basis.cutoff, self.dealias_grid,
                          minimum=3 * self.basis.cutoff + 1)
        kx, ky = sp._wavenumbers(self.dealias_grid)
        object.__setattr__(self, "_kx", kx)
        object.__setattr__(self, "_ky", ky)

    @property
    def cutoff(self) -> int:
        return self.basis.cutoff

    @property
    def s(self) -> float:
        return self.basis.s

    def check(self, *states: MhdState):
        for x in states:
            if x.cutoff != self.cutoff:
                raise InvalidParameterError(
                    f"state cutoff {x.cutoff} does not match context cutoff {self.cutoff}")
            if x.s != self.s:
                raise InvalidParameterError("state coupling constant differs from context")

    # array-level kernels; leading axes are batch axes

    def a_arrays(self, u, b):
        return self.basis.eigs_u * u, self.basis.eigs_b * b

    def b_arrays(self, u1, b1, u2, b2):
        """Velocity and magnetic amplitudes of B(x1, x2)."""
        n, g, s = self.cutoff, self.dealias_grid, self.s
        ikx, iky = 1j * self._kx, 1j * self._ky
        su1 = sp._spectrum(u1, n, g)
        sb1 = sp._spectrum(b1, n, g)
        su2 = su1 if u2 is u1 else sp._spectrum(u2, n, g)
        sb2 = sb1 if b2 is b1 else sp._spectrum(b2, n, g)
        stack = np.concatenate(
            [su1, sb1, ikx * su2, iky * su2, ikx * sb2, iky * sb2], axis=-3)
        grids = sp._irfft2(stack, g)
        u1x, u1y = grids[..., 0, :, :], grids[..., 1, :, :]
        b1x, b1y = grids[..., 2, :, :], grids[..., 3, :, :]
        du_x, du_y = grids[..., 4:6, :, :], grids[..., 6:8, :, :]
        db_x, db_y = grids[..., 8:10, :, :], grids[..., 10:12, :, :]
        u1x, u1y, b1x, b1y = (a[..., None, :, :] for a in (u1x, u1y, b1x, b1y))
        nu = u1x * du_x + u1y * du_y - s * (b1x * db_x + b1y * db_y)
        nb = u1x * db_x + u1y * db_y - (b1x * du_x + b1y * du_y)
        spec = sp._rfft2(np.concatenate([nu, nb], axis=-3))
        return (sp._project_spectrum(spec[..., 0:2, :, :], n),
                sp._project_spectrum(spec[..., 2:4, :, :], n))

    def energy_arrays(self, u, b):
        """a(x, x) for coefficient arrays."""
        return (np.sum(self.basis.eigs_u * (u.real ** 2 + u.imag ** 2), -1)
                + self.s * np.sum(self.basis.eigs_b * (b.real ** 2 + b.imag ** 2), -1))


def make_context(basis: BasisDescriptor, dealias_grid: int | None = None) -> OperatorContext:
    g = sp.min_dealias_grid(basis.cutoff) if dealias_grid is None else int(dealias_grid)
    return OperatorContext(basis, g)


def _state(u, b, ctx: OperatorContext) -> MhdState:
    return MhdState.from_arrays(u, b, ctx.s, ctx.cutoff)


def apply_a(ctx: OperatorContext, x: MhdState) -> MhdState:
    ctx.check(x)
    return _state(*ctx.a_arrays(x.u.coeffs, x.b.coeffs), ctx)


def bilinear_a(ctx: OperatorContext, x: MhdState, y: MhdState):
    """a(x, y) = (1/Re) [[u1, u2]] + (S/Rm) [[B1, B2]]."""
    ctx.check(x, y)
    return sp.inner_h(apply_a(ctx, x), y)


def apply_b(ctx: OperatorContext, x1: MhdState, x2: MhdState) -> MhdState:
    ctx.check(x1, x2)
    return _state(*ctx.b_arrays(x1.u.coeffs, x1.b.coeffs, x2.u.coeffs, x2.b.coeffs), ctx)


def trilinear(ctx: OperatorContext, x1: MhdState, x2: MhdState, x3: MhdState):
    """b(x1, x2, x3) = [B(x1, x2), x3]."""
    ctx.check(x3)
    return sp.inner_h(apply_b(ctx, x1, x2), x3)


def apply_f(ctx: OperatorContext, x: MhdState) -> MhdState:
    ctx.check(x)
    u, b = x.u.coeffs, x.b.coeffs
    au, ab = ctx.a_arrays(u, b)
    bu, bb = ctx.b_arrays(u, b, u, b)
    return _state(-au - bu, -ab - bb, ctx)


def norm_vdual(x: MhdState):
    """Dual norm in V' with H as pivot: sum_k (|a_k|^2 + S |b_k|^2) / |k|^2."""
    ksq = sp.wave_indices(x.cutoff).ksq
    return np.sqrt(np.sum((np.abs(x.u.coeffs) ** 2 + x.s * np.abs(x.b.coeffs) ** 2) / ksq, -1))


def dual_growth_ratio(ctx: OperatorContext, x: MhdState):
    """||B(x)||_{V'} / (|x| ||x||); its maximum over samples estimates C_B."""
    return norm_vdual(apply_b(ctx, x, x)) / (sp.norm_h(x) * sp.norm_v(x))


# -- local monotonicity --------------------------------------------------------

def young_constant(eps: float) -> float:
    """Smallest C with a*b <= eps*a^(4/3) + C*b^4 for all a, b >= 0."""
    return 27.0 / (256.0 * eps ** 3)


@dataclass(frozen=True)
class LadyzhenskayaCalibration:
    """Calibrated constant in ||f||_{L4}^2 <= C_L |f| ||f||."""

    raw_max: float
    safety: float
    constant: float
    samples: int
    cutoffs: tuple


def ladyzhenskaya_ratio(x: MhdState):
    """||x||_{L4}^2 / (|x| ||x||_V) in the combined pair norms."""
    return sp.norm_l4(x) ** 2 / (sp.norm_h(x) * sp.norm_v(x))


def calibrate_ladyzhenskaya(cutoffs=(2, 4, 8, 16), samples: int = 400, seed: int = 2024,
                            safety: float = 2.0, climb_steps: int = 40) -> LadyzhenskayaCalibration:
    """Randomised maximisation of the Ladyzhenskaya ratio, inflated by ``safety``.

    Candidates mix random spectra of several slopes, single modes and
    Leray-projected Gaussian bumps; the best candidates are then refined by a
    short stochastic hill climb.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for n in cutoffs:
        cands = []
        for slope in (0.0, 1.0, 2.0, 3.0, 5.0):
            cands.append(sp.random_state(n, 1.0, rng, slope=slope, batch=(samples // 5,)))
        m = sp.mode_count(n)
        eye = np.eye(m, dtype=complex)[: min(m, 12)]
        cands.append(sp.MhdState.from_arrays(eye, np.zeros_like(eye), 1.0, n))
        g = 4 * n + 1
        xs = 2 * np.pi * np.arange(g) / g
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        bumps = []
        for width in (0.3, 0.5, 0.8, 1.2):
            r2 = (X - np.pi) ** 2 + (Y - np.pi) ** 2
            psi = np.exp(-r2 / (2 * width ** 2))
            # velocity of a stream-function bump: (-d_y psi, d_x psi)
            vx = (Y - np.pi) / width ** 2 * psi
            vy = -(X - np.pi) / width ** 2 * psi
            bumps.append(sp.from_grid(np.stack([vx, vy]), n).coeffs)
        bumps = np.array(bumps)
        cands.append(sp.MhdState.from_arrays(bumps, np.zeros_like(bumps), 1.0, n))
        coeffs_u = np.concatenate([c.u.coeffs for c in cands])
        coeffs_b = np.concatenate([c.b.coeffs for c in cands])
        pool = sp.MhdState.from_arrays(coeffs_u, coeffs_b, 1.0, n)
        ratios = ladyzhenskaya_ratio(pool)
        top = np.argsort(ratios)[-8:]
        u, b = coeffs_u[top], coeffs_b[top]
        cur = ratios[top]
        scale = 0.2
        for _ in range(climb_steps):
            du = rng.standard_normal(u.shape) + 1j * rng.standard_normal(u.shape)
            db = rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)
            amp = scale * np.linalg.norm(np.concatenate([u, b], -1), axis=-1, keepdims=True)
            amp = amp / np.sqrt(2 * u.shape[-1])
            nu, nb = u + amp * du, b + amp * db
            r = ladyzhenskaya_ratio(sp.MhdState.from_arrays(nu, nb, 1.0, n))
            better = r > cur
            u[better], b[better], cur[better] = nu[better], nb[better], r[better]
        best = max(best, float(ratios.max()), float(cur.max()))
    return LadyzhenskayaCalibration(best, safety, safety * best, samples, tuple(cutoffs))


@dataclass(frozen=True)
class MonotonicityCheck:
    """Outcome of the local monotonicity inequality for one or more pairs."""

    lhs: np.ndarray  # (F(x) - F(y), w)
    rhs: np.ndarray  # (-c + eps) ||w||^2 + C(eps) C_L^2 |w|^2 r^4
    margin: np.ndarray
    holder_lhs: np.ndarray  # |b(w, w, y)|
    holder_rhs: np.ndarray  # ||w||_L4 ||w|| ||y||_L4
    r: np.ndarray
    eps: float
    c_eps: float
    c_l: float
    coercivity: float

    @property
    def holder_ratio(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.holder_rhs > 0, self.holder_lhs / self.holder_rhs, 0.0)

    @property
    def violations(self) -> int:
        return int(np.sum(self.margin < 0))

    @property
    def holder_violations(self) -> int:
        return int(np.sum(self.holder_lhs > self.holder_rhs * (1 + 1e-12) + 1e-300))


def check_local_monotonicity(ctx: OperatorContext, x: MhdState, y: MhdState, eps: float,
                             c_l: float, tol: float = 1e-12) -> MonotonicityCheck:
    """(F(x)-F(y), w) <= (-c + eps) ||w||^2 + C(eps) C_L^2 |w|^2 r^4 with r = ||y||_L4.

    ``c = min(1/Re, 1/Rm)`` is the coercivity constant of a; ``||.||`` is the
    gradient norm.  Writing C_L in unsquared form (||f||_L4 <= c4 |f|^(1/2)
    ||f||^(1/2)) the last term reads C(eps) c4^4 |w|^2 r^4.  ``tol`` absorbs
    round-off relative to the size of the terms.
    """
    if not 0 < eps < 1:
        raise InvalidParameterError(f"eps must lie in (0, 1), got {eps}")
    ctx.check(x, y)
    w = x - y
    fx, fy = apply_f(ctx, x), apply_f(ctx, y)
    lhs = sp.inner_h(fx - fy, w)
    c = ctx.basis.lambda1
    r = sp.norm_l4(y)
    wv2 = sp.norm_v(w) ** 2
    wh2 = sp.norm_h(w) ** 2
    c_eps = young_constant(eps)
    rhs = (-c + eps) * wv2 + c_eps * c_l ** 2 * wh2 * r ** 4
    scale = ctx.basis.lambda1 ** -1 * wv2 + np.abs(lhs)
    margin = rhs - lhs + tol * scale
    holder_lhs = np.abs(trilinear(ctx, w, w, y))
    holder_rhs = sp.norm_l4(w) * np.sqrt(wv2) * r
    return MonotonicityCheck(lhs, rhs, margin, holder_lhs, holder_rhs, r, eps, c_eps, c_l, c)
