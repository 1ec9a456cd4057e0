"""Divergence-free Fourier representation of (u, B) pairs on the 2-pi torus.

Every solenoidal, zero-mean, real vector field with wavenumbers in the box
``max(|k1|, |k2|) <= N`` is stored as one complex amplitude per wavevector of
the half plane ``k2 > 0 or (k2 == 0 and k1 > 0)``::

    f(x) = sum_k 2 * NORM * Re(a_k exp(i k.x)) * kperp / |k|,  kperp = (-k2, k1)

With ``NORM = 1 / (2*pi*sqrt(2))`` the real and imaginary parts of the
amplitudes are orthonormal L2 coordinates: a unit amplitude gives a field of
unit L2 norm whose pointwise peak is ``2 * NORM``.  Leading axes of a
coefficient array are treated as batch axes throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.fft

from .errors import AliasingError, InvalidParameterError

NORM = 1.0 / (2.0 * np.pi * np.sqrt(2.0))



class ModeSet(NamedTuple):
    k1: np.ndarray
    k2: np.ndarray
    ksq: np.ndarray
    rank_u: np.ndarray  # position of each velocity mode in the P_n ordering
    rank_b: np.ndarray
    coord_field: np.ndarray  # 0 velocity, 1 magnetic; per real coordinate
    coord_mode: np.ndarray
    coord_part: np.ndarray  # 0 real part, 1 imaginary part


def mode_count(cutoff: int) -> int:
    """Number of stored half-plane wavevectors per field."""
    return 2 * cutoff * (cutoff + 1)


@lru_cache(maxsize=None)
def wave_indices(cutoff: int) -> ModeSet:
    """Stored wavevectors sorted by (|k|^2, k1, k2) plus the P_n ordering.

    The P_n ordering sorts basis elements by (|k|^2, field, k1, k2): at equal
    |k|^2 every velocity mode precedes every magnetic mode.  Both orderings
    agree across cutoffs on the shell |k|^2 <= cutoff^2.
    """
    if cutoff < 1:
        raise InvalidParameterError(f"cutoff must be >= 1, got {cutoff}")
    r = np.arange(-cutoff, cutoff + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    k1, k2 = k1.ravel(), k2.ravel()
    keep = (k2 > 0) | ((k2 == 0) & (k1 > 0))
    k1, k2 = k1[keep], k2[keep]
    ksq = k1 * k1 + k2 * k2
    idx = np.lexsort((k2, k1, ksq))
    k1, k2, ksq = k1[idx], k2[idx], ksq[idx]
    m = k1.size

    fields = np.concatenate([np.zeros(m, int), np.ones(m, int)])
    modes = np.concatenate([np.arange(m), np.arange(m)])
    order = np.lexsort((k2[modes], k1[modes], fields, ksq[modes]))
    rank = np.empty(2 * m, dtype=np.int64)
    rank[order] = np.arange(2 * m)
    rank_u, rank_b = rank[:m], rank[m:]

    coord_field = np.repeat(fields[order], 2)
    coord_mode = np.repeat(modes[order], 2)
    coord_part = np.tile([0, 1], 2 * m)
    for a in (k1, k2, ksq, rank_u, rank_b, coord_field, coord_mode, coord_part):
        a.setflags(write=False)
    return ModeSet(k1, k2, ksq, rank_u, rank_b, coord_field, coord_mode, coord_part)


@dataclass(frozen=True, eq=False)
class BasisDescriptor:
    """Eigen-data of the Stokes/curl-curl operator on the torus."""

    cutoff: int
    re: float
    rm: float
    s: float
    eigs_u: np.ndarray
    eigs_b: np.ndarray
    lambda1: float

    @property
    def modes(self) -> ModeSet:
        return wave_indices(self.cutoff)

    @property
    def n_modes(self) -> int:
        return mode_count(self.cutoff)

    @property
    def n_basis(self) -> int:
        """Complex basis elements counted by the projection P_n."""
        return 2 * self.n_modes

    @property
    def n_coords(self) -> int:
        return 4 * self.n_modes

    def coord_eigs(self) -> np.ndarray:
        """Eigenvalue of A attached to every real coordinate."""
        ms = self.modes
        ksq = ms.ksq[ms.coord_mode].astype(float)
        return np.where(ms.coord_field == 0, ksq / self.re, ksq / self.rm)


def make_basis(cutoff: int, re: float, rm: float, s: float) -> BasisDescriptor:
    for name, v in (("re", re), ("rm", rm), ("s", s)):
        if not v > 0:
            raise InvalidParameterError(f"{name} must be positive, got {v}")
    if int(cutoff) != cutoff or cutoff < 1:
        raise InvalidParameterError(f"cutoff must be a positive integer, got {cutoff}")
    ms = wave_indices(int(cutoff))
    eigs_u = ms.ksq / float(re)
    eigs_b = ms.ksq / float(rm)
    eigs_u.setflags(write=False)
    eigs_b.setflags(write=False)
    return BasisDescriptor(
        cutoff=int(cutoff),
        re=float(re),
        rm=float(rm),
        s=float(s),
        eigs_u=eigs_u,
        eigs_b=eigs_b,
        lambda1=min(1.0 / re, 1.0 / rm),
    )


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray
    cutoff: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape[-1:] != (mode_count(self.cutoff),):
            raise InvalidParameterError(
                f"expected {mode_count(self.cutoff)} coefficients for cutoff "
                f"{self.cutoff}, got shape {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, cutoff: int, batch=()) -> SpectralField:
        return cls(np.zeros(tuple(batch) + (mode_count(cutoff),), complex), cutoff)


@dataclass(frozen=True, eq=False)
class MhdState:
    """Velocity/magnetic pair with the S-weighted inner product."""

    u: SpectralField
    b: SpectralField
    s: float

    def __post_init__(self):
        if self.u.cutoff != self.b.cutoff:
            raise InvalidParameterError("u and b must share the same cutoff")
        if not self.s > 0:
            raise InvalidParameterError(f"s must be positive, got {self.s}")

    @classmethod
    def from_arrays(cls, u, b, s: float, cutoff: int | None = None) -> MhdState:
        u = np.asarray(u, complex)
        if cutoff is None:
            cutoff = cutoff_from_count(u.shape[-1])
        return cls(SpectralField(u, cutoff), SpectralField(b, cutoff), float(s))

    @classmethod
    def zeros(cls, cutoff: int, s: float, batch=()) -> MhdState:
        return cls(SpectralField.zeros(cutoff, batch), SpectralField.zeros(cutoff, batch), s)

    @property
    def cutoff(self) -> int:
        return self.u.cutoff

    def _check(self, other: MhdState):
        if self.cutoff != other.cutoff:
            raise InvalidParameterError("cutoff mismatch")
        if self.s != other.s:
            raise InvalidParameterError("coupling constant s differs between states")

    def __add__(self, other):
        self._check(other)
        return MhdState.from_arrays(self.u.coeffs + other.u.coeffs,
                                    self.b.coeffs + other.b.coeffs, self.s, self.cutoff)

    def __sub__(self, other):
        self._check(other)
        return MhdState.from_arrays(self.u.coeffs - other.u.coeffs,
                                    self.b.coeffs - other.b.coeffs, self.s, self.cutoff)

    def __neg__(self):
        return MhdState.from_arrays(-self.u.coeffs, -self.b.coeffs, self.s, self.cutoff)

    def __mul__(self, a):
        a = np.asarray(a)[..., None] if np.ndim(a) else a
        return MhdState.from_arrays(a * self.u.coeffs, a * self.b.coeffs, self.s, self.cutoff)

    __rmul__ = __mul__

    def coords(self) -> np.ndarray:
        return to_coords(self.u.coeffs, self.b.coeffs, self.s)


def cutoff_from_count(m: int) -> int:
    n = int(round((-1 + np.sqrt(1 + 2 * m)) / 2))
    if mode_count(n) != m:
        raise InvalidParameterError(f"{m} is not a valid per-field mode count")
    return n


def to_coords(u: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    """Real H-orthonormal coordinates in the P_n ordering (magnetic part scaled by sqrt(s))."""
    ms = wave_indices(cutoff_from_count(u.shape[-1]))
    xi = np.empty(u.shape[:-1] + (4 * u.shape[-1],))
    rs = np.sqrt(s)
    xi[..., 2 * ms.rank_u] = u.real
    xi[..., 2 * ms.rank_u + 1] = u.imag
    xi[..., 2 * ms.rank_b] = rs * b.real
    xi[..., 2 * ms.rank_b + 1] = rs * b.imag
    return xi


def from_coords(xi: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    m = xi.shape[-1] // 4
    ms = wave_indices(cutoff_from_count(m))
    u = xi[..., 2 * ms.rank_u] + 1j * xi[..., 2 * ms.rank_u + 1]
    b = (xi[..., 2 * ms.rank_b] + 1j * xi[..., 2 * ms.rank_b + 1]) / np.sqrt(s)
    return u, b


def state_from_coords(xi: np.ndarray, s: float) -> MhdState:
    u, b = from_coords(np.asarray(xi, float), s)
    return MhdState.from_arrays(u, b, s)


def inner_h(x: MhdState, y: MhdState) -> np.ndarray:
    """[x, y] = (u1, u2) + S (B1, B2)."""
    x._check(y)
    return (np.sum((x.u.coeffs * y.u.coeffs.conj()).real, axis=-1)
            + x.s * np.sum((x.b.coeffs * y.b.coeffs.conj()).real, axis=-1))


def norm_h(x: MhdState) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(x.u.coeffs) ** 2, -1) + x.s * np.sum(np.abs(x.b.coeffs) ** 2, -1))


def norm_v(x: MhdState) -> np.ndarray:
    """Gradient norm: sum_k |k|^2 (|a_k|^2 + S |b_k|^2)."""
    ksq = wave_indices(x.cutoff).ksq
    return np.sqrt(np.sum(ksq * (np.abs(x.u.coeffs) ** 2 + x.s * np.abs(x.b.coeffs) ** 2), -1))


def norm_energy(x: MhdState, basis: BasisDescriptor) -> np.ndarray:
    """sqrt(a(x, x)), the dissipation norm induced by A."""
    ksq = wave_indices(x.cutoff).ksq
    return np.sqrt(np.sum(ksq * (np.abs(x.u.coeffs) ** 2 / basis.re
                                 + x.s * np.abs(x.b.coeffs) ** 2 / basis.rm), -1))


def project(x: MhdState, n: int) -> MhdState:
    """Orthogonal projection onto the first ``n`` basis elements of the P_n ordering."""
    ms = wave_indices(x.cutoff)
    total = 2 * ms.k1.size
    if n < 0 or n > total:
        raise InvalidParameterError(f"n={n} outside [0, {total}] for cutoff {x.cutoff}")
    return MhdState.from_arrays(np.where(ms.rank_u < n, x.u.coeffs, 0),
                                np.where(ms.rank_b < n, x.b.coeffs, 0), x.s, x.cutoff)


def projection_masks(cutoff: int, n: int | None) -> tuple[np.ndarray, np.ndarray]:
    ms = wave_indices(cutoff)
    if n is None:
        n = 2 * ms.k1.size
    if n < 1 or n > 2 * ms.k1.size:
        raise InvalidParameterError(f"n_modes={n} outside [1, {2 * ms.k1.size}]")
    return ms.rank_u < n, ms.rank_b < n


# -- grid transforms ---------------------------------------------------------

def min_dealias_grid(cutoff: int) -> int:
    """Smallest FFT-friendly grid on which a quadratic product has no aliasing into |k| <= N."""
    return scipy.fft.next_fast_len(3 * cutoff + 1, real=True)


def check_gridsize(cutoff: int, gridsize: int, minimum: int | None = None):
    minimum = 2 * cutoff + 1 if minimum is None else minimum
    if gridsize < minimum:
        raise AliasingError(f"grid of {gridsize} points cannot represent cutoff {cutoff}"
                            f" (need >= {minimum})")


def _spectrum(coeffs: np.ndarray, cutoff: int, gridsize: int) -> np.ndarray:
    """Half-spectrum (..., 2, G, G//2+1) of the vector field for ``irfft2``."""
    ms = wave_indices(cutoff)
    kabs = np.sqrt(ms.ksq)
    g = gridsize
    out = np.zeros(coeffs.shape[:-1] + (2, g, g // 2 + 1), complex)
    amp = NORM * coeffs
    px, py = -ms.k2 / kabs, ms.k1 / kabs
    ix, iy = ms.k1 % g, ms.k2
    out[..., 0, ix, iy] = amp * px
    out[..., 1, ix, iy] = amp * py
    edge = ms.k2 == 0
    jx = (-ms.k1[edge]) % g
    out[..., 0, jx, 0] = np.conj(amp[..., edge]) * px[edge]
    out[..., 1, jx, 0] = np.conj(amp[..., edge]) * py[edge]
    return out


def _wavenumbers(gridsize: int) -> tuple[np.ndarray, np.ndarray]:
    kx = np.fft.fftfreq(gridsize, 1.0 / gridsize)[:, None]
    ky = np.arange(gridsize // 2 + 1)[None, :].astype(float)
    return kx, ky


def _irfft2(spec: np.ndarray, g: int) -> np.ndarray:
    return scipy.fft.irfft2(spec, s=(g, g), norm="forward")


def _rfft2(grid: np.ndarray) -> np.ndarray:
    return scipy.fft.rfft2(grid, norm="forward")


def _project_spectrum(spec: np.ndarray, cutoff: int) -> np.ndarray:
    """Leray-project a half-spectrum (..., 2, G, G//2+1) onto the stored modes."""
    ms = wave_indices(cutoff)
    g = spec.shape[-2]
    kabs = np.sqrt(ms.ksq)
    ix, iy = ms.k1 % g, ms.k2
    fx = spec[..., 0, ix, iy]
    fy = spec[..., 1, ix, iy]
    return (-ms.k2 / kabs * fx + ms.k1 / kabs * fy) / NORM


def to_grid(f: SpectralField, gridsize: int | None = None) -> np.ndarray:
    """Sample the vector field on a uniform G x G grid; shape (..., 2, G, G).

    Grid point (i, j) sits at x = (2 pi i / G, 2 pi j / G).
    """
    g = 2 * f.cutoff + 1 if gridsize is None else int(gridsize)
    check_gridsize(f.cutoff, g)
    return _irfft2(_spectrum(f.coeffs, f.cutoff, g), g)


def from_grid(grid: np.ndarray, cutoff: int) -> SpectralField:
    """Amplitudes of the Leray projection of gridded data onto the stored modes."""
    grid = np.asarray(grid, float)
    g = grid.shape[-1]
    if grid.shape[-3:] != (2, g, g):
        raise InvalidParameterError(f"grid must have shape (..., 2, G, G), got {grid.shape}")
    check_gridsize(cutoff, g)
    return SpectralField(_project_spectrum(_rfft2(grid), cutoff), cutoff)


def l4_norms(coeffs: np.ndarray, cutoff: int, gridsize: int) -> np.ndarray:
    """||f||_{L4}^4 of one field by exact quadrature when gridsize >= 4N+1."""
    grid = _irfft2(_spectrum(coeffs, cutoff, gridsize), gridsize)
    mag2 = grid[..., 0, :, :] ** 2 + grid[..., 1, :, :] ** 2
    cell = (2 * np.pi / gridsize) ** 2
    return np.sum(mag2 * mag2, axis=(-2, -1)) * cell


def norm_l4(x: MhdState, gridsize: int | None = None) -> np.ndarray:
    """Combined L4 norm (||u||^4 + S^2 ||B||^4)^(1/4).

    The default grid of 4N+1 points integrates |f|^4 exactly.
    """
    g = 4 * x.cutoff + 1 if gridsize is None else int(gridsize)
    check_gridsize(x.cutoff, g)
    both = np.stack([x.u.coeffs, x.b.coeffs], axis=-2)
    q = l4_norms(both, x.cutoff, g)
    return (q[..., 0] + x.s ** 2 * q[..., 1]) ** 0.25


def divergence(f: SpectralField, gridsize: int | None = None) -> np.ndarray:
    """Spectral divergence of the reconstructed field on the grid."""
    g = 2 * f.cutoff + 1 if gridsize is None else int(gridsize)
    check_gridsize(f.cutoff, g)
    spec = _spectrum(f.coeffs, f.cutoff, g)
    kx, ky = _wavenumbers(g)
    return _irfft2(1j * kx * spec[..., 0, :, :] + 1j * ky * spec[..., 1, :, :], g)


def random_state(cutoff: int, s: float, rng: np.random.Generator, *, slope: float = 2.0,
                 h_norm: float | None = 1.0, batch=()) -> MhdState:
    """Random state with amplitude spectrum ~ (1 + |k|^2)^(-slope/2).

    When ``h_norm`` is given every sample is rescaled to that H norm.
    """
    ms = wave_indices(cutoff)
    m = ms.k1.size
    shape = tuple(batch) + (m,)
    env = (1.0 + ms.ksq) ** (-slope / 2)

    def draw():
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * env

    x = MhdState.from_arrays(draw(), draw() / np.sqrt(s), s, cutoff)
    if h_norm is not None:
        x = x * (h_norm / norm_h(x))
    return x
