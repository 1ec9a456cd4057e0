"""Q-Wiener and compensated compound-Poisson noise with documented constants.

All noise lives in the real H-orthonormal coordinates of
:func:`stochmhd.spectral.to_coords` (P_n ordering).  Coefficient families:

* sigma, diagonal in those coordinates, entry ``alpha + beta * tanh(x_j)``
  (``additive`` drops the state dependence);
* marks ``z = (rho * zeta + mean) e_j`` with ``zeta ~ N(0, 1)`` and ``j``
  uniform over the first ``mark_modes`` coordinates, intensity ``nu``;
* ``g(x, z) = (gamma0 + gamma1 * tanh|x|) z`` (``additive``: ``gamma0 * z``).

Random streams: one root seed; path ``i`` owns
``SeedSequence(seed, spawn_key=(i,))`` whose three children feed, in order,
the Gaussian increments, the jump schedule and the Monte Carlo compensator.
Jump times are drawn once per path on ``[0, t_end]`` and binned into steps,
so changing ``dt`` does not move them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from . import spectral as sp
from .errors import HypothesisViolationError, InvalidParameterError, UnsupportedConfigurationError
from .spectral import MhdState

SIGMA_KINDS = ("additive", "diagonal-damped")
G_KINDS = ("additive", "multiplicative-bounded")


@dataclass(frozen=True, eq=False)
class WienerSpec:
    """Eigenvalues of Q, one per real H coordinate."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, float)
        if q.ndim != 1 or np.any(q < 0) or not np.all(np.isfinite(q)):
            raise InvalidParameterError("q must be a finite nonnegative vector")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def trace_q(self) -> float:
        return float(np.sum(self.q))

    @property
    def support(self) -> int:
        """Length of the coordinate prefix carrying all of Q's mass."""
        nz = np.flatnonzero(self.q)
        return int(nz[-1] + 1) if nz.size else 0

    @classmethod
    def shell(cls, cutoff: int, trace: float, k2_max: int, decay: float = 0.0) -> WienerSpec:
        """Q supported on |k|^2 <= k2_max (both fields), weights ~ |k|^(-2 decay), given trace."""
        ms = sp.wave_indices(cutoff)
        if trace < 0:
            raise InvalidParameterError("trace must be nonnegative")
        if k2_max > cutoff ** 2:
            raise InvalidParameterError(
                f"noise shell |k|^2 <= {k2_max} exceeds the complete shell of cutoff {cutoff}")
        ksq = ms.ksq[ms.coord_mode].astype(float)
        w = np.where(ksq <= k2_max, ksq ** (-decay), 0.0)
        if trace == 0 or w.sum() == 0:
            return cls(np.zeros_like(w))
        return cls(trace * w / w.sum())

    @classmethod
    def zero(cls, cutoff: int) -> WienerSpec:
        return cls(np.zeros(4 * sp.mode_count(cutoff)))


@dataclass(frozen=True)
class SigmaFamily:
    kind: str = "additive"
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in SIGMA_KINDS:
            raise InvalidParameterError(f"unknown sigma kind {self.kind!r}")
        if self.kind == "additive" and self.beta != 0:
            raise InvalidParameterError("additive sigma takes no beta")

    def entries(self, xi: np.ndarray) -> np.ndarray:
        if self.kind == "additive":
            return np.full(np.shape(xi), self.alpha)
        return self.alpha + self.beta * np.tanh(xi)


@dataclass(frozen=True)
class JumpSpec:
    intensity: float = 0.0
    mark_amp: float = 0.0
    mark_modes: int = 1
    g_kind: str = "additive"
    gamma0: float = 1.0
    gamma1: float = 0.0
    mark_mean: float = 0.0
    mc_compensation: bool = False
    mc_samples: int = 4096

    def __post_init__(self):
        if self.intensity < 0 or self.mark_amp < 0:
            raise InvalidParameterError("jump intensity and mark amplitude must be >= 0")
        if self.mark_modes < 1:
            raise InvalidParameterError("mark_modes must be >= 1")
        if self.g_kind not in G_KINDS:
            raise InvalidParameterError(f"unknown g kind {self.g_kind!r}")
        if self.g_kind == "additive" and self.gamma1 != 0:
            raise InvalidParameterError("additive g takes no gamma1")

    @property
    def lambda_z(self) -> float:
        return self.intensity

    def mark_moment(self, p: float) -> float:
        """E|rho * zeta + mean|^p."""
        rho, mu = self.mark_amp, self.mark_mean
        if mu == 0.0:
            return rho ** p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        dens = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        val, _ = integrate.quad(lambda z: abs(rho * z + mu) ** p * dens(z), -np.inf, np.inf)
        return val

    def moment_table(self) -> dict:
        """Integrals of |z|^2 and |z|^4 against the Levy measure."""
        return {"z2": self.intensity * self.mark_moment(2),
                "z4": self.intensity * self.mark_moment(4)}

    def phi(self, h_norm):
        """Scalar factor of g(x, .) given |x|."""
        if self.g_kind == "additive":
            return np.full(np.shape(h_norm), self.gamma0)
        return self.gamma0 + self.gamma1 * np.tanh(h_norm)

    @property
    def phi_max(self) -> float:
        return abs(self.gamma0) + (abs(self.gamma1) if self.g_kind != "additive" else 0.0)


@dataclass(frozen=True)
class NoiseConstants:
    K: float
    L: float
    K1: float
    p: float
    M1: float | None
    M3: float | None
    lambda_z: float
    K_sigma: float
    L_sigma: float
    K_g: float
    L_g: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class NoiseModel:
    wiener: WienerSpec
    sigma: SigmaFamily = field(default_factory=SigmaFamily)
    jump: JumpSpec = field(default_factory=JumpSpec)

    def __post_init__(self):
        c = self.constants()
        if c.L >= 1:
            raise HypothesisViolationError(
                f"Lipschitz constant L = {c.L:.6g} must be below 1")
        if self.jump.mark_modes > self.wiener.q.size:
            raise InvalidParameterError("mark_modes exceeds the number of coordinates")

    @property
    def n_coords(self) -> int:
        return self.wiener.q.size

    @property
    def cutoff(self) -> int:
        return sp.cutoff_from_count(self.n_coords // 4)

    @property
    def additive(self) -> bool:
        return self.sigma.kind == "additive" and self.jump.g_kind == "additive"

    @property
    def has_wiener(self) -> bool:
        return self.wiener.support > 0 and self.sigma_possible

    @property
    def sigma_possible(self) -> bool:
        return self.sigma.alpha != 0 or self.sigma.beta != 0

    @property
    def has_jumps(self) -> bool:
        return self.jump.intensity > 0

    @property
    def prefix(self) -> int:
        """Coordinates touched by any noise term."""
        return max(self.wiener.support, self.jump.mark_modes if self.has_jumps else 0)

    def constants(self, p: float = 2.0) -> NoiseConstants:
        """Closed-form K, L, K1(p), M1, M3 of the shipped families."""
        tr, qmax = self.wiener.trace_q, float(self.wiener.q.max(initial=0.0))
        a, b = self.sigma.alpha, self.sigma.beta
        if self.sigma.kind == "additive":
            k_sig, l_sig, m1 = a * a * tr, 0.0, a * a * tr
        else:
            k_sig, l_sig, m1 = (abs(a) + abs(b)) ** 2 * tr, b * b * qmax, None
        j = self.jump
        nu = j.intensity
        z2 = nu * j.mark_moment(2) if nu > 0 else 0.0
        k_g = j.phi_max ** 2 * z2
        l_g = j.gamma1 ** 2 * z2 if j.g_kind != "additive" else 0.0
        m3 = j.gamma0 ** 2 * z2 if j.g_kind == "additive" else None
        zp = nu * j.mark_moment(p) if nu > 0 else 0.0
        k1 = k_sig ** (p / 2) + j.phi_max ** p * zp
        f = lambda v: None if v is None else float(v)
        return NoiseConstants(K=f(k_sig + k_g), L=f(l_sig + l_g), K1=f(k1), p=float(p),
                              M1=f(m1), M3=f(m3), lambda_z=f(nu), K_sigma=f(k_sig),
                              L_sigma=f(l_sig), K_g=f(k_g), L_g=f(l_g))


def constants(model: NoiseModel, p: float = 2.0) -> NoiseConstants:
    c = model.constants(p)
    if c.L >= 1:
        raise HypothesisViolationError(f"L = {c.L:.6g} >= 1")
    return c


class Mark(NamedTuple):
    """Jump mark z = value * e_index in H coordinates."""

    index: int
    value: float


def mark_vector(mark: Mark, n_coords: int) -> np.ndarray:
    z = np.zeros(n_coords)
    z[mark.index] = mark.value
    return z


def sample_wiener_increment(spec: WienerSpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Centered Gaussian increment with variance q_j dt per coordinate.

    Only the support prefix consumes random numbers, so the draw does not
    depend on the cutoff once Q lives on a complete low shell.
    """
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    out = np.zeros(spec.q.size)
    d = spec.support
    if d:
        out[:d] = np.sqrt(spec.q[:d] * dt) * rng.standard_normal(d)
    return out


def apply_sigma(model: NoiseModel, t: float, x: MhdState, dw: np.ndarray) -> MhdState:
    dw = np.asarray(dw, float)
    if dw.shape[-1] != model.n_coords or x.cutoff != model.cutoff:
        raise InvalidParameterError("increment, state and noise model shapes disagree")
    xi = x.coords()
    return sp.state_from_coords(model.sigma.entries(xi) * dw, x.s)


def sigma_hs_norm(model: NoiseModel, t: float, x: MhdState):
    """|sigma(t, x)|^2_{L_Q} = sum_j q_j s_j(x)^2."""
    xi = x.coords()
    return np.sum(model.wiener.q * model.sigma.entries(xi) ** 2, axis=-1)


def draw_marks(spec: JumpSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    idx = rng.integers(0, spec.mark_modes, size=n)
    val = spec.mark_amp * rng.standard_normal(n) + spec.mark_mean
    return idx, val


def sample_jumps(spec: JumpSpec, dt: float, rng: np.random.Generator) -> list[Mark]:
    """Marks of one window of length dt: Poisson(nu dt) many, i.i.d. from the mark law."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    if spec.intensity == 0:
        return []
    n = int(rng.poisson(spec.intensity * dt))
    idx, val = draw_marks(spec, n, rng)
    return [Mark(int(i), float(v)) for i, v in zip(idx, val)]


def apply_g(model: NoiseModel, x: MhdState, z: Mark) -> MhdState:
    phi = model.jump.phi(sp.norm_h(x))
    zv = mark_vector(z, model.n_coords)
    return sp.state_from_coords(np.multiply.outer(phi, zv), x.s)


def compensator_drift(model: NoiseModel, x: MhdState, rng: np.random.Generator | None = None) -> MhdState:
    """Integral of g(x, z) against the Levy measure.

    Mean-zero marks make this exactly zero for both g families.  Shifted
    marks need ``mc_compensation`` and a generator for the Monte Carlo estimate.
    """
    j = model.jump
    if j.intensity == 0 or j.mark_mean == 0:
        return MhdState.zeros(x.cutoff, x.s, np.shape(sp.norm_h(x)))
    if not j.mc_compensation:
        raise UnsupportedConfigurationError(
            "non-centred marks require mc_compensation=True for the compensator")
    if rng is None:
        raise InvalidParameterError("Monte Carlo compensation needs a random generator")
    idx, val = draw_marks(j, j.mc_samples, rng)
    mean_z = np.zeros(model.n_coords)
    np.add.at(mean_z, idx, val)
    mean_z /= j.mc_samples
    phi = j.phi(sp.norm_h(x))
    return sp.state_from_coords(np.multiply.outer(phi * j.intensity, mean_z), x.s)


# -- per-path streams ----------------------------------------------------------

def path_seed_sequence(seed: int, path_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))


class PathNoise:
    """Random streams and jump schedule of one path."""

    def __init__(self, model: NoiseModel, seed: int, path_index: int, t_end: float):
        self.model = model
        self.seed = int(seed)
        self.path_index = int(path_index)
        self.t_end = float(t_end)
        g_ss, j_ss, c_ss = path_seed_sequence(seed, path_index).spawn(3)
        self.gauss = np.random.Generator(np.random.Philox(g_ss))
        self.comp = np.random.Generator(np.random.Philox(c_ss))
        jrng = np.random.Generator(np.random.Philox(j_ss))
        j = model.jump
        n = int(jrng.poisson(j.intensity * t_end)) if j.intensity > 0 else 0
        self.jump_times = np.sort(jrng.uniform(0.0, t_end, size=n))
        self.jump_index, self.jump_value = draw_marks(j, n, jrng)
        self.cursor = 0

    def wiener(self, dt: float) -> np.ndarray:
        """Increment on the Q-support prefix."""
        d = self.model.wiener.support
        if d == 0 or not self.model.sigma_possible:
            return np.zeros(d)
        return np.sqrt(self.model.wiener.q[:d] * dt) * self.gauss.standard_normal(d)

    def marks_until(self, t1: float) -> tuple[np.ndarray, np.ndarray]:
        """Consume the marks with jump time <= t1."""
        stop = int(np.searchsorted(self.jump_times, t1, side="right"))
        sl = slice(self.cursor, stop)
        self.cursor = max(stop, self.cursor)
        return self.jump_index[sl], self.jump_value[sl]

    def marks_in_step(self, step: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Consume the marks binned into step ``step`` (times in (step dt, (step+1) dt])."""
        if not hasattr(self, "_bins") or self._bins_dt != dt:
            self._bins = np.maximum(np.ceil(self.jump_times / dt).astype(np.int64) - 1, 0)
            self._bins_dt = dt
        stop = int(np.searchsorted(self._bins, step, side="right"))
        sl = slice(self.cursor, stop)
        self.cursor = max(stop, self.cursor)
        return self.jump_index[sl], self.jump_value[sl]

    def get_state(self) -> dict:
        return {"gauss": _jsonable(self.gauss.bit_generator.state),
                "comp": _jsonable(self.comp.bit_generator.state),
                "cursor": self.cursor}

    def set_state(self, state: dict):
        self.gauss.bit_generator.state = _from_jsonable(state["gauss"])
        self.comp.bit_generator.state = _from_jsonable(state["comp"])
        self.cursor = int(state["cursor"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj
