"""Semi-implicit Euler scheme for the Galerkin SDE, single and coupled paths.

One step maps x to

    (I + dt A)^{-1} [x - dt B(x) + sigma(x) dW + sum_i g(x, z_i) - dt comp(x)]

with the jumps of (t, t + dt] evaluated at the pre-step state.  Paths are
advanced in batches of shape (paths, lanes, modes); lanes of one path share
every random number, which is how coupled pairs are produced.  Batches have
a fixed composition (``chunk_size``) and are distributed over threads, so the
output does not depend on the thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import spectral as sp
from .errors import BlowUpError, InvalidParameterError, UnsupportedConfigurationError
from .noise import (Mark, NoiseModel, PathNoise, compensator_drift, sample_jumps,
                    sample_wiener_increment)
from .operators import OperatorContext
from .spectral import MhdState

CHECKPOINT_VERSION = 1
SCHEMES = ("semi-implicit-euler",)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    n_modes: int | None = None
    scheme: str = "semi-implicit-euler"
    record_every: int = 1
    record_states: bool = False
    record_l4: bool = False
    n_coeffs: int = 4
    nonlinear: bool = True
    track_martingale: bool = False
    chunk_size: int = 32

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise InvalidParameterError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise InvalidParameterError("dt must not exceed t_end")
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}")
        if self.record_every < 1 or self.chunk_size < 1:
            raise InvalidParameterError("record_every and chunk_size must be >= 1")
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise InvalidParameterError("t_end must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def record_steps(self) -> np.ndarray:
        s = np.arange(0, self.n_steps + 1, self.record_every)
        return s if s[-1] == self.n_steps else np.append(s, self.n_steps)

    def record_times(self) -> np.ndarray:
        t = self.record_steps() * self.dt
        t[-1] = self.t_end
        return t


@dataclass(eq=False)
class PathRecord:
    """Recorded observables of one trajectory.

    ``h2`` is |x|^2, ``energy`` is a(x, x), ``v2`` the squared gradient norm,
    ``sup_h2`` the running maximum of |x|^2 over all steps and ``int_energy``
    the integral of a(x, x) up to each recorded time, summed at the right
    endpoint of every step (the rule matching the implicit step).
    """

    times: np.ndarray
    h2: np.ndarray
    energy: np.ndarray
    v2: np.ndarray
    sup_h2: np.ndarray
    int_energy: np.ndarray
    coeffs: np.ndarray
    jump_count: int
    seed: int
    path_index: int
    l4_4: np.ndarray | None = None
    martingale: np.ndarray | None = None
    martingale_sup: np.ndarray | None = None
    states_u: np.ndarray | None = None
    states_b: np.ndarray | None = None
    final_u: np.ndarray | None = None
    final_b: np.ndarray | None = None
    aborted_at: float | None = None

    def final_state(self, s: float) -> MhdState:
        return MhdState.from_arrays(self.final_u, self.final_b, s)

    def state_at(self, i: int, s: float) -> MhdState:
        if self.states_u is None:
            raise InvalidParameterError("states were not recorded")
        return MhdState.from_arrays(self.states_u[i], self.states_b[i], s)

    def same_as(self, other: PathRecord) -> bool:
        """Bit-level equality of every recorded array."""
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.shape != b.shape or a.tobytes() != b.tobytes():
                    return False
            elif a != b:
                return False
        return True


@dataclass(eq=False)
class CoupledRecord:
    """Two trajectories driven by one noise realization, plus w = x - y."""

    x: PathRecord
    y: PathRecord
    times: np.ndarray
    w_h2: np.ndarray
    w_energy: np.ndarray
    int_y_energy: np.ndarray


@dataclass(eq=False)
class Checkpoint:
    """Restart point of a single-lane path."""

    step: int
    time: float
    cutoff: int
    re: float
    rm: float
    s: float
    seed: int
    path_index: int
    u: np.ndarray
    b: np.ndarray
    noise_state: dict
    accum: dict

    def to_json(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION, "step": self.step, "time": self.time,
            "cutoff": self.cutoff, "re": self.re, "rm": self.rm, "s": self.s,
            "seed": self.seed, "path_index": self.path_index,
            "u_re": self.u.real.tolist(), "u_im": self.u.imag.tolist(),
            "b_re": self.b.real.tolist(), "b_im": self.b.imag.tolist(),
            "noise_state": self.noise_state, "accum": self.accum,
        }

    @classmethod
    def from_json(cls, d: dict) -> Checkpoint:
        if d.get("version") != CHECKPOINT_VERSION:
            raise InvalidParameterError(f"unsupported checkpoint version {d.get('version')}")
        return cls(step=int(d["step"]), time=float(d["time"]), cutoff=int(d["cutoff"]),
                   re=float(d["re"]), rm=float(d["rm"]), s=float(d["s"]),
                   seed=int(d["seed"]), path_index=int(d["path_index"]),
                   u=np.array(d["u_re"]) + 1j * np.array(d["u_im"]),
                   b=np.array(d["b_re"]) + 1j * np.array(d["b_im"]),
                   noise_state=d["noise_state"], accum=d["accum"])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_text(json.dumps(ckpt.to_json()))


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_json(json.loads(Path(path).read_text()))


# -- batch engine --------------------------------------------------------------

class _Batch:
    """Advances P paths x L lanes; lanes of a path share all noise."""

    def __init__(self, ctx: OperatorContext, model: NoiseModel, cfg: IntegratorConfig,
                 u0: np.ndarray, b0: np.ndarray, noises: list[PathNoise]):
        basis = ctx.basis
        if model.cutoff != basis.cutoff:
            raise InvalidParameterError(
                f"noise model cutoff {model.cutoff} differs from basis cutoff {basis.cutoff}")
        self.ctx, self.model, self.cfg = ctx, model, cfg
        self.dt = cfg.dt
        self.s = basis.s
        mask_u, mask_b = sp.projection_masks(basis.cutoff, cfg.n_modes)
        self.res_u = mask_u / (1.0 + cfg.dt * basis.eigs_u)
        self.res_b = mask_b / (1.0 + cfg.dt * basis.eigs_b)
        self.ksq = sp.wave_indices(basis.cutoff).ksq.astype(float)
        self.u = np.ascontiguousarray(np.where(mask_u, u0, 0), dtype=complex)
        self.b = np.ascontiguousarray(np.where(mask_b, b0, 0), dtype=complex)
        self.noises = noises
        self.P, self.L = self.u.shape[:2]

        self.D = model.prefix
        self.Dw = model.wiener.support if model.sigma_possible else 0
        ms = sp.wave_indices(basis.cutoff)
        c = np.arange(self.D)
        f, m, part = ms.coord_field[c], ms.coord_mode[c], ms.coord_part[c]
        self._groups = []
        for fld in (0, 1):
            for prt in (0, 1):
                sel = (f == fld) & (part == prt)
                self._groups.append((fld, prt, c[sel], m[sel]))
        self.n_coeffs = min(cfg.n_coeffs, 4 * basis.n_modes)
        jump = model.jump
        self.state_sigma = model.sigma.kind != "additive"
        self.state_g = jump.g_kind != "additive"
        self.comp = jump.intensity > 0 and jump.mark_mean != 0
        if self.comp and not jump.mc_compensation:
            raise UnsupportedConfigurationError(
                "non-centred marks require mc_compensation=True for the compensator")
        self.z2 = jump.intensity * jump.mark_moment(2) if jump.intensity > 0 else 0.0

        self.step_index = 0
        shape = (self.P, self.L)
        h2 = self._h2()
        self.sup_h2 = h2.copy()
        self.int_en = np.zeros(shape)
        self.en = ctx.energy_arrays(self.u, self.b)
        self.jumps = np.zeros(self.P, dtype=np.int64)
        self.mart = np.zeros(shape)
        self.mart_sup = np.zeros(shape)
        self.aborted = np.full(self.P, np.nan)

    # coordinates of the noise prefix
    def _gather(self, u, b):
        xi = np.empty(u.shape[:-1] + (self.D,))
        rs = math.sqrt(self.s)
        for fld, prt, cs, ms in self._groups:
            src = u if fld == 0 else b
            vals = src[..., ms].real if prt == 0 else src[..., ms].imag
            xi[..., cs] = vals if fld == 0 else rs * vals
        return xi

    def _scatter(self, incr):
        du = np.zeros(self.u.shape, complex)
        db = np.zeros(self.b.shape, complex)
        inv = 1.0 / math.sqrt(self.s)
        for fld, prt, cs, ms in self._groups:
            dst = du if fld == 0 else db
            vals = incr[..., cs] if fld == 0 else inv * incr[..., cs]
            if prt == 0:
                dst.real[..., ms] = vals
            else:
                dst.imag[..., ms] = vals
        return du, db

    def _h2(self, u=None, b=None):
        u = self.u if u is None else u
        b = self.b if b is None else b
        return (np.sum(u.real ** 2 + u.imag ** 2, -1)
                + self.s * np.sum(b.real ** 2 + b.imag ** 2, -1))

    def _v2(self):
        u, b = self.u, self.b
        return np.sum(self.ksq * (u.real ** 2 + u.imag ** 2 + self.s * (b.real ** 2 + b.imag ** 2)), -1)

    def coeffs(self):
        return sp.to_coords(self.u, self.b, self.s)[..., :self.n_coeffs]

    def advance(self):
        dt, step = self.dt, self.step_index
        u, b = self.u, self.b
        if self.cfg.nonlinear:
            bu, bb = self.ctx.b_arrays(u, b, u, b)
            ru, rb = u - dt * bu, b - dt * bb
        else:
            ru, rb = u.copy(), b.copy()
        track = self.cfg.track_martingale
        if self.D:
            incr = np.zeros((self.P, self.L, self.D))
            need_xi = self.state_sigma or track or self.comp
            xi = self._gather(u, b) if need_xi else None
            need_norm = self.state_g or track or self.comp
            hn = np.sqrt(self._h2(u, b)) if need_norm else None
            dmart = np.zeros((self.P, self.L)) if track else None
            if self.Dw:
                dw = np.stack([nz.wiener(dt) for nz in self.noises])[:, None, :]
                sig = (self.model.sigma.entries(xi[..., :self.Dw]) if self.state_sigma
                       else self.model.sigma.alpha)
                sdw = sig * dw
                incr[..., :self.Dw] += sdw
                if track:
                    dmart += 2.0 * np.sum(xi[..., :self.Dw] * sdw, -1)
            jump = self.model.jump
            if jump.intensity > 0:
                phi = jump.phi(hn) if self.state_g else np.full((self.P, self.L), jump.gamma0)
                for p, nz in enumerate(self.noises):
                    idx, val = nz.marks_in_step(step, dt)
                    if idx.size:
                        self.jumps[p] += idx.size
                        contrib = phi[p][:, None] * val[None, :]
                        np.add.at(incr[p], (slice(None), idx), contrib)
                        if track:
                            dmart[p] += np.sum(contrib ** 2 + 2.0 * contrib * xi[p][:, idx], -1)
                if self.comp:
                    mean_z = np.stack([self._mc_mean(nz) for nz in self.noises])
                    incr -= dt * jump.intensity * phi[..., None] * mean_z[:, None, :]
                if track:
                    comp = phi ** 2 * self.z2
                    if jump.mark_mean != 0:
                        comp = comp + 2.0 * phi * jump.intensity * jump.mark_mean * np.mean(
                            xi[..., :jump.mark_modes], -1)
                    dmart -= dt * comp
            du, db = self._scatter(incr)
            ru += du
            rb += db
            if track:
                self.mart += dmart
                np.maximum(self.mart_sup, np.abs(self.mart), out=self.mart_sup)
        # C order keeps reductions independent of the batch composition
        self.u = np.ascontiguousarray(self.res_u * ru)
        self.b = np.ascontiguousarray(self.res_b * rb)
        self.step_index += 1
        self._check_finite()
        en = self.ctx.energy_arrays(self.u, self.b)
        # right-endpoint sum: the quadrature under which the implicit step is energy-stable
        self.int_en += dt * en
        self.en = en
        np.maximum(self.sup_h2, self._h2(), out=self.sup_h2)

    def _mc_mean(self, nz: PathNoise):
        jump = self.model.jump
        idx = nz.comp.integers(0, jump.mark_modes, size=jump.mc_samples)
        val = jump.mark_amp * nz.comp.standard_normal(jump.mc_samples) + jump.mark_mean
        out = np.zeros(self.D)
        np.add.at(out, idx, val)
        return out / jump.mc_samples

    def _check_finite(self):
        ok = np.isfinite(self.u).all(axis=(1, 2)) & np.isfinite(self.b).all(axis=(1, 2))
        if ok.all():
            return
        t = self.step_index * self.dt
        bad = np.flatnonzero(~ok)
        fresh = bad[np.isnan(self.aborted[bad])]
        self.aborted[fresh] = t
        self.u[bad] = 0
        self.b[bad] = 0

    def snapshot(self) -> dict:
        out = {"h2": self._h2(), "energy": self.en.copy(), "v2": self._v2(),
               "sup_h2": self.sup_h2.copy(), "int_energy": self.int_en.copy(),
               "coeffs": self.coeffs(), "jumps": self.jumps.copy()}
        if self.cfg.record_l4:
            out["l4_4"] = sp.norm_l4(MhdState.from_arrays(self.u, self.b, self.s)) ** 4
        if self.cfg.track_martingale:
            out["martingale"] = self.mart.copy()
            out["martingale_sup"] = self.mart_sup.copy()
        if self.cfg.record_states:
            out["states_u"] = self.u.copy()
            out["states_b"] = self.b.copy()
        return out

    def run(self, on_checkpoint=None, checkpoint_every: int | None = None) -> list[list[PathRecord]]:
        cfg = self.cfg
        rec_steps = cfg.record_steps()
        rec_steps = rec_steps[rec_steps >= self.step_index]
        times = rec_steps * cfg.dt
        if times.size and rec_steps[-1] == cfg.n_steps:
            times[-1] = cfg.t_end
        snaps = []
        k = 0
        # overflow is caught by the finiteness check after each step
        with np.errstate(over="ignore", invalid="ignore"):
            if k < rec_steps.size and rec_steps[k] == self.step_index:
                snaps.append(self.snapshot())
                k += 1
            while self.step_index < cfg.n_steps:
                self.advance()
                if k < rec_steps.size and rec_steps[k] == self.step_index:
                    snaps.append(self.snapshot())
                    k += 1
                if (on_checkpoint is not None and checkpoint_every
                        and self.step_index % checkpoint_every == 0 and self.step_index < cfg.n_steps):
                    on_checkpoint(self.checkpoint())
        return self._records(times, snaps)

    def _records(self, times, snaps) -> list[list[PathRecord]]:
        stacked = {key: np.stack([s[key] for s in snaps]) for key in snaps[0]}
        out = []
        for p, nz in enumerate(self.noises):
            lanes = []
            for lane in range(self.L):
                def col(key):
                    return stacked[key][:, p, lane] if key in stacked else None
                ab = self.aborted[p]
                lanes.append(PathRecord(
                    times=times.copy(), h2=col("h2"), energy=col("energy"), v2=col("v2"),
                    sup_h2=col("sup_h2"), int_energy=col("int_energy"), coeffs=col("coeffs"),
                    jump_count=int(self.jumps[p]), seed=nz.seed, path_index=nz.path_index,
                    l4_4=col("l4_4"), martingale=col("martingale"),
                    martingale_sup=col("martingale_sup"),
                    states_u=col("states_u"), states_b=col("states_b"),
                    final_u=self.u[p, lane].copy(), final_b=self.b[p, lane].copy(),
                    aborted_at=None if np.isnan(ab) else float(ab)))
            out.append(lanes)
        return out

    def checkpoint(self) -> Checkpoint:
        if self.P != 1 or self.L != 1:
            raise InvalidParameterError("checkpoints are written for single-lane paths")
        basis = self.ctx.basis
        nz = self.noises[0]
        accum = {"sup_h2": float(self.sup_h2[0, 0]), "int_en": float(self.int_en[0, 0]),
                 "en": float(self.en[0, 0]), "jumps": int(self.jumps[0]),
                 "mart": float(self.mart[0, 0]), "mart_sup": float(self.mart_sup[0, 0])}
        return Checkpoint(step=self.step_index, time=self.step_index * self.dt,
                          cutoff=basis.cutoff, re=basis.re, rm=basis.rm, s=basis.s,
                          seed=nz.seed, path_index=nz.path_index,
                          u=self.u[0, 0].copy(), b=self.b[0, 0].copy(),
                          noise_state=nz.get_state(), accum=accum)

    def restore(self, ck: Checkpoint):
        self.step_index = ck.step
        self.u = np.ascontiguousarray(ck.u.reshape(1, 1, -1), dtype=complex)
        self.b = np.ascontiguousarray(ck.b.reshape(1, 1, -1), dtype=complex)
        self.noises[0].set_state(ck.noise_state)
        a = ck.accum
        self.sup_h2[:] = a["sup_h2"]
        self.int_en[:] = a["int_en"]
        self.en[:] = a["en"]
        self.jumps[:] = a["jumps"]
        self.mart[:] = a["mart"]
        self.mart_sup[:] = a["mart_sup"]


def _lanes(states: list[MhdState], n_paths: int, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack initial states into (P, L, M) arrays, broadcasting unbatched states."""
    us, bs = [], []
    for x in states:
        if x.cutoff != cutoff:
            raise InvalidParameterError(f"initial state cutoff {x.cutoff} differs from {cutoff}")
        us.append(np.broadcast_to(x.u.coeffs, (n_paths, x.u.coeffs.shape[-1])))
        bs.append(np.broadcast_to(x.b.coeffs, (n_paths, x.b.coeffs.shape[-1])))
    return np.stack(us, axis=1), np.stack(bs, axis=1)


def _run_paths(ctx, model, cfg, states, seed, path_indices, threads=1):
    """Run the given path indices in fixed chunks; returns per-path lane lists."""
    u0, b0 = _lanes(states, len(path_indices), ctx.cutoff)
    chunks = [slice(i, min(i + cfg.chunk_size, len(path_indices)))
              for i in range(0, len(path_indices), cfg.chunk_size)]

    def work(sl):
        noises = [PathNoise(model, seed, int(i), cfg.t_end) for i in path_indices[sl]]
        return _Batch(ctx, model, cfg, u0[sl], b0[sl], noises).run()

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(sl) for sl in chunks]
    return [lanes for part in parts for lanes in part]


def _raise_if_aborted(rec: PathRecord):
    if rec.aborted_at is not None:
        raise BlowUpError(rec.aborted_at,
                          f"non-finite state at t={rec.aborted_at:.6g} on path {rec.path_index}",
                          paths=[rec.path_index])


# -- public API ----------------------------------------------------------------

def step(ctx: OperatorContext, model: NoiseModel, x: MhdState, t: float, dt: float,
         rng: np.random.Generator, nonlinear: bool = True) -> MhdState:
    """One scheme step drawing the Wiener increment, then the jumps, from ``rng``."""
    ctx.check(x)
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    basis = ctx.basis
    u, b = x.u.coeffs, x.b.coeffs
    if nonlinear:
        bu, bb = ctx.b_arrays(u, b, u, b)
        ru, rb = u - dt * bu, b - dt * bb
    else:
        ru, rb = u.copy(), b.copy()
    xi = x.coords()
    incr = np.zeros(xi.shape)
    if model.sigma_possible and model.wiener.support:
        incr += model.sigma.entries(xi) * sample_wiener_increment(model.wiener, dt, rng)
    marks: list[Mark] = sample_jumps(model.jump, dt, rng)
    if marks:
        phi = model.jump.phi(sp.norm_h(x))
        for mk in marks:
            incr[..., mk.index] += phi * mk.value
    if model.jump.intensity > 0 and model.jump.mark_mean != 0:
        comp = compensator_drift(model, x, rng)
        incr -= dt * comp.coords()
    du, db = sp.from_coords(incr, x.s)
    u1 = (ru + du) / (1.0 + dt * basis.eigs_u)
    b1 = (rb + db) / (1.0 + dt * basis.eigs_b)
    if not (np.isfinite(u1).all() and np.isfinite(b1).all()):
        raise BlowUpError(t + dt)
    return MhdState.from_arrays(u1, b1, x.s, x.cutoff)


def simulate_path(ctx: OperatorContext, model: NoiseModel, cfg: IntegratorConfig, x0: MhdState,
                  seed: int, path_index: int = 0, *, checkpoint_every: int | None = None,
                  on_checkpoint=None, resume: Checkpoint | None = None) -> PathRecord:
    """Deterministic function of (config, x0, seed, path_index)."""
    ctx.check(x0)
    if resume is not None:
        b = ctx.basis
        if (resume.cutoff, resume.re, resume.rm, resume.s) != (b.cutoff, b.re, b.rm, b.s):
            raise InvalidParameterError("checkpoint does not match the operator context")
        if (resume.seed, resume.path_index) != (int(seed), int(path_index)):
            raise InvalidParameterError("checkpoint belongs to a different stream")
    u0, b0 = _lanes([x0], 1, ctx.cutoff)
    batch = _Batch(ctx, model, cfg, u0, b0, [PathNoise(model, seed, path_index, cfg.t_end)])
    if resume is not None:
        batch.restore(resume)
    rec = batch.run(on_checkpoint=on_checkpoint, checkpoint_every=checkpoint_every)[0][0]
    _raise_if_aborted(rec)
    return rec


def simulate_ensemble(ctx: OperatorContext, model: NoiseModel, cfg: IntegratorConfig,
                      x0: MhdState, seed: int, n_paths: int, first_path: int = 0,
                      threads: int = 1) -> list[PathRecord]:
    """Independent paths ``first_path .. first_path + n_paths - 1``.

    Paths that blow up are kept with ``aborted_at`` set so callers can count them.
    """
    if n_paths < 1:
        raise InvalidParameterError("n_paths must be >= 1")
    ctx.check(x0)
    idx = np.arange(first_path, first_path + n_paths)
    return [lanes[0] for lanes in _run_paths(ctx, model, cfg, [x0], seed, idx, threads)]


def _coupled(x: PathRecord, y: PathRecord, ctx: OperatorContext, cfg: IntegratorConfig):
    if x.states_u is not None:
        du = x.states_u - y.states_u
        db = x.states_b - y.states_b
        s = ctx.s
        w_h2 = np.sum(np.abs(du) ** 2, -1) + s * np.sum(np.abs(db) ** 2, -1)
        w_en = ctx.energy_arrays(du, db)
    else:
        raise InvalidParameterError("coupled runs need recorded states")
    return CoupledRecord(x=x, y=y, times=x.times, w_h2=w_h2, w_energy=w_en,
                         int_y_energy=y.int_energy)


def _check_coupling(model: NoiseModel, stability: bool):
    if stability and not model.additive:
        raise UnsupportedConfigurationError(
            "stability mode requires additive noise (state-independent sigma and g)")


def simulate_coupled(ctx: OperatorContext, model: NoiseModel, cfg: IntegratorConfig,
                     x0: MhdState, y0: MhdState, seed: int, path_index: int = 0,
                     stability: bool = False) -> CoupledRecord:
    """Two trajectories sharing every Wiener increment, jump time and mark."""
    return simulate_coupled_ensemble(ctx, model, cfg, x0, y0, seed, 1, path_index,
                                     stability=stability)[0]


def simulate_coupled_ensemble(ctx: OperatorContext, model: NoiseModel, cfg: IntegratorConfig,
                              x0: MhdState, y0: MhdState, seed: int, n_paths: int,
                              first_path: int = 0, stability: bool = False,
                              threads: int = 1) -> list[CoupledRecord]:
    _check_coupling(model, stability)
    ctx.check(x0, y0)
    cfg = replace(cfg, record_states=True)
    idx = np.arange(first_path, first_path + n_paths)
    out = []
    for x, y in _run_paths(ctx, model, cfg, [x0, y0], seed, idx, threads):
        _raise_if_aborted(x)
        out.append(_coupled(x, y, ctx, cfg))
    return out


# -- CSV -------------------------------------------------------------------------

def write_csv(path, header: list[str], rows) -> None:
    """UTF-8 CSV; floats get 15 significant digits in scientific notation."""
    def fmt(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return f"{float(v):.15e}"

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


PATH_CSV_HEADER = ["path", "t", "h2", "energy", "v2", "sup_h2", "int_energy"]


def path_rows(rec: PathRecord):
    for i, t in enumerate(rec.times):
        yield (rec.path_index, t, rec.h2[i], rec.energy[i], rec.v2[i],
               rec.sup_h2[i], rec.int_energy[i])
