"""Experiment configuration: INI or JSON, fully defaulted, round-trippable.

INI files use the sections ``run``, ``physical``, ``discretization``,
``noise``, ``initial`` and ``experiment``; the JSON form is the same mapping
nested one level.  ``dump_ini`` writes every field explicitly so the echo of
a run reproduces it.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import spectral as sp
from .errors import InvalidParameterError
from .integrator import IntegratorConfig
from .noise import JumpSpec, NoiseModel, SigmaFamily, WienerSpec
from .operators import OperatorContext, make_context


class ConfigError(InvalidParameterError):
    """Malformed configuration; the message names the field and, when known, the line."""


@dataclass
class RunSection:
    seed: int = 20240607


@dataclass
class PhysicalSection:
    re: float = 1.0
    rm: float = 1.0
    s: float = 1.0


@dataclass
class DiscretizationSection:
    cutoff: int = 16
    dt: float = 0.01
    t_end: float = 1.0
    record_every: int = 1
    n_modes: int = 0
    dealias_grid: int = 0
    chunk_size: int = 32
    nonlinear: bool = True


@dataclass
class NoiseSection:
    q_trace: float = 0.05
    q_k2_max: int = 2
    q_decay: float = 0.0
    sigma_kind: str = "additive"
    alpha: float = 1.0
    beta: float = 0.0
    jump_intensity: float = 5.0
    mark_amp: float = 0.1
    mark_modes: int = 16
    g_kind: str = "additive"
    gamma0: float = 1.0
    gamma1: float = 0.0
    mark_mean: float = 0.0
    mc_compensation: bool = False


@dataclass
class InitialSection:
    kind: str = "random"
    h_norm: float = 1.0
    slope: float = 2.0
    support: int = 0
    seed: int = 7
    kind_b: str = "zero"
    h_norm_b: float = 1.0
    seed_b: int = 8


@dataclass
class ExperimentSection:
    m_paths: int = 1000
    p: float = 4.0
    delta: float = 0.05
    eps: float = 0.5
    r: float = 1.0
    samples: int = 10000
    cutoffs: str = "8,16,32"
    burn_in: float = -1.0
    n_batches: int = 20
    perturbation: float = 1e-8
    ladyzhenskaya_constant: float = 0.0

    def cutoff_list(self) -> list[int]:
        return [int(c) for c in str(self.cutoffs).replace(" ", "").split(",") if c]


SECTIONS = {
    "run": RunSection,
    "physical": PhysicalSection,
    "discretization": DiscretizationSection,
    "noise": NoiseSection,
    "initial": InitialSection,
    "experiment": ExperimentSection,
}


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    physical: PhysicalSection = field(default_factory=PhysicalSection)
    discretization: DiscretizationSection = field(default_factory=DiscretizationSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    initial: InitialSection = field(default_factory=InitialSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    @property
    def seed(self) -> int:
        return self.run.seed

    # -- builders ---------------------------------------------------------------

    def basis(self, cutoff: int | None = None):
        ph = self.physical
        return sp.make_basis(cutoff or self.discretization.cutoff, ph.re, ph.rm, ph.s)

    def context(self, cutoff: int | None = None) -> OperatorContext:
        g = self.discretization.dealias_grid or None
        if cutoff is not None and cutoff != self.discretization.cutoff:
            g = None
        return make_context(self.basis(cutoff), g)

    def noise_model(self, cutoff: int | None = None, scale: float = 1.0) -> NoiseModel:
        """Noise model; ``scale`` multiplies the sigma and g amplitudes."""
        n = cutoff or self.discretization.cutoff
        nz = self.noise
        wiener = WienerSpec.shell(n, nz.q_trace, nz.q_k2_max, nz.q_decay)
        sigma = SigmaFamily(nz.sigma_kind, scale * nz.alpha, scale * nz.beta)
        jump = JumpSpec(intensity=nz.jump_intensity, mark_amp=nz.mark_amp,
                        mark_modes=nz.mark_modes, g_kind=nz.g_kind,
                        gamma0=scale * nz.gamma0, gamma1=scale * nz.gamma1,
                        mark_mean=nz.mark_mean, mc_compensation=nz.mc_compensation)
        return NoiseModel(wiener, sigma, jump)

    def integrator(self, **overrides) -> IntegratorConfig:
        d = self.discretization
        kw = dict(dt=d.dt, t_end=d.t_end, record_every=d.record_every,
                  n_modes=d.n_modes or None, chunk_size=d.chunk_size, nonlinear=d.nonlinear)
        kw.update(overrides)
        return IntegratorConfig(**kw)

    def initial_state(self, which: str = "a", cutoff: int | None = None) -> sp.MhdState:
        """Deterministic initial state built from the ``initial`` section.

        ``random`` draws a smooth state on the modes of the configured cutoff
        (or of ``support`` when set), so refined cutoffs receive the same field
        padded with zeros.
        """
        ini = self.initial
        kind, h, seed = ((ini.kind, ini.h_norm, ini.seed) if which == "a"
                         else (ini.kind_b, ini.h_norm_b, ini.seed_b))
        n = cutoff or self.discretization.cutoff
        s = self.physical.s
        base_n = min(n, self.discretization.cutoff)
        if ini.support:
            base_n = min(base_n, ini.support)
        if kind == "zero":
            return sp.MhdState.zeros(n, s)
        if kind == "random":
            x = sp.random_state(base_n, s, np.random.default_rng(seed), slope=ini.slope,
                                h_norm=h)
        elif kind == "mode":
            ms = sp.wave_indices(base_n)
            u = np.zeros(ms.k1.size, complex)
            u[0] = h
            x = sp.MhdState.from_arrays(u, np.zeros_like(u), s)
        else:
            raise ConfigError(f"initial.kind: unknown initial state kind {kind!r}")
        return embed(x, n)

    def validate(self) -> None:
        """Build every derived object once so bad values fail at load time."""
        ctx = self.context()
        self.noise_model()
        self.integrator()
        self.initial_state("a")
        self.initial_state("b")
        if ctx.cutoff ** 2 < self.noise.q_k2_max:
            raise ConfigError("noise.q_k2_max exceeds the cutoff shell")

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def dump_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for k, v in dataclasses.asdict(getattr(self, name)).items():
                lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, pairs: list[str]) -> ExperimentConfig:
        data = self.to_dict()
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            key, value = item.split("=", 1)
            if "." not in key:
                raise ConfigError(f"override key {key!r} needs a section prefix")
            sec, k = key.strip().split(".", 1)
            if sec not in data or k not in data[sec]:
                raise ConfigError(f"unknown field {key.strip()!r}")
            data[sec][k] = value.strip()
        return from_mapping(data)


def embed(x: sp.MhdState, cutoff: int) -> sp.MhdState:
    """Zero-pad (or truncate) a state to another cutoff, matching wavevectors."""
    if x.cutoff == cutoff:
        return x
    src, dst = sp.wave_indices(x.cutoff), sp.wave_indices(cutoff)
    index = {(a, b): i for i, (a, b) in enumerate(zip(dst.k1.tolist(), dst.k2.tolist()))}
    u = np.zeros(x.u.coeffs.shape[:-1] + (dst.k1.size,), complex)
    b = np.zeros_like(u)
    for i, key in enumerate(zip(src.k1.tolist(), src.k2.tolist())):
        j = index.get(key)
        if j is not None:
            u[..., j] = x.u.coeffs[..., i]
            b[..., j] = x.b.coeffs[..., i]
    return sp.MhdState.from_arrays(u, b, x.s, cutoff)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(section: str, name: str, typ, raw, where: str = ""):
    try:
        if typ is bool or typ == "bool":
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int or typ == "int":
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(f"not an integer: {raw!r}")
            return int(str(raw).strip()) if not isinstance(raw, (int, float)) else int(raw)
        if typ is float or typ == "float":
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError(f"not finite: {raw!r}")
            return val
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"{section}.{name}{where}: {exc}") from None


def from_mapping(data: dict, lines: dict | None = None) -> ExperimentConfig:
    """Typed config from a nested mapping; unknown sections or keys are errors."""
    lines = lines or {}
    kwargs = {}
    for sec, values in data.items():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]{lines.get((sec, None), '')}")
        cls = SECTIONS[sec]
        known = {f.name: f.type for f in fields(cls)}
        sec_kw = {}
        for k, v in (values or {}).items():
            if k not in known:
                raise ConfigError(f"unknown field {sec}.{k}{lines.get((sec, k), '')}")
            sec_kw[k] = _convert(sec, k, known[k], v, lines.get((sec, k), ""))
        kwargs[sec] = cls(**sec_kw)
    cfg = ExperimentConfig(**kwargs)
    return cfg


def _line_map(text: str) -> dict:
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
            out[(sec, None)] = f" (line {i})"
        elif sec and "=" in s and not s.startswith(("#", ";")):
            out[(sec, s.split("=", 1)[0].strip())] = f" (line {i})"
    return out


def loads(text: str, fmt: str | None = None) -> ExperimentConfig:
    stripped = text.lstrip()
    if fmt == "json" or (fmt is None and stripped.startswith("{")):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON parse error at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object of sections")
        return from_mapping(data)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    data = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    return from_mapping(data, _line_map(text))


def load(path) -> ExperimentConfig:
    """Load a config file, or a shipped one by the name ``builtin:<name>``."""
    p = str(path)
    if p.startswith("builtin:"):
        return loads(builtin_text(p.split(":", 1)[1]))
    text = Path(p).read_text(encoding="utf-8")
    return loads(text, "json" if p.endswith(".json") else None)


def builtin_names() -> list[str]:
    root = resources.files("stochmhd") / "configs"
    return sorted(f.name[:-4] for f in root.iterdir() if f.name.endswith(".ini"))


def builtin_text(name: str) -> str:
    res = resources.files("stochmhd") / "configs" / f"{name}.ini"
    if not res.is_file():
        raise ConfigError(f"no shipped config named {name!r}; choose from {builtin_names()}")
    return res.read_text(encoding="utf-8")


def default_config() -> ExperimentConfig:
    return loads(builtin_text("default"))
