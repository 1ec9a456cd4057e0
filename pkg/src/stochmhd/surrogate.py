"""Scalar Ornstein-Uhlenbeck process with compound-Poisson jumps.

dx = -lam x dt + sigma dW + dJ, where J has intensity nu and N(0, rho^2)
marks.  The process is the one-mode linear version of the Galerkin SDE and is
integrated with the same semi-implicit step, which makes its closed-form
moments a test oracle for the scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class OUParams:
    lam: float = 1.0
    x0: float = 20.0
    sigma: float = 0.5
    nu: float = 2.0
    rho: float = 0.25

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidParameterError("lam must be positive")
        if self.nu < 0 or self.rho < 0:
            raise InvalidParameterError("nu and rho must be nonnegative")

    @property
    def noise_variance_rate(self) -> float:
        """Variance injected per unit time: sigma^2 + nu rho^2."""
        return self.sigma ** 2 + self.nu * self.rho ** 2


def ou_moments(prm: OUParams, t: float) -> tuple[float, float]:
    """Exact E x(t) and E x(t)^2."""
    decay = math.exp(-prm.lam * t)
    mean = prm.x0 * decay
    var = prm.noise_variance_rate * (1.0 - decay ** 2) / (2.0 * prm.lam)
    return mean, mean ** 2 + var


def ou_stationary_second_moment(prm: OUParams) -> float:
    return prm.noise_variance_rate / (2.0 * prm.lam)


def scheme_moments(prm: OUParams, dt: float, n_steps: int) -> tuple[float, float]:
    """Exact moments of the discrete semi-implicit recursion."""
    r = 1.0 / (1.0 + prm.lam * dt)
    mean = prm.x0 * r ** n_steps
    v = prm.noise_variance_rate * dt
    var = v * r * r * (1.0 - r ** (2 * n_steps)) / (1.0 - r * r)
    return mean, mean ** 2 + var


def simulate_ou(prm: OUParams, t_end: float, dt: float, n_paths: int,
                rng: np.random.Generator) -> np.ndarray:
    """Terminal values of ``n_paths`` semi-implicit paths.

    Per step the jump part is the sum of a Poisson(nu dt) number of marks,
    drawn exactly as rho * sqrt(count) * N(0, 1).
    """
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * t_end:
        raise InvalidParameterError("t_end must be a positive multiple of dt")
    x = np.full(n_paths, float(prm.x0))
    res = 1.0 / (1.0 + prm.lam * dt)
    sdt = prm.sigma * math.sqrt(dt)
    for _ in range(n):
        incr = sdt * rng.standard_normal(n_paths)
        if prm.nu > 0:
            counts = rng.poisson(prm.nu * dt, n_paths)
            incr += prm.rho * np.sqrt(counts) * rng.standard_normal(n_paths)
        x = res * (x + incr)
    return x


@dataclass
class MomentEstimate:
    dt: float
    mean: float
    mean_se: float
    second: float
    second_se: float


def estimate_moments(prm: OUParams, t_end: float, dt: float, n_paths: int,
                     rng: np.random.Generator) -> MomentEstimate:
    x = simulate_ou(prm, t_end, dt, n_paths, rng)
    x2 = x * x
    return MomentEstimate(dt, float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_paths)),
                          float(x2.mean()), float(x2.std(ddof=1) / math.sqrt(n_paths)))


@dataclass
class WeakOrderResult:
    estimates: list[MomentEstimate]
    mean_errors: np.ndarray
    second_errors: np.ndarray
    mean_slope: float
    second_slope: float


def fit_slope(dts, errors) -> float:
    """Least-squares slope of log|error| against log dt."""
    return float(np.polyfit(np.log(dts), np.log(np.abs(errors)), 1)[0])


def weak_order_study(prm: OUParams, t_end: float, dts, n_paths: int, seed: int) -> WeakOrderResult:
    """Weak errors of the mean and second moment at ``t_end`` for each dt."""
    exact_m, exact_s = ou_moments(prm, t_end)
    ss = np.random.SeedSequence(seed).spawn(len(dts))
    est = [estimate_moments(prm, t_end, dt, n_paths, np.random.Generator(np.random.Philox(s)))
           for dt, s in zip(dts, ss)]
    em = np.array([e.mean - exact_m for e in est])
    es = np.array([e.second - exact_s for e in est])
    return WeakOrderResult(est, em, es, fit_slope(dts, em), fit_slope(dts, es))
