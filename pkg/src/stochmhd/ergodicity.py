"""Long-time behaviour under additive noise.

Shared-noise stability of two solutions, the martingale ratio M*(t)/t, and
time-averaged (Krylov-Bogoliubov) estimates of the invariant measure on a
fixed battery of observables.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .config import ExperimentConfig
from .errors import InvalidParameterError, UnsupportedConfigurationError
from .estimates import Z95, BoundCheck, VerificationReport
from .integrator import PathRecord, simulate_coupled_ensemble, simulate_ensemble, simulate_path
from .noise import NoiseConstants, NoiseModel

OBSERVABLES = ("h2", "energy", "l4_4", "c0", "c0_sq")
PATHWISE_TOL = 1e-6


def _require_additive(model: NoiseModel):
    if not model.additive:
        raise UnsupportedConfigurationError(
            "this experiment needs additive noise (state-independent sigma and g)")


def condition_value(consts: NoiseConstants, lambda1: float) -> float:
    """2 (M1 + M3) / lambda1."""
    return 2.0 * (consts.M1 + consts.M3) / lambda1


# -- exponential stability -----------------------------------------------------------

@dataclass
class StabilityReport:
    condition_value: float
    condition_met: bool
    times: np.ndarray
    w_trace: np.ndarray
    bound_rhs: np.ndarray
    pathwise_bound_ok: bool
    decay_slope: float
    final_ratio: float
    path_index: int = 0

    @property
    def decayed(self) -> bool:
        return self.final_ratio <= 1e-3


def _decay_slope(t, w2) -> float:
    """Least-squares slope of log |w|^2 over the second half of the horizon."""
    half = t >= 0.5 * t[-1]
    if np.all(w2[half] == 0):
        return -math.inf
    if np.any(w2[half] <= 0):
        return math.nan
    return float(np.polyfit(t[half], np.log(w2[half]), 1)[0])


def _stability_from_pair(pair, lambda1: float, cond: float, path_index: int) -> StabilityReport:
    t = pair.times
    w2 = pair.w_h2
    rhs = w2[0] * np.exp(4.0 * pair.int_y_energy - lambda1 * t)
    ok = bool(np.all(w2 <= rhs * (1.0 + PATHWISE_TOL)))
    ratio = math.sqrt(w2[-1] / w2[0]) if w2[0] > 0 else 0.0
    return StabilityReport(cond, cond < 1, t, w2, rhs, ok, _decay_slope(t, w2), ratio, path_index)


def stability_ensemble(cfg: ExperimentConfig, x0: sp.MhdState | None = None,
                       y0: sp.MhdState | None = None, seed: int | None = None,
                       n_paths: int = 1, threads: int = 1) -> list[StabilityReport]:
    ctx = cfg.context()
    model = cfg.noise_model()
    _require_additive(model)
    consts = model.constants()
    cond = condition_value(consts, ctx.basis.lambda1)
    x0 = cfg.initial_state("a") if x0 is None else x0
    y0 = cfg.initial_state("b") if y0 is None else y0
    seed = cfg.seed if seed is None else seed
    pairs = simulate_coupled_ensemble(ctx, model, cfg.integrator(), x0, y0, seed, n_paths,
                                      stability=True, threads=threads)
    return [_stability_from_pair(p, ctx.basis.lambda1, cond, p.x.path_index) for p in pairs]


def stability_experiment(cfg: ExperimentConfig, x0: sp.MhdState | None = None,
                         y0: sp.MhdState | None = None, seed: int | None = None) -> StabilityReport:
    return stability_ensemble(cfg, x0, y0, seed, 1)[0]


def stability_verdict(reports: list[StabilityReport], cfg: ExperimentConfig,
                      wall: float = 0.0) -> VerificationReport:
    """Pathwise bound on every path; decay on >= 95% of paths; |w(T)|/|w(0)| <= 1e-3."""
    cond = reports[0].condition_value
    bound_fail = sum(not r.pathwise_bound_ok for r in reports)
    slopes = np.array([r.decay_slope for r in reports])
    neg = float(np.mean(slopes < 0))
    worst_ratio = max(r.final_ratio for r in reports)
    checks = [BoundCheck("pathwise_bound", float(bound_fail), 0.0, 0.0,
                         detail={"paths": len(reports)})]
    if cond < 1:
        checks += [
            BoundCheck("negative_slope_fraction", -neg, 0.0, -0.95,
                       detail={"fraction": neg, "median_slope": float(np.median(slopes))}),
            BoundCheck("final_ratio", worst_ratio, 0.0, 1e-3),
        ]
    else:
        checks.append(BoundCheck("condition", cond, 0.0, 1.0, kind="diagnostic"))
    return VerificationReport("stability", checks, cfg.to_dict(), len(reports), 0, wall,
                              {"condition_value": cond, "condition_met": cond < 1,
                               "negative_slope_fraction": neg, "worst_final_ratio": worst_ratio})


# -- martingale ratio -------------------------------------------------------------------------

@dataclass
class MartingaleTrace:
    times: np.ndarray
    martingale: np.ndarray
    running_max: np.ndarray
    ratio: np.ndarray

    @property
    def final_over_max(self) -> float:
        m = float(np.max(self.ratio))
        return float(self.ratio[-1] / m) if m > 0 else 0.0


def _martingale_trace(rec: PathRecord) -> MartingaleTrace:
    t = rec.times[1:]
    return MartingaleTrace(t, rec.martingale[1:], rec.martingale_sup[1:],
                           rec.martingale_sup[1:] / t)


def martingale_ratio(cfg: ExperimentConfig, seed: int | None = None,
                     path_index: int = 0) -> MartingaleTrace:
    """M*(t)/t along one path, accumulated from the integrator's own increments."""
    ctx = cfg.context()
    model = cfg.noise_model()
    _require_additive(model)
    seed = cfg.seed if seed is None else seed
    rec = simulate_path(ctx, model, cfg.integrator(track_martingale=True),
                        cfg.initial_state("a"), seed, path_index)
    return _martingale_trace(rec)


def martingale_ensemble(cfg: ExperimentConfig, n_paths: int, seed: int | None = None,
                        threads: int = 1) -> list[MartingaleTrace]:
    ctx = cfg.context()
    model = cfg.noise_model()
    _require_additive(model)
    seed = cfg.seed if seed is None else seed
    recs = simulate_ensemble(ctx, model, cfg.integrator(track_martingale=True),
                             cfg.initial_state("a"), seed, n_paths, threads=threads)
    return [_martingale_trace(r) for r in recs]


# -- time averages ---------------------------------------------------------------------------

class StreamingAverage:
    """Trapezoidal running integral of a sampled signal over [start, inf)."""

    def __init__(self, start: float):
        self.start = start
        self.total = 0.0
        self.length = 0.0
        self._prev = None

    def update(self, t: float, value: float):
        if t < self.start:
            return
        if self._prev is not None:
            t0, v0 = self._prev
            self.total += 0.5 * (v0 + value) * (t - t0)
            self.length += t - t0
        self._prev = (t, value)

    @property
    def mean(self) -> float:
        return self.total / self.length if self.length > 0 else math.nan


def observable_traces(rec: PathRecord) -> dict:
    if rec.l4_4 is None:
        raise InvalidParameterError("records need record_l4=True for the observable battery")
    c0 = rec.coeffs[:, 0]
    return {"h2": rec.h2, "energy": rec.energy, "l4_4": rec.l4_4, "c0": c0, "c0_sq": c0 * c0,
            "h4": rec.h2 ** 2}


@dataclass
class EmpiricalMeasure:
    """Time averages over [burn_in, t_end] with batch-means 95% bands."""

    names: tuple
    means: dict
    half_widths: dict
    burn_in: float
    t_end: float
    n_paths: int
    n_batches: int
    path_means: dict = field(repr=False, default_factory=dict)

    def band(self, name: str) -> tuple[float, float]:
        m, h = self.means[name], self.half_widths[name]
        return m - h, m + h


def empirical_measure(records: list[PathRecord], burn_in: float, n_batches: int = 20,
                      t_end: float | None = None, names=OBSERVABLES + ("h4",)) -> EmpiricalMeasure:
    """Time averages from recorded traces.

    The window [burn_in, t_end] is cut into ``n_batches`` equal batches per
    path; batch means from all paths are treated as independent samples.
    """
    if n_batches < 20:
        raise InvalidParameterError("batch means need at least 20 batches")
    t = records[0].times
    t_end = float(t[-1]) if t_end is None else t_end
    if not 0 <= burn_in < t_end:
        raise InvalidParameterError("need 0 <= burn_in < t_end")
    edges = np.linspace(burn_in, t_end, n_batches + 1)
    idx = np.searchsorted(t, edges - 1e-9 * max(1.0, t_end))
    if np.any(np.diff(idx) < 1) or idx[-1] >= t.size:
        raise InvalidParameterError("degenerate averaging window for the recorded times")
    means, hws, pmeans = {}, {}, {}
    for name in names:
        batch_vals, path_vals = [], []
        for rec in records:
            f = observable_traces(rec)[name]
            sa = StreamingAverage(t[idx[0]])
            for ti, fi in zip(t[idx[0]:idx[-1] + 1], f[idx[0]:idx[-1] + 1]):
                sa.update(ti, fi)
            path_vals.append(sa.mean)
            for a, b in zip(idx[:-1], idx[1:]):
                seg_t, seg_f = t[a:b + 1], f[a:b + 1]
                batch_vals.append(np.sum(0.5 * (seg_f[1:] + seg_f[:-1]) * np.diff(seg_t))
                                  / (seg_t[-1] - seg_t[0]))
        bv = np.array(batch_vals)
        means[name] = float(np.mean(path_vals))
        hws[name] = float(Z95 * bv.std(ddof=1) / math.sqrt(bv.size))
        pmeans[name] = np.array(path_vals)
    return EmpiricalMeasure(tuple(names), means, hws, burn_in, t_end, len(records), n_batches,
                            pmeans)


def measure_records(cfg: ExperimentConfig, x0: sp.MhdState, seed: int, t_end: float,
                    n_paths: int = 1, threads: int = 1) -> list[PathRecord]:
    ctx = cfg.context()
    model = cfg.noise_model()
    _require_additive(model)
    icfg = cfg.integrator(t_end=t_end, record_l4=True)
    return simulate_ensemble(ctx, model, icfg, x0, seed, n_paths, threads=threads)


def time_average_measure(cfg: ExperimentConfig, x0: sp.MhdState | None = None,
                         seed: int | None = None, t_end: float | None = None,
                         burn_in: float | None = None, n_paths: int = 1,
                         threads: int = 1) -> EmpiricalMeasure:
    """Krylov-Bogoliubov averages; the default burn-in is 20% of t_end."""
    x0 = cfg.initial_state("a") if x0 is None else x0
    seed = cfg.seed if seed is None else seed
    t_end = cfg.discretization.t_end if t_end is None else t_end
    if burn_in is None:
        burn_in = cfg.experiment.burn_in if cfg.experiment.burn_in >= 0 else 0.2 * t_end
    recs = measure_records(cfg, x0, seed, t_end, n_paths, threads)
    return empirical_measure(recs, burn_in, cfg.experiment.n_batches)


def measures_agree(a: EmpiricalMeasure, b: EmpiricalMeasure, names=OBSERVABLES) -> list[BoundCheck]:
    """|mean_a - mean_b| <= hw_a + hw_b for every observable."""
    out = []
    for n in names:
        out.append(BoundCheck(f"agree_{n}", abs(a.means[n] - b.means[n]), 0.0,
                              a.half_widths[n] + b.half_widths[n],
                              detail={"mean_a": a.means[n], "mean_b": b.means[n]}))
    return out


def measure_moment_audit(measure: EmpiricalMeasure, consts: NoiseConstants,
                         doubled: EmpiricalMeasure | None = None,
                         tol_zero: float = 1e-12) -> VerificationReport:
    """mu(a(x,x)) <= K/(2-K) + band, and mu(|x|^4) stable under a horizon doubling."""
    k = consts.K
    checks = []
    if k >= 2:
        checks.append(BoundCheck("energy_moment", measure.means["energy"], 0.0, math.nan,
                                 kind="diagnostic", detail={"skipped": "K >= 2"}))
    else:
        bound = k / (2 - k)
        # the allowance is the band itself: the estimate must sit within it of the bound
        checks.append(BoundCheck("energy_moment", measure.means["energy"], 0.0,
                                 bound + measure.half_widths["energy"] + (tol_zero if k == 0 else 0.0),
                                 detail={"bound": bound, "band": measure.half_widths["energy"]}))
    if doubled is not None:
        a, b = measure.means["h4"], doubled.means["h4"]
        ratio = b / a if a > 0 else (1.0 if b == 0 else math.inf)
        checks.append(BoundCheck("h4_doubling_upper", ratio, 0.0, 2.0,
                                 detail={"mu_T": a, "mu_2T": b}))
        checks.append(BoundCheck("h4_doubling_lower", -ratio, 0.0, -0.5))
    return VerificationReport("moment-audit", checks, {}, measure.n_paths, 0, 0.0,
                              {"K": k, "bound": k / (2 - k) if k < 2 else None})


def invariant_uniqueness_test(cfg: ExperimentConfig, x0_a: sp.MhdState | None = None,
                              x0_b: sp.MhdState | None = None, seeds=None,
                              t_end: float | None = None, burn_in: float | None = None,
                              n_paths: int = 16, threads: int = 1) -> VerificationReport:
    """Two initial states, independent ensembles; observables must agree within bands.

    Also audits the energy moment and the |x|^4 average between t_end/2 and t_end.
    """
    start = time.perf_counter()
    ctx = cfg.context()
    model = cfg.noise_model()
    _require_additive(model)
    consts = model.constants()
    cond = condition_value(consts, ctx.basis.lambda1)
    x0_a = cfg.initial_state("a") if x0_a is None else x0_a
    x0_b = cfg.initial_state("b") if x0_b is None else x0_b
    seeds = (cfg.seed, cfg.seed + 1) if seeds is None else tuple(seeds)
    t_end = cfg.discretization.t_end if t_end is None else t_end
    if burn_in is None:
        burn_in = cfg.experiment.burn_in if cfg.experiment.burn_in >= 0 else 0.2 * t_end
    if cond >= 1:
        check = BoundCheck("stability_condition", cond, 0.0, 1.0, kind="diagnostic",
                           detail={"status": "not applicable"})
        return VerificationReport("uniqueness-of-measure", [check], cfg.to_dict(), 0, 0,
                                  time.perf_counter() - start, {"condition_value": cond})
    nb = cfg.experiment.n_batches
    rec_a = measure_records(cfg, x0_a, seeds[0], t_end, n_paths, threads)
    rec_b = measure_records(cfg, x0_b, seeds[1], t_end, n_paths, threads)
    aborted = sum(r.aborted_at is not None for r in rec_a + rec_b)
    mu_a = empirical_measure(rec_a, burn_in, nb)
    mu_b = empirical_measure(rec_b, burn_in, nb)
    checks = measures_agree(mu_a, mu_b)
    half = 0.5 * t_end
    extras = {"condition_value": cond, "means_a": mu_a.means, "means_b": mu_b.means,
              "bands_a": mu_a.half_widths, "bands_b": mu_b.half_widths}
    for tag, recs, mu in (("a", rec_a, mu_a), ("b", rec_b, mu_b)):
        short = empirical_measure(recs, burn_in, nb, t_end=half) if half > burn_in else None
        audit = measure_moment_audit(short, consts, mu) if short is not None else \
            measure_moment_audit(mu, consts)
        energy = measure_moment_audit(mu, consts).checks[0]
        energy.name = f"energy_moment_{tag}"
        checks.append(energy)
        for c in audit.checks[1:]:
            c.name = f"{c.name}_{tag}"
            checks.append(c)
    return VerificationReport("uniqueness-of-measure", checks, cfg.to_dict(), 2 * n_paths,
                              aborted, time.perf_counter() - start, extras)
