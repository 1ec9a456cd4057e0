"""Command-line experiment runner.

Every subcommand loads a config (a file, or ``builtin:<name>``), applies
``--set section.key=value`` overrides and writes three artifacts to ``--out``:

* ``config.ini``    the fully resolved config; feeding it back reproduces the run
* ``*.csv``         traces and a table of checks
* ``report.jsonl``  one JSON object per check, then a summary line

Exit status: 0 all checks pass, 1 a check failed, 2 the noise violates the
Lipschitz hypothesis (L >= 1), 3 a path blew up, 4 bad config, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import ergodicity as eg
from . import estimates as es
from .config import ExperimentConfig, load
from .errors import BlowUpError, HypothesisViolationError, InvalidParameterError
from .integrator import PATH_CSV_HEADER, path_rows, simulate_ensemble, write_csv

EXIT_OK, EXIT_FAIL, EXIT_HYPOTHESIS, EXIT_BLOWUP, EXIT_CONFIG, EXIT_USAGE = 0, 1, 2, 3, 4, 64

CHECK_CSV_HEADER = ["name", "lhs", "half_width", "rhs", "margin", "pass", "kind"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is taken by hypothesis violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- subcommands ----------------------------------------------------------------------
# each returns (report, {csv name: (header, rows)})

def cmd_simulate(cfg: ExperimentConfig, threads: int):
    recs = simulate_ensemble(cfg.context(), cfg.noise_model(), cfg.integrator(),
                             cfg.initial_state("a"), cfg.seed, cfg.experiment.m_paths,
                             threads=threads)
    aborted = [r for r in recs if r.aborted_at is not None]
    done = [r for r in recs if r.aborted_at is None]
    final = np.array([r.h2[-1] for r in done]) if done else np.array([math.nan])
    m, hw = es.mean_ci(final) if final.size > 1 else (float(final[0]), 0.0)
    checks = [es.BoundCheck("mean_final_h2", m, hw, math.nan, kind="diagnostic"),
              es.BoundCheck("finite_paths", float(len(aborted)), 0.0, 0.0,
                            detail={"aborted_at": [r.aborted_at for r in aborted]})]
    rep = es.VerificationReport("simulate", checks, cfg.to_dict(), len(recs), len(aborted))
    rows = [row for r in recs for row in path_rows(r)]
    return rep, {"paths": (PATH_CSV_HEADER, rows)}


def cmd_energy(cfg, threads):
    return es.verify_energy_bounds(cfg, threads=threads), {}


def cmd_pmoment(cfg, threads):
    return es.verify_pth_moments(cfg, threads=threads), {}


def cmd_monotonicity(cfg, threads):
    return es.monotonicity_campaign(cfg), {}


def cmd_convergence(cfg, threads):
    rep = es.galerkin_convergence(cfg)
    cut = rep.extras["cutoffs"]
    rows = [(cut[i], cut[i + 1], d) for i, d in enumerate(rep.extras["d"])]
    return rep, {"distances": (["cutoff", "next_cutoff", "d"], rows)}


def cmd_replay(cfg, threads):
    n = min(4, cfg.experiment.m_paths)
    return es.pathwise_uniqueness_check(cfg, n_paths=n, thread_counts=(1, max(2, threads))), {}


def cmd_stability(cfg, threads):
    reps = eg.stability_ensemble(cfg, n_paths=cfg.experiment.m_paths, threads=threads)
    rep = eg.stability_verdict(reps, cfg)
    summary = [(r.path_index, r.decay_slope, r.final_ratio, r.pathwise_bound_ok) for r in reps]
    first = reps[0]
    trace = [(t, w, b) for t, w, b in zip(first.times, first.w_trace, first.bound_rhs)]
    return rep, {"paths": (["path", "decay_slope", "final_ratio", "bound_ok"], summary),
                 "w_trace": (["t", "w_h2", "bound"], trace)}


def cmd_martingale(cfg, threads):
    tr = eg.martingale_ratio(cfg)
    ratio = tr.final_over_max
    rep = es.VerificationReport("martingale-ratio", [
        es.BoundCheck("final_over_max", ratio, 0.0, 0.1,
                      detail={"final": float(tr.ratio[-1]), "max": float(tr.ratio.max())})],
        cfg.to_dict(), 1)
    rows = list(zip(tr.times, tr.martingale, tr.running_max, tr.ratio))
    return rep, {"martingale": (["t", "M", "M_sup", "ratio"], rows)}


def _measure_rows(mu: eg.EmpiricalMeasure):
    return [(n, mu.means[n], mu.half_widths[n]) for n in mu.names]


def cmd_invariant(cfg, threads):
    mu = eg.time_average_measure(cfg, n_paths=cfg.experiment.m_paths, threads=threads)
    consts = cfg.noise_model().constants()
    audit = eg.measure_moment_audit(mu, consts)
    rep = es.VerificationReport("invariant-measure", audit.checks, cfg.to_dict(), mu.n_paths, 0,
                                extras={"means": mu.means, "bands": mu.half_widths})
    return rep, {"measure": (["observable", "mean", "half_width"], _measure_rows(mu))}


def cmd_uniqueness_measure(cfg, threads):
    return eg.invariant_uniqueness_test(cfg, n_paths=cfg.experiment.m_paths, threads=threads), {}


def cmd_moment_audit(cfg, threads):
    t_end = cfg.discretization.t_end
    burn = cfg.experiment.burn_in if cfg.experiment.burn_in >= 0 else 0.2 * t_end
    recs = eg.measure_records(cfg, cfg.initial_state("a"), cfg.seed, t_end,
                              cfg.experiment.m_paths, threads)
    nb = cfg.experiment.n_batches
    mu = eg.empirical_measure(recs, burn, nb)
    short = eg.empirical_measure(recs, burn, nb, t_end=0.5 * t_end) if 0.5 * t_end > burn else None
    consts = cfg.noise_model().constants()
    if short is None:
        rep = eg.measure_moment_audit(mu, consts)
    else:
        rep = eg.measure_moment_audit(short, consts, mu)
        rep.checks[0] = eg.measure_moment_audit(mu, consts).checks[0]
    rep.config = cfg.to_dict()
    return rep, {"measure": (["observable", "mean", "half_width"], _measure_rows(mu))}


def cmd_ou(cfg, threads):
    rep = es.ou_validation(n_paths=cfg.experiment.m_paths, seed=cfg.seed)
    rows = list(zip(rep.extras["dts"], rep.extras["mean_errors"], rep.extras["second_errors"]))
    return rep, {"weak_errors": (["dt", "mean_error", "second_error"], rows)}


COMMANDS = {
    "simulate": (cmd_simulate, "integrate an ensemble and write per-path traces"),
    "energy-check": (cmd_energy, "Monte Carlo energy estimates against their bounds"),
    "pmoment-check": (cmd_pmoment, "p-th moment against the Gronwall bound"),
    "monotonicity-check": (cmd_monotonicity, "local monotonicity on random pairs"),
    "convergence": (cmd_convergence, "Galerkin refinement with shared noise"),
    "uniqueness-replay": (cmd_replay, "bit-identical replay across processes and threads"),
    "stability": (cmd_stability, "shared-noise decay of two solutions"),
    "martingale-ratio": (cmd_martingale, "M*(t)/t along one path"),
    "invariant-measure": (cmd_invariant, "time-averaged observables and the energy moment"),
    "uniqueness-of-measure": (cmd_uniqueness_measure, "time averages from two initial states"),
    "moment-audit": (cmd_moment_audit, "moments of the time-averaged measure"),
    "ou-validate": (cmd_ou, "weak order on the scalar OU-with-jumps surrogate"),
}


# -- output ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (set, tuple)):
        return list(v)
    raise TypeError(f"not serializable: {type(v).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, default=_jsonable, sort_keys=True)


def exit_code(rep: es.VerificationReport) -> int:
    if rep.aborted_paths:
        return EXIT_BLOWUP
    return EXIT_OK if rep.passed else EXIT_FAIL


def write_artifacts(out: Path, command: str, cfg: ExperimentConfig, rep: es.VerificationReport,
                    traces: dict, code: int, plot_data: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.dump_ini(), encoding="utf-8")
    checks = [(c.name, c.lhs, c.half_width, c.rhs, c.margin, c.passed, c.kind) for c in rep.checks]
    write_csv(out / "checks.csv", CHECK_CSV_HEADER, checks)
    for name, (header, rows) in traces.items():
        write_csv(out / f"{name}.csv", header, rows)
        if plot_data:
            _write_dat(out / f"{name}.dat", header, rows)
    with open(out / "report.jsonl", "w", encoding="utf-8") as fh:
        for rec in rep.records():
            fh.write(_dumps({"type": "check", **rec}) + "\n")
        fh.write(_dumps({"type": "summary", "command": command, "report": rep.name,
                         "passed": rep.passed, "exit": code, "paths": rep.paths_used,
                         "aborted": rep.aborted_paths, "extras": rep.extras}) + "\n")


def _write_dat(path: Path, header, rows) -> None:
    """Whitespace-separated columns for gnuplot; text columns become a comment."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            cells = [v if isinstance(v, str) else f"{float(v):.15e}" for v in row]
            fh.write(" ".join(cells) + "\n")


# -- entry point --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="builtin:default",
                        help="config file (INI or JSON) or builtin:<name>")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config field; repeatable")
    common.add_argument("--out", default="stochmhd-out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--plot-data", action="store_true", help="also write gnuplot .dat files")
    parser = _Parser(prog="stochmhd", description="Stochastic MHD Galerkin experiments.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                                parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load(args.config)
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if overrides:
        cfg = cfg.with_overrides(overrides)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    func = COMMANDS[args.command][0]
    try:
        cfg = resolve_config(args)
        rep, traces = func(cfg, args.threads)
    except HypothesisViolationError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (InvalidParameterError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = exit_code(rep)
    write_artifacts(Path(args.out), args.command, cfg, rep, traces, code, args.plot_data)
    print(rep.to_text())
    return code


if __name__ == "__main__":
    sys.exit(main())
