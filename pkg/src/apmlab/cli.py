"""Batch command-line front end.

Each subcommand reads one config file, runs a pipeline of library calls,
writes plain-text and CSV reports into the output directory, and exits
with a code that names the outcome.  Reports are byte-reproducible for a
fixed config, seed, and library version: floats are printed with their
shortest round-trip representation, parallelism never changes results,
and the only run-dependent content is the generated_at comment at the
top of the text reports.

Exit codes:
  0   success (and, for density commands, verification passed)
  2   malformed config, unreadable file, or parameters outside a
      precondition (e.g. a CLT rule with diverging drift)
  3   validate found a violated standing assumption
  4   optimizer stopped at the iteration cap without passing the
      first-order check
  5   optimizer status diverging-objective
  6   utility rejected: affine or no usable gain bound
  7   density construction or risk-neutral verification failed
  40+j  recursive density build failed at stage j
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .arbitrage import (asymptotic_arbitrage_construct, clt_normalized_check,
                        closedness_failure_demo, free_lunch_demo_aba)
from .config import (ConfigError, build_family, build_reduced, build_utility,
                     int_list, load_config, number, section)
from .market import sharpe_sum
from .optimizer import (OptimizationProblem, OptimizationResult,
                        UnboundedObjectiveError, maximize_segment,
                        segment_sweep, truncation_gap)
from .risk_neutral import (StageError, density_moment_report,
                           recursive_density_builder, result_density,
                           verify_risk_neutral)
from .shocks import check_assumption_relevant, law_moments

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_MAX_ITER = 4
EXIT_DIVERGING = 5
EXIT_UNBOUNDED = 6
EXIT_DENSITY = 7
EXIT_STAGE_BASE = 40

_STATUS_EXITS = {
    "converged": EXIT_OK,
    "max-iter": EXIT_MAX_ITER,
    "diverging-objective": EXIT_DIVERGING,
}


# ---------------------------------------------------------------------------
# Deterministic report plumbing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Shortest round-trip representation; the reproducibility workhorse."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_text(out_dir, name: str, lines) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    body = "\n".join([f"# generated_at: {stamp}", f"# apmlab {__version__}"]
                     + [str(line) for line in lines])
    path.write_text(body + "\n", encoding="utf-8")
    return path


def _write_csv(out_dir, name: str, header, rows) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def _say(path: Path, what: str) -> None:
    print(f"{what}: {path}")


# ---------------------------------------------------------------------------
# Shared config plumbing
# ---------------------------------------------------------------------------

def _pool_params(sec: dict, path: str, args) -> tuple[int, int]:
    samples = args.samples if args.samples is not None else \
        number(sec, path, "samples", minimum=2, integer=True)
    seed = args.seed if args.seed is not None else \
        number(sec, path, "seed", minimum=0, integer=True)
    return int(samples), int(seed)


def _build_problem(cfg: dict, args) -> OptimizationProblem:
    reduced = build_reduced(cfg)
    family = build_family(cfg)
    utility = build_utility(cfg)
    opt = section(cfg, "optimize")
    samples, seed = _pool_params(opt, "optimize", args)
    kwargs = dict(
        reduced=reduced, family=family, utility=utility,
        k=number(opt, "optimize", "k", minimum=1, integer=True),
        n_samples=samples, seed=seed, threads=args.threads,
        grad_tol=number(opt, "optimize", "grad_tol", default=1e-6, minimum=0.0),
        max_iter=number(opt, "optimize", "max_iter", default=200, minimum=1,
                        integer=True),
    )
    if "radius" in opt:
        kwargs["radius"] = number(opt, "optimize", "radius", minimum=0.0)
    if "antithetic" in opt:
        if not isinstance(opt["antithetic"], bool):
            raise ConfigError("optimize.antithetic: must be true or false")
        kwargs["antithetic"] = opt["antithetic"]
    try:
        return OptimizationProblem(**kwargs)
    except UnboundedObjectiveError:
        raise
    except ValueError as exc:
        raise ConfigError(f"optimize: {exc}") from exc


def _result_lines(result: OptimizationResult) -> list[str]:
    problem = result.problem
    lines = [
        f"utility: {problem.utility.label()}",
        f"shocks: {problem.family.label()}",
        f"k: {problem.k}",
        f"samples: {problem.n_samples}",
        f"seed: {problem.seed}",
        f"status: {result.status}",
        f"iterations: {result.iterations}",
        f"value: {_fmt(result.value)}",
        f"value_se: {_fmt(result.value_se)}",
        f"max_foc_residual: {_fmt(result.max_residual)}",
        f"mean_utility_loss: {_fmt(result.u_minus_mean)}",
    ]
    b = problem.reduced.b.dense(problem.k)
    lines.append("phi_star (index, phi, b):")
    for i, (phi, b_i) in enumerate(zip(result.phi_star, b), start=1):
        lines.append(f"  {i} {_fmt(phi)} {_fmt(b_i)}")
    return lines


def _phi_csv(out_dir, result: OptimizationResult) -> Path:
    b = result.problem.reduced.b.dense(result.problem.k)
    rows = [
        (i, result.phi_star[i - 1], b[i - 1],
         result.foc_residuals[i - 1], result.foc_se[i - 1])
        for i in range(1, result.problem.k + 1)
    ]
    return _write_csv(out_dir, "phi_star.csv",
                      ("index", "phi", "b", "foc_residual", "foc_se"), rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg: dict, args) -> int:
    reduced = build_reduced(cfg)
    family = build_family(cfg)
    val = section(cfg, "validate", required=False)
    k_max = int(number(val, "validate", "k_max",
                       default=max(reduced.b.prefix_len, 8), minimum=1,
                       integer=True))
    grid = sorted({min(2 ** j, k_max) for j in range(k_max.bit_length() + 1)})
    sums = sharpe_sum(reduced, grid)

    probe = sorted({1, 2, 3, 4, 8, 16, 64, 256, 1024, k_max})
    means, variances = law_moments(family, probe)
    mean_err = float(np.abs(means).max())
    var_err = float(np.abs(variances - 1.0).max())
    moments_ok = mean_err <= 1e-10 and var_err <= 1e-10

    assumption = check_assumption_relevant(family)

    lines = [f"shocks: {family.label()}",
             f"b prefix (first {min(reduced.b.prefix_len, 16)} of {reduced.b.prefix_len}):"]
    for i, b_i in enumerate(reduced.b.dense(min(reduced.b.prefix_len, 16)), start=1):
        lines.append(f"  {i} {_fmt(b_i)}")
    lines.append("sharpe partial sums:")
    for k, s in zip(grid, sums.partials):
        lines.append(f"  S_{k} = {_fmt(s)}")
    if sums.verdict == "summable":
        lines.append(f"sharpe verdict: summable, total = {_fmt(reduced.b.sum_sq_total())}")
    else:
        lines.append(f"sharpe verdict: {sums.verdict}")
    lines.append(f"law moments: max |mean| = {_fmt(mean_err)}, "
                 f"max |variance - 1| = {_fmt(var_err)} "
                 f"({'ok' if moments_ok else 'VIOLATED'})")
    lines.append(f"assumption: {assumption.verdict}")
    for reason in assumption.reasons:
        lines.append(f"  - {reason}")
    path = _write_text(args.out, "validate.txt", lines)
    _say(path, "validation report")

    violated = assumption.verdict == "violated" or not moments_ok
    print(f"verdict: {'violated' if violated else assumption.verdict}")
    return EXIT_VALIDATION if violated else EXIT_OK


def cmd_optimize(cfg: dict, args) -> int:
    result = maximize_segment(_build_problem(cfg, args))
    lines = _result_lines(result)

    opt = section(cfg, "optimize")
    truncations = int_list(opt, "optimize", "truncations", required=False)
    if truncations and result.status == "converged":
        gaps = truncation_gap(result, truncations)
        lines.append("truncation gaps (n, gap, se):")
        for row in gaps.rows:
            lines.append(f"  {row.n} {_fmt(row.gap)} {_fmt(row.gap_se)}")
        _say(_write_csv(args.out, "gaps.csv", ("n", "gap", "gap_se"),
                        [(r.n, r.gap, r.gap_se) for r in gaps.rows]),
             "truncation gaps")

    path = _write_text(args.out, "optimize.txt", lines)
    _say(_phi_csv(args.out, result), "phi_star")
    _say(path, "optimization report")
    print(f"status: {result.status}")
    return _STATUS_EXITS[result.status]


def cmd_sweep(cfg: dict, args) -> int:
    opt = section(cfg, "optimize")
    k_grid = int_list(opt, "optimize", "k_grid")
    sweep_sec = section(cfg, "sweep", required=False)
    cfg_k = dict(cfg)
    cfg_k["optimize"] = dict(opt, k=k_grid[-1])
    problem = _build_problem(cfg_k, args)
    report, results = segment_sweep(
        problem, k_grid,
        value_tol=number(sweep_sec, "sweep", "value_tol", default=1e-4, minimum=0.0),
        dist_tol=number(sweep_sec, "sweep", "dist_tol", default=1e-2, minimum=0.0),
    )
    lines = [f"utility: {problem.utility.label()}",
             f"shocks: {problem.family.label()}",
             f"samples: {problem.n_samples}",
             f"seed: {problem.seed}",
             "rows (k, value, value_se, max_residual, status, distance_from_prev):"]
    for row in report.rows:
        lines.append(f"  {row.k} {_fmt(row.value)} {_fmt(row.value_se)} "
                     f"{_fmt(row.max_residual)} {row.status} "
                     f"{_fmt(row.distance_from_prev)}")
    lines.append(f"verdict: {report.verdict}")
    _say(_write_csv(args.out, "sweep.csv",
                    ("k", "value", "value_se", "max_residual", "status",
                     "distance_from_prev"),
                    [(r.k, r.value, r.value_se, r.max_residual, r.status,
                      r.distance_from_prev) for r in report.rows]),
         "sweep rows")
    path = _write_text(args.out, "sweep.txt", lines)
    _say(path, "sweep report")
    print(f"verdict: {report.verdict}")
    statuses = {row.status for row in report.rows}
    if "diverging-objective" in statuses:
        return EXIT_DIVERGING
    if "max-iter" in statuses:
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_density(cfg: dict, args) -> int:
    dens_sec = section(cfg, "density", required=False)
    result = maximize_segment(_build_problem(cfg, args))
    lines = _result_lines(result)
    if result.status != "converged":
        lines.append("density: not built (optimizer did not converge)")
        path = _write_text(args.out, "density.txt", lines)
        _say(path, "density report")
        return _STATUS_EXITS[result.status]

    tol = number(dens_sec, "density", "tol", default=1e-3, minimum=0.0)
    try:
        density = result_density(result, threads=args.threads)
    except ValueError as exc:
        lines.append(f"density: construction failed: {exc}")
        path = _write_text(args.out, "density.txt", lines)
        _say(path, "density report")
        return EXIT_DENSITY
    verification = verify_risk_neutral(density, result.pool,
                                       result.problem.reduced, tol=tol,
                                       threads=args.threads)
    moments = density_moment_report(density)

    lines += [
        f"density: {density.label()}",
        f"max_weight: {_fmt(density.max_weight)}",
        f"min_weight: {_fmt(density.min_weight)}",
        f"linf_bound: {'none' if density.linf_bound is None else _fmt(density.linf_bound)}",
        "martingale residuals (index, rho, se):",
    ]
    for i, (rho, se) in enumerate(zip(verification.residuals,
                                      verification.residual_ses),
                                  start=verification.index_lo):
        lines.append(f"  {i} {_fmt(rho)} {_fmt(se)}")
    lines.append(f"direction checks: {verification.direction_values.size}, "
                 f"max |value| = {_fmt(float(np.abs(verification.direction_values).max()))}")
    lines.append(f"verification: {'pass' if verification.passed else 'FAIL'}")
    lines.append("moment table (p, mean dQdP^p, mean dPdQ^p):")
    for p, dq, dp in zip(moments.p_grid, moments.dq_dp_moments,
                         moments.dp_dq_moments):
        lines.append(f"  {_fmt(p)} {_fmt(dq)} {_fmt(dp)}")
    if moments.predicted_dp_dq_exponent is not None:
        lines.append(f"predicted dPdQ exponent: {_fmt(moments.predicted_dp_dq_exponent)}")
    lines.append(f"note: {moments.caveat}")

    if dens_sec.get("export_weights"):
        _say(_write_csv(args.out, "weights.csv", ("sample", "weight"),
                        enumerate(density.weights)), "weights")

    exit_code = EXIT_OK if verification.passed else EXIT_DENSITY

    recursive = dens_sec.get("recursive")
    if recursive is not None:
        if not isinstance(recursive, dict):
            raise ConfigError("density.recursive: must be a mapping")
        opt = section(cfg, "optimize")
        samples, seed = _pool_params(opt, "optimize", args)
        build = recursive_density_builder(
            result.problem.reduced, result.problem.family,
            target_alpha=number(recursive, "density.recursive", "target_alpha"),
            eps=number(recursive, "density.recursive", "eps", default=0.05),
            k=result.problem.k, n_samples=samples, seed=seed,
            threads=args.threads, grad_tol=result.problem.grad_tol,
            residual_tol=tol,
        )
        lines.append(f"recursive schedule: p = {build.schedule.ps}")
        lines.append("stages (j, kappa, status, value, verified):")
        for stage in build.stages:
            lines.append(f"  {stage.stage} {_fmt(stage.kappa)} {stage.status} "
                         f"{_fmt(stage.value)} {stage.verification.passed}")
        cert = build.certification
        lines.append(f"certified solvable at growth exponent "
                     f"{_fmt(cert.target_alpha)}: {cert.status}, "
                     f"value {_fmt(cert.value)}")

    path = _write_text(args.out, "density.txt", lines)
    _say(path, "density report")
    print(f"verification: {'pass' if verification.passed else 'FAIL'}")
    return exit_code


def _arbitrage_mode(cfg: dict, args, mode: str) -> int:
    arb = section(cfg, "arbitrage")
    if mode == "construct":
        reduced = build_reduced(cfg)
        k_grid = int_list(arb, "arbitrage", "k_grid")
        report = asymptotic_arbitrage_construct(reduced, k_grid)
        lines = [f"verdict: {report.verdict}"]
        if report.total is not None:
            lines.append(f"sharpe total: {_fmt(report.total)}")
        lines.append(f"note: {report.note}")
        rows = []
        if report.rows:
            lines.append("construction (k, S_k, EV, var):")
            for row in report.rows:
                lines.append(f"  {row.k} {_fmt(row.sharpe_partial)} "
                             f"{_fmt(row.expected_value)} {_fmt(row.variance)}")
                rows.append((row.k, row.sharpe_partial, row.expected_value,
                             row.variance))
        _say(_write_csv(args.out, "construct.csv",
                        ("k", "sharpe_partial", "expected_value", "variance"),
                        rows), "construction rows")
        path = _write_text(args.out, "arbitrage.txt", lines)
        _say(path, "arbitrage report")
        print(f"verdict: {report.verdict}")
        return EXIT_OK

    if mode in ("free-lunch", "closedness"):
        k_grid = int_list(arb, "arbitrage", "k_grid")
        n_paths = args.samples if args.samples is not None else \
            number(arb, "arbitrage", "n_paths", minimum=1, integer=True)
        seed = args.seed if args.seed is not None else \
            number(arb, "arbitrage", "seed", minimum=0, integer=True)
        if mode == "free-lunch":
            report = free_lunch_demo_aba(
                k_grid, seed, n_paths,
                threshold=number(arb, "arbitrage", "threshold", default=5.0),
                threads=args.threads)
            q_names = [f"q{int(q * 100):02d}" for q in report.q_levels]
            rows = [(k, *report.quantiles[j], report.fraction_above[j])
                    for j, k in enumerate(report.k_grid)]
            _say(_write_csv(args.out, "free_lunch.csv",
                            ("k", *q_names, "fraction_above"), rows), "trajectories")
            lines = [f"threshold: {_fmt(report.threshold)}",
                     f"paths: {report.n_paths}", f"seed: {report.seed}",
                     f"sum b_i^2: {_fmt(report.b_sum_sq)}",
                     "fraction of paths above threshold per k:"]
            for k, frac in zip(report.k_grid, report.fraction_above):
                lines.append(f"  {k} {_fmt(frac)}")
            lines.append(f"note: {report.note}")
            path = _write_text(args.out, "free_lunch.txt", lines)
            _say(path, "free-lunch report")
            print(f"final fraction above {_fmt(report.threshold)}: "
                  f"{_fmt(report.final_fraction)}")
        else:
            report = closedness_failure_demo(k_grid, seed, n_paths,
                                             threads=args.threads)
            q_names = [f"q{int(q * 100):02d}" for q in report.q_levels]
            rows = [(k, report.medians[j], *report.quantiles[j],
                     report.analytic_variance[j])
                    for j, k in enumerate(report.k_grid)]
            _say(_write_csv(args.out, "closedness.csv",
                            ("k", "median", *q_names, "analytic_variance"),
                            rows), "trajectories")
            lines = [f"paths: {report.n_paths}", f"seed: {report.seed}",
                     "medians (k, median, |median - 1|, analytic variance):"]
            for j, k in enumerate(report.k_grid):
                lines.append(f"  {k} {_fmt(report.medians[j])} "
                             f"{_fmt(report.distance_to_one[j])} "
                             f"{_fmt(report.analytic_variance[j])}")
            lines.append(f"note: {report.note}")
            path = _write_text(args.out, "closedness.txt", lines)
            _say(path, "closedness report")
            print(f"median at k={report.k_grid[-1]}: {_fmt(report.medians[-1])}")
        return EXIT_OK

    # mode == "clt"
    reduced = build_reduced(cfg)
    family = build_family(cfg)
    n_grid = int_list(arb, "arbitrage", "n_grid")
    samples, seed = _pool_params(arb, "arbitrage", args)
    try:
        report = clt_normalized_check("equal", n_grid, reduced, family,
                                      samples, seed, threads=args.threads)
    except ValueError as exc:
        raise ConfigError(f"arbitrage: {exc}") from exc
    rows = [(r.n, r.drift, r.max_coordinate, r.ks_statistic, r.p_negative,
             r.gaussian_f) for r in report.rows]
    _say(_write_csv(args.out, "clt.csv",
                    ("n", "drift", "max_coordinate", "ks_statistic",
                     "p_negative", "gaussian_f"), rows), "distribution distances")
    lines = [f"shocks: {report.family_label}", f"samples: {report.n_samples}",
             f"seed: {report.seed}",
             "rows (n, drift, max coordinate, KS, P(V<0), Phi(drift)):"]
    for r in report.rows:
        lines.append(f"  {r.n} {_fmt(r.drift)} {_fmt(r.max_coordinate)} "
                     f"{_fmt(r.ks_statistic)} {_fmt(r.p_negative)} "
                     f"{_fmt(r.gaussian_f)}")
    lines.append(f"KS nonincreasing within band {_fmt(report.ks_band)}: "
                 f"{report.ks_nonincreasing}")
    path = _write_text(args.out, "clt.txt", lines)
    _say(path, "CLT report")
    print(f"KS at n={report.rows[-1].n}: {_fmt(report.rows[-1].ks_statistic)}")
    return EXIT_OK


def cmd_arbitrage(cfg: dict, args) -> int:
    arb = section(cfg, "arbitrage")
    mode = arb.get("mode")
    if mode not in ("construct", "free-lunch", "closedness", "clt"):
        raise ConfigError(
            "arbitrage.mode: must be one of construct, free-lunch, closedness, clt"
        )
    return _arbitrage_mode(cfg, args, mode)


def cmd_demo_aba(cfg: dict, args) -> int:
    return _arbitrage_mode(cfg, args, "free-lunch")


def cmd_demo_closedness(cfg: dict, args) -> int:
    return _arbitrage_mode(cfg, args, "closedness")


def cmd_clt_check(cfg: dict, args) -> int:
    return _arbitrage_mode(cfg, args, "clt")


_COMMANDS = {
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "density": cmd_density,
    "arbitrage": cmd_arbitrage,
    "demo-aba": cmd_demo_aba,
    "demo-closedness": cmd_demo_closedness,
    "clt-check": cmd_clt_check,
}

_HELP = {
    "validate": "reduce the market, classify the Sharpe sum, screen the shocks",
    "optimize": "solve one segment problem and report the optimum",
    "sweep": "solve nested segment problems on a shared pool",
    "density": "build and verify a risk-neutral density at the optimum",
    "arbitrage": "run the arbitrage diagnostic named by arbitrage.mode",
    "demo-aba": "free-lunch trajectory demo on the two-point family",
    "demo-closedness": "closedness-failure trajectory demo",
    "clt-check": "Gaussian-limit distance for normalized strategies",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apmlab",
        description="Batch experiments for large-market portfolio choice",
    )
    parser.add_argument("--version", action="version",
                        version=f"apmlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in _COMMANDS.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", required=True, help="JSON or TOML experiment config")
        p.add_argument("--out", default=".", help="directory for report files")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--samples", type=int, default=None,
                       help="override the config sample/path count")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap; results do not depend on it")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return args.handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnboundedObjectiveError as exc:
        print(f"unbounded objective: {exc}", file=sys.stderr)
        return EXIT_UNBOUNDED
    except StageError as exc:
        print(f"recursive build failed: {exc}", file=sys.stderr)
        return EXIT_STAGE_BASE + exc.stage


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
