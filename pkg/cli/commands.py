"""
Command dispatch for the ``ccs`` command line.

Every configuration key is also a ``--<key>`` flag; flags override the
``--config`` file, which overrides the defaults. Exit codes: 0 success,
2 input or usage error, 3 solver failure or non-convergence.
"""

import argparse
import logging
import os
from typing import Callable, Dict, List, Optional

from architecture.config_management import RunConfig
from ccs import __version__
from ccs.evaluation import (
    cv_loss,
    method_lambda_path,
    run_coverage_experiment,
    run_recovery_experiment,
    run_scaling_experiment,
    run_solver_benchmark,
)
from ccs.inference import confidence_band
from ccs.local_moments import IndexedSample, local_covariance_field
from ccs.solvers import SolveReport, fit_ccs, fit_field, simulation_lambda
from ccs.synthetic import ScenarioSpec, load_scenario, make_scenario, sample_dataset, save_scenario
from cli.ingest import ingest_csv
from cli.writers import ArtifactHeader, ArtifactWriter
from utils.exceptions import INPUT_ERRORS, SOLVER_ERRORS, CCSError, handle_error_gracefully
from utils.logger import AppLogger
from utils.performance_optimizer import performance_monitor
from utils.validators import ConfigValidator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

COMMANDS = {
    "simulate": "Draw a synthetic dataset with its ground truth",
    "fit": "Estimate the conditional precision field from a CSV file",
    "path": "Precision-recall path over lambda on a synthetic scenario",
    "ci": "Pointwise confidence intervals from a CSV file",
    "cv": "K-fold cross-validated loss along a lambda path",
    "bench-solver": "PRISMA and ADMM objective traces on one instance",
    "coverage": "Empirical coverage of the confidence intervals",
    "scaling": "Hamming distance against the rescaled sample size",
}
INPUT_COMMANDS = ("fit", "ci", "cv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccs", description="Conditional covariance selection with kernel smoothing"
    )
    parser.add_argument("--version", action="version", version=f"ccs {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", help="key=value configuration file")
        sub.add_argument("--output-dir", default=".", help="directory for result files")
        sub.add_argument("--input", required=name in INPUT_COMMANDS, help="input CSV file")
        sub.add_argument("--scenario", help="scenario file written by `simulate`")
        for key, (kind, default) in ConfigValidator.KNOWN_KEYS.items():
            sub.add_argument(
                f"--{key}", dest=key, default=None, metavar=kind.upper(), help=f"default: {default}"
            )
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    return {
        key: ConfigValidator.parse_value(key, getattr(args, key))
        for key in ConfigValidator.KNOWN_KEYS
        if getattr(args, key) is not None
    }


def _report_dict(report: SolveReport) -> Dict[str, object]:
    # wall times stay out of JSON so that reruns are byte-identical
    return {
        "solver": report.solver,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_objective": report.final_objective,
        "restarts": report.restarts,
    }


def _scenario(args: argparse.Namespace, config: RunConfig) -> ScenarioSpec:
    if args.scenario:
        return load_scenario(args.scenario)
    return make_scenario(
        config["graph_kind"], config["p"], config["path_kind"], config["seed"], config["pd_floor"]
    )


def _ingest(args: argparse.Namespace, config: RunConfig) -> IndexedSample:
    return ingest_csv(
        args.input,
        z_column=config["z_column"],
        log_returns=config["log_returns"],
        standardize=config["standardize"],
    )


def _lambda(config: RunConfig, n: int, p: int) -> float:
    if config["lambda"] is not None:
        return float(config["lambda"])
    lam = simulation_lambda(n, p, config["lambda_multiplier"])
    logger.info(f"No lambda configured, using {lam:.6g} (n={n}, p={p})")
    return lam


# ---------------------------------------------------------------- commands


def cmd_simulate(args, config: RunConfig, writer: ArtifactWriter) -> int:
    scenario = _scenario(args, config)
    grid = config.smoothing().grid()
    sample, truth = sample_dataset(scenario, config["n"], config["seed"], grid)
    writer.write_sample(sample)
    writer.write_omega_grid(truth.grid, truth.matrices, name="truth_grid.csv")
    save_scenario(scenario, os.path.join(writer.output_dir, "scenario.txt"), writer.header.line())
    writer.write_json(
        "report.json",
        {
            "command": "simulate",
            "config": config.as_dict(),
            "n": sample.n,
            "p": sample.p,
            "edges": [list(edge) for edge in truth.support],
        },
    )
    return EXIT_OK


def cmd_fit(args, config: RunConfig, writer: ArtifactWriter) -> int:
    sample = _ingest(args, config)
    lam = _lambda(config, sample.n, sample.p)
    smoothing = config.smoothing()
    result, report, cov = fit_ccs(sample, smoothing, config.solver_config(lam), config["solver"])
    writer.write_omega_grid(result.grid, result.matrices)
    writer.write_support(result)
    writer.write_json(
        "report.json",
        {
            "command": "fit",
            "config": config.as_dict(),
            "lambda": lam,
            "bandwidth": cov.h,
            "n": sample.n,
            "columns": sample.columns,
            "edges": len(result.support),
            "report": _report_dict(report),
        },
    )
    return EXIT_OK if report.converged else EXIT_SOLVER


def cmd_ci(args, config: RunConfig, writer: ArtifactWriter) -> int:
    sample = _ingest(args, config)
    lam = _lambda(config, sample.n, sample.p)
    smoothing = config.smoothing()
    mode = "inference" if config["rate_mode"] == "undersmoothed" else "estimation"
    h = smoothing.bandwidth(sample.n, mode)
    cov = local_covariance_field(
        sample, smoothing.grid(), h, smoothing.kernel, smoothing.centering
    )
    result, report = fit_field(config.solver_config(lam), cov, config["solver"])
    band = confidence_band(
        result, cov, sample, config["alpha"], config["rate_mode"], smoothing.kernel, h
    )
    writer.write_ci(band)
    writer.write_json(
        "ci_report.json",
        {
            "command": "ci",
            "config": config.as_dict(),
            "lambda": lam,
            "bandwidth": h,
            "report": _report_dict(report),
        },
    )
    return EXIT_OK if report.converged else EXIT_SOLVER


def cmd_cv(args, config: RunConfig, writer: ArtifactWriter) -> int:
    sample = _ingest(args, config)
    mode = config["cv_mode"]
    settings = config.experiment_settings(method="ccs" if mode == "ccs" else "glasso")
    if config["lambda"] is not None:
        lambdas = [float(config["lambda"])]
    else:
        lambdas = [float(lam) for lam in method_lambda_path(sample, settings)]

    results = [
        cv_loss(
            sample,
            config["folds"],
            lam,
            settings.smoothing,
            settings.solver_config,
            mode=mode,
            solver=config["solver"],
            seed=config["seed"],
            n_jobs=config["n_jobs"],
            strict=config["strict"],
        )
        for lam in lambdas
    ]
    best = min(results, key=lambda result: result.total)
    writer.write_json(
        "cv.json",
        {
            "command": "cv",
            "config": config.as_dict(),
            "mode": mode,
            "folds": config["folds"],
            "results": [result.as_dict() for result in results],
            "best_lambda": best.lam,
            "best_loss": best.total,
        },
    )
    return EXIT_OK


def cmd_path(args, config: RunConfig, writer: ArtifactWriter) -> int:
    scenario = _scenario(args, config)
    settings = config.experiment_settings()
    lambda_path = None if config["lambda"] is None else [float(config["lambda"])]
    table = run_recovery_experiment(scenario, config["n"], lambda_path, settings)
    writer.write_pr_curve(table.rows)
    writer.write_json(
        "path.json",
        {
            "command": "path",
            "config": config.as_dict(),
            "method": table.method,
            "best": {
                "lambda": table.best.lam,
                "precision": table.best.precision,
                "recall": table.best.recall,
                "f1": table.best.f1,
                "hamming": table.best.hamming,
            },
            "frobenius": [{"lambda": row.lam, "frobenius": row.frobenius} for row in table.rows],
            "failures": [{"lambda": row.lam, "failures": row.failures} for row in table.rows],
        },
    )
    return EXIT_OK


def cmd_bench_solver(args, config: RunConfig, writer: ArtifactWriter) -> int:
    if args.input:
        sample = _ingest(args, config)
    else:
        sample, _ = sample_dataset(_scenario(args, config), config["n"], config["seed"])
    lam = _lambda(config, sample.n, sample.p)
    result = run_solver_benchmark(sample, lam, config.experiment_settings())
    writer.write_traces(result["rows"])
    writer.write_json(
        "bench.json",
        {
            "command": "bench-solver",
            "config": config.as_dict(),
            "lambda": lam,
            "prisma": _report_dict(result["prisma"]),
            "admm": _report_dict(result["admm"]),
            "relative_gap": result["relative_gap"],
        },
    )
    return EXIT_OK


def cmd_coverage(args, config: RunConfig, writer: ArtifactWriter) -> int:
    scenario = _scenario(args, config)
    summary = run_coverage_experiment(
        scenario,
        config["n"],
        config["replicates"],
        config["alpha"],
        config.experiment_settings(),
        rate_mode=config["rate_mode"],
        lam=config["lambda"],
    )
    writer.write_json(
        "coverage.json",
        {"command": "coverage", "config": config.as_dict(), "coverage": summary.as_dict()},
    )
    return EXIT_OK


def cmd_scaling(args, config: RunConfig, writer: ArtifactWriter) -> int:
    rows = run_scaling_experiment(
        config["graph_kinds"], config["p_list"], config["C_list"], config.experiment_settings()
    )
    writer.write_hamming(rows)
    return EXIT_OK


HANDLERS: Dict[str, Callable[..., int]] = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "path": cmd_path,
    "ci": cmd_ci,
    "cv": cmd_cv,
    "bench-solver": cmd_bench_solver,
    "coverage": cmd_coverage,
    "scaling": cmd_scaling,
}


@handle_error_gracefully
def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    writer = ArtifactWriter(
        args.output_dir, ArtifactHeader(seed=config["seed"], config_hash=config.config_hash())
    )
    code = HANDLERS[args.command](args, config, writer)
    logger.info(f"{args.command} finished with exit code {code}, {len(writer.written)} files")
    return code


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Parses ``argv``, runs one subcommand and returns its exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT

    try:
        config = RunConfig.load(args.config, _overrides(args))
    except INPUT_ERRORS:
        return EXIT_INPUT

    app_logger = AppLogger(config)
    try:
        return _dispatch(args, config)
    except INPUT_ERRORS as e:
        logger.error(f"{args.command}: {e.message}")
        return EXIT_INPUT
    except SOLVER_ERRORS as e:
        logger.error(f"{args.command}: {e.message}")
        return EXIT_SOLVER
    except CCSError as e:
        logger.error(f"{args.command}: {e.message}")
        return EXIT_SOLVER
    finally:
        performance_monitor.take_memory_snapshot(args.command)
        performance_monitor.log_summary()
        app_logger.cleanup()
