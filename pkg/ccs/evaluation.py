"""
Recovery and accuracy metrics, quadratic means over index points, K-fold
cross-validation and the synthetic experiment drivers.

Experiment drivers never write files; they return row tables that the command
line layer serialises.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ccs.inference import ConfidenceBand, CoverageSummary, confidence_band, coverage_tally
from ccs.local_moments import (
    IndexGrid,
    IndexedSample,
    SmoothingConfig,
    local_covariance_field,
    nearest_grid_indices,
    pooled_covariance,
)
from ccs.solvers import (
    EdgeSet,
    PrecisionField,
    SolverConfig,
    fit_admm,
    fit_ccs,
    fit_field,
    fit_glasso_static,
    fit_pointwise_lasso,
    fit_prisma,
    lambda_grid,
    simulation_lambda,
    single_point_field,
)
from ccs.synthetic import ScenarioSpec, make_scenario, sample_dataset
from utils.exceptions import CCSError, GridMismatchError, NotConvergedError, ValidationError
from utils.performance_optimizer import performance_monitor
from utils.thread_manager import ThreadManager
from utils.validators import GRAPH_KINDS, require_choice

logger = logging.getLogger(__name__)

METHODS = ("ccs", "glasso", "pointwise")
CV_MODES = ("ccs", "static_glasso")

QuadMeanMatrix = np.ndarray


@dataclass(frozen=True)
class RecoveryMetrics:
    precision: float
    recall: float
    f1: float
    hamming: int


def recovery_metrics(estimated: EdgeSet, truth: EdgeSet) -> RecoveryMetrics:
    """
    Precision, recall, F1 and Hamming distance of an estimated edge set.

    precision = 1 when nothing is estimated, recall = 1 when the truth is
    empty, f1 = 0 when precision + recall = 0.
    """
    if estimated.p != truth.p:
        raise GridMismatchError(f"Edge sets over {estimated.p} and {truth.p} nodes")
    est, true = estimated.as_set(), truth.as_set()
    precision = 1.0 if not est else 1.0 - len(est - true) / len(est)
    recall = 1.0 if not true else 1.0 - len(true - est) / len(true)
    total = precision + recall
    f1 = 0.0 if total == 0.0 or recall == 0.0 else 2.0 * precision * recall / total
    return RecoveryMetrics(
        precision=precision, recall=recall, f1=f1, hamming=len(est ^ true)
    )


def frobenius_error(estimate, truth: np.ndarray) -> float:
    """Mean over grid points of the squared Frobenius distance."""
    matrices = estimate.matrices if isinstance(estimate, PrecisionField) else np.asarray(estimate)
    truth = np.asarray(truth, dtype=float)
    if matrices.shape != truth.shape:
        raise GridMismatchError(f"Estimate shape {matrices.shape} vs truth shape {truth.shape}")
    diff = matrices - truth
    return float(np.mean(np.einsum("kij,kij->k", diff, diff)))


def quad_mean(samples: Sequence[np.ndarray]) -> QuadMeanMatrix:
    """Entrywise quadratic mean sqrt(m^-1 sum_i A_i^2) over a list of matrices."""
    if len(samples) == 0:
        raise ValidationError("quad_mean needs a non-empty list", field="samples")
    stack = np.asarray(samples, dtype=float)
    if stack.ndim != 3:
        raise ValidationError("quad_mean needs matrices of a uniform shape", field="samples")
    return np.sqrt(np.mean(stack * stack, axis=0))


def signal_strength(truth: Sequence[np.ndarray], edges: EdgeSet) -> float:
    """Smallest quadratic-mean magnitude over the edges of ``edges``."""
    if len(edges) == 0:
        return float("nan")
    means = quad_mean(truth)
    return float(min(means[u, v] for u, v in edges))


def sup_deviation(estimate: np.ndarray, truth: np.ndarray) -> float:
    """max over grid points and entries of |estimate - truth|."""
    return float(np.max(np.abs(np.asarray(estimate) - np.asarray(truth))))


# ---------------------------------------------------------------- settings


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything an experiment driver needs besides the scenario."""

    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    solver: str = "prisma"
    method: str = "ccs"
    replicates: int = 10
    seed: int = 0
    tau: float = 0.5
    lambda_count: int = 60
    lambda_multiplier: float = 1.0
    path_kind: str = "sin"
    pd_floor: float = 0.5
    n_jobs: int = 1
    strict: bool = False

    def __post_init__(self):
        require_choice(self.method, METHODS, "method")
        if self.replicates < 1:
            raise ValidationError("replicates must be positive", field="replicates")


def _replicate_seeds(seed: int, replicates: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(replicates)


# ---------------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class CVResult:
    lam: float
    mode: str
    total: float
    per_fold: List[float]
    standard_error: float

    def as_dict(self) -> Dict:
        return {
            "lambda": self.lam,
            "mode": self.mode,
            "total": self.total,
            "per_fold": list(self.per_fold),
            "standard_error": self.standard_error,
        }


def fold_assignment(n: int, folds: int, seed: int) -> List[np.ndarray]:
    """Contiguous blocks of a seeded permutation of 0..n-1."""
    if folds < 2 or folds > n:
        raise ValidationError(f"folds must lie in [2, n={n}], got {folds}", field="folds")
    permutation = np.random.default_rng(seed).permutation(n)
    return [np.sort(block) for block in np.array_split(permutation, folds)]


def gaussian_loss(omegas: np.ndarray, x: np.ndarray) -> float:
    """
    sum_i [-log det Omega_i + x_i^T Omega_i x_i] for per-observation
    precision matrices (m, p, p) or one shared matrix (p, p).
    """
    x = np.asarray(x, dtype=float)
    if omegas.ndim == 2:
        sign, logdet = np.linalg.slogdet(omegas)
        if sign <= 0:
            raise ValidationError("Precision estimate is not positive definite", field="omega")
        return float(-x.shape[0] * logdet + np.einsum("ij,jk,ik->", x, omegas, x))
    signs, logdets = np.linalg.slogdet(omegas)
    if np.any(signs <= 0):
        raise ValidationError("Precision estimate is not positive definite", field="omega")
    return float(np.sum(-logdets) + np.einsum("ij,ijk,ik->", x, omegas, x))


def cv_loss(
    sample: IndexedSample,
    folds: int,
    lam: float,
    smoothing: SmoothingConfig,
    config: SolverConfig,
    mode: str = "ccs",
    solver: str = "prisma",
    seed: int = 0,
    n_jobs: int = 1,
    strict: bool = False,
) -> CVResult:
    """
    K-fold negative log-likelihood of held-out observations.

    CCS mode fits the conditional model on each training split and evaluates
    the held-out point at the nearest grid point; static mode fits one glasso
    matrix per split.

    Raises:
        NotConvergedError: With ``strict``, carrying the failing fold index
    """
    require_choice(mode, CV_MODES, "cv_mode")
    blocks = fold_assignment(sample.n, folds, seed)
    config = config.with_lambda(lam)

    def evaluate(k: int) -> float:
        test = blocks[k]
        train = sample.subset(np.setdiff1d(np.arange(sample.n), test))
        try:
            if mode == "ccs":
                result, _, _ = fit_ccs(train, smoothing, config, solver, strict=strict)
                indices = nearest_grid_indices(result.grid, sample.z[test])
                return gaussian_loss(result.matrices[indices], sample.x[test])
            omega = fit_glasso_static(train, lam, config, strict=strict)
            return gaussian_loss(omega, sample.x[test])
        except NotConvergedError as e:
            raise NotConvergedError(
                f"Fold {k} did not converge: {e.message}", report=e.report, fold=k
            )

    per_fold = ThreadManager(n_jobs).map(evaluate, range(folds))
    total = float(np.sum(per_fold))
    standard_error = float(np.sqrt(folds) * np.std(per_fold, ddof=1))
    logger.info(f"CV ({mode}) lambda={lam:.6g}: loss={total:.6g} +- {standard_error:.3g}")
    return CVResult(
        lam=float(lam), mode=mode, total=total, per_fold=list(per_fold), standard_error=standard_error
    )


# ---------------------------------------------------------------- recovery


@dataclass(frozen=True)
class RecoveryRow:
    lam: float
    precision: float
    recall: float
    f1: float
    hamming: float
    frobenius: float
    failures: int


@dataclass(frozen=True)
class RecoveryTable:
    method: str
    rows: List[RecoveryRow]
    best: RecoveryRow


def method_lambda_path(sample: IndexedSample, settings: ExperimentSettings) -> np.ndarray:
    """Automatic lambda path on the penalty scale of the chosen method."""
    smoothing = settings.smoothing
    if settings.method == "ccs":
        cov = local_covariance_field(
            sample, smoothing.grid(), smoothing.bandwidth(sample.n), smoothing.kernel,
            smoothing.centering,
        )
        return lambda_grid(cov, settings.lambda_count)
    if settings.method == "glasso":
        sigma = pooled_covariance(sample)
    else:
        sigma = local_covariance_field(
            sample,
            IndexGrid(np.array([settings.tau])),
            smoothing.bandwidth(sample.n),
            smoothing.kernel,
            smoothing.centering,
        ).matrices[0]
    single = single_point_field(sigma, 0.0, 1.0, smoothing.kernel, smoothing.centering)
    return lambda_grid(single, settings.lambda_count, penalty="l1")


def _fit_method(sample: IndexedSample, lam: float, settings: ExperimentSettings, K: int):
    """Returns (estimated edges, estimate stack of shape (K, p, p))."""
    config = settings.solver_config.with_lambda(lam)
    if settings.method == "ccs":
        result, _, _ = fit_ccs(
            sample, settings.smoothing, config, settings.solver, strict=settings.strict
        )
        return result.support, result.matrices
    if settings.method == "glasso":
        omega = fit_glasso_static(sample, lam, config, strict=settings.strict)
    else:
        omega = fit_pointwise_lasso(
            sample,
            settings.tau,
            settings.smoothing.bandwidth(sample.n),
            lam,
            config,
            settings.smoothing.kernel,
            settings.smoothing.centering,
            strict=settings.strict,
        )
    edges = EdgeSet.from_mask(np.abs(omega) > config.support_tol)
    return edges, np.broadcast_to(omega, (K,) + omega.shape)


@performance_monitor.measure_execution_time("run_recovery_experiment")
def run_recovery_experiment(
    scenario: ScenarioSpec,
    n: int,
    lambda_path: Optional[Sequence[float]],
    settings: ExperimentSettings,
) -> RecoveryTable:
    """
    Precision-recall path averaged over replicates.

    Solver failures at a (replicate, lambda) entry are logged and counted in
    the row's ``failures`` column; metrics average the successful entries.
    With no ``lambda_path`` a method-specific path is derived from the first
    replicate.
    """
    seeds = _replicate_seeds(settings.seed, settings.replicates)
    grid = settings.smoothing.grid()
    datasets = [sample_dataset(scenario, n, seed, grid) for seed in seeds]
    if lambda_path is None:
        lambda_path = method_lambda_path(datasets[0][0], settings)
    lambda_path = [float(lam) for lam in lambda_path]

    def run_replicate(index: int) -> List[Optional[tuple]]:
        sample, truth = datasets[index]
        outcomes = []
        for lam in lambda_path:
            try:
                edges, stack = _fit_method(sample, lam, settings, len(grid))
            except CCSError as e:
                logger.warning(f"Replicate {index}, lambda={lam:.6g} failed: {e.message}")
                outcomes.append(None)
                continue
            metrics = recovery_metrics(edges, truth.support)
            outcomes.append((metrics, frobenius_error(stack, truth.matrices)))
        return outcomes

    per_replicate = ThreadManager(settings.n_jobs).map(run_replicate, range(len(datasets)))

    rows = []
    for j, lam in enumerate(lambda_path):
        entries = [outcomes[j] for outcomes in per_replicate if outcomes[j] is not None]
        failures = len(per_replicate) - len(entries)
        if entries:
            rows.append(
                RecoveryRow(
                    lam=lam,
                    precision=float(np.mean([m.precision for m, _ in entries])),
                    recall=float(np.mean([m.recall for m, _ in entries])),
                    f1=float(np.mean([m.f1 for m, _ in entries])),
                    hamming=float(np.mean([m.hamming for m, _ in entries])),
                    frobenius=float(np.mean([fro for _, fro in entries])),
                    failures=failures,
                )
            )
        else:
            nan = float("nan")
            rows.append(RecoveryRow(lam, nan, nan, nan, nan, nan, failures))
        logger.info(
            f"{settings.method} lambda={lam:.6g}: F1={rows[-1].f1:.4f}, "
            f"hamming={rows[-1].hamming:.2f}"
        )

    scored = [row for row in rows if not math.isnan(row.f1)]
    if not scored:
        raise CCSError("Every fit on the lambda path failed", "CCS_EXPERIMENT")
    best = max(scored, key=lambda row: row.f1)
    return RecoveryTable(method=settings.method, rows=rows, best=best)


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScalingRow:
    graph_kind: str
    p: int
    C: float
    n: int
    max_degree: int
    lam: float
    hamming: float
    f1: float


def rescaled_sample_size(C: float, d: int, p: int) -> int:
    """n = ceil(C d^(5/2) (log p)^(5/4))."""
    return int(math.ceil(C * d**2.5 * math.log(p) ** 1.25))


@performance_monitor.measure_execution_time("run_scaling_experiment")
def run_scaling_experiment(
    graph_kinds: Sequence[str],
    p_list: Sequence[int],
    C_list: Sequence[float],
    settings: ExperimentSettings,
) -> List[ScalingRow]:
    """
    Average Hamming distance against the rescaled sample size, one row per
    (graph kind, p, C). The penalty follows the simulation scaling
    lambda_multiplier * sqrt(K) * n^(-3/8) sqrt(log p) on the K-point grid.
    """
    grid_size = settings.smoothing.grid_size
    rows = []
    for kind in graph_kinds:
        require_choice(kind, GRAPH_KINDS, "graph_kind")
        for p in p_list:
            scenario = make_scenario(kind, p, settings.path_kind, settings.seed, settings.pd_floor)
            d = max(scenario.graph.max_degree, 1)
            for C in C_list:
                n = rescaled_sample_size(C, d, p)
                lam = simulation_lambda(n, p, settings.lambda_multiplier, grid_size)
                table = run_recovery_experiment(
                    scenario, n, [lam], replace(settings, method="ccs")
                )
                row = table.rows[0]
                rows.append(
                    ScalingRow(
                        graph_kind=kind, p=int(p), C=float(C), n=n, max_degree=d,
                        lam=lam, hamming=row.hamming, f1=row.f1,
                    )
                )
                logger.info(f"Scaling {kind} p={p} C={C} n={n}: hamming={row.hamming:.2f}")
    return rows


# ---------------------------------------------------------------- coverage


@performance_monitor.measure_execution_time("run_coverage_experiment")
def run_coverage_experiment(
    scenario: ScenarioSpec,
    n: int,
    replicates: int,
    alpha: float,
    settings: ExperimentSettings,
    rate_mode: str = "undersmoothed",
    lam: Optional[float] = None,
) -> CoverageSummary:
    """
    Fits every replicate with the inference bandwidth c_h n^(-1/4) (or
    c_h n^(-1/5) in theorem mode), builds pointwise bands and tallies coverage
    of Omega* on the grid.

    Without ``lam`` the pilot fit uses the per-point simulation penalty
    lambda_multiplier * n^(-3/8) sqrt(log p); the bands are pointwise, so the
    grid size does not enter.
    """
    grid = settings.smoothing.grid()
    smoothing = settings.smoothing
    bandwidth_mode = "inference" if rate_mode == "undersmoothed" else "estimation"
    h = smoothing.bandwidth(n, bandwidth_mode)
    if lam is None:
        lam = simulation_lambda(n, scenario.graph.p, settings.lambda_multiplier)
    config = settings.solver_config.with_lambda(lam)
    seeds = _replicate_seeds(settings.seed, replicates)

    def run_replicate(seed) -> ConfidenceBand:
        sample, _ = sample_dataset(scenario, n, seed, grid)
        cov = local_covariance_field(sample, grid, h, smoothing.kernel, smoothing.centering)
        result, _ = fit_field(config, cov, settings.solver, settings.strict)
        return confidence_band(result, cov, sample, alpha, rate_mode, smoothing.kernel, h)

    bands = ThreadManager(settings.n_jobs).map(run_replicate, seeds)
    truth = scenario.precision_at(grid.points)
    return coverage_tally(truth, bands, scenario.graph.edges)


# ---------------------------------------------------------------- solver benchmark


@dataclass(frozen=True)
class TraceRow:
    solver: str
    iteration: int
    objective: float
    seconds: float


def run_solver_benchmark(
    sample: IndexedSample, lam: float, settings: ExperimentSettings
) -> Dict[str, object]:
    """
    Runs PRISMA and ADMM on the same covariance field and returns their
    objective traces plus both reports.
    """
    smoothing = settings.smoothing
    cov = local_covariance_field(
        sample, smoothing.grid(), smoothing.bandwidth(sample.n), smoothing.kernel,
        smoothing.centering,
    )
    config = settings.solver_config.with_lambda(lam)
    _, prisma_report = fit_prisma(cov, config)
    _, admm_report = fit_admm(
        cov, lam, rho=config.rho, max_iter=config.admm_max_iter, tol=config.admm_tol,
        support_tol=config.admm_support_tol,
    )
    rows = []
    for report in (prisma_report, admm_report):
        for iteration, (objective, seconds) in enumerate(
            zip(report.objective_trace, report.elapsed_trace)
        ):
            rows.append(TraceRow(report.solver, iteration, objective, seconds))
    gap = abs(prisma_report.final_objective - admm_report.final_objective) / max(
        abs(admm_report.final_objective), np.finfo(float).eps
    )
    logger.info(f"Solver benchmark: relative objective gap {gap:.3g}")
    return {"rows": rows, "prisma": prisma_report, "admm": admm_report, "relative_gap": gap}
