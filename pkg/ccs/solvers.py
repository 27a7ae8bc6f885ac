"""
Solvers for the penalised local Gaussian likelihood.

The objective, summed over grid points z_k, is

    sum_k [tr(Sigma(z_k) Omega(z_k)) - log det Omega(z_k)] + lambda * P(Omega)

with P the group penalty sum_{u != v} sqrt(sum_k Omega_uv(z_k)^2) or, for the
single-point glasso baselines, the elementwise l1 penalty on off-diagonals.

``fit_prisma`` runs accelerated proximal iterative smoothing (the group penalty
is replaced by its beta-Moreau envelope and the log-determinant term is handled
by its closed-form prox). ``fit_admm`` is the two-block ADMM reference solver.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, List, Optional, Tuple

import networkx as nx
import numpy as np

from ccs.local_moments import (
    CovarianceField,
    IndexedSample,
    IndexGrid,
    SmoothingConfig,
    local_covariance_field,
    pooled_covariance,
)
from ccs.prox_ops import (
    MatrixStack,
    group_norms,
    group_penalty,
    group_prox,
    l1_penalty,
    logdet_prox_with_spectrum,
    soft_threshold_prox,
)
from utils.exceptions import (
    GridMismatchError,
    NonPDError,
    NotConvergedError,
    SolverError,
    ValidationError,
)
from utils.performance_optimizer import performance_monitor
from utils.validators import require_choice, require_nonnegative, require_positive

logger = logging.getLogger(__name__)

PENALTIES = ("group", "l1")
SOLVERS = ("prisma", "admm")

# Added to the diagonal of Sigma before inverting it for the starting point
_INIT_RIDGE = 1e-6
_LOG_EVERY = 100
# Factor applied to beta each time a constant-beta stage becomes stationary
_BETA_DECAY = 0.1


@dataclass(frozen=True)
class SolverConfig:
    """
    Solver settings.

    Attributes:
        lam: Penalty level lambda >= 0
        L_f: Smoothness constant of the likelihood part
        beta: Moreau smoothing parameter
        beta_schedule: ``constant`` or ``inverse_k`` (beta_k = beta / k)
        beta_final: Smallest beta of the constant schedule; once a stage is
            stationary with lambda > 0, beta is divided by ten down to this value
        max_iter: Iteration limit, shared by all beta stages
        rel_tol: Relative objective change that counts as stationary
        step_tol: Relative Frobenius change ||Theta_k - Theta_k-1|| / ||Theta_k||
            that the last stage must also reach
        support_tol: Quadratic-mean group norm above which an edge is kept
        tol_window: Consecutive stationary iterations required to stop
        restart: Reset the momentum whenever it points uphill
        penalty: ``group`` or ``l1``
        screen: Solve each covariance-screening component separately
        rho: ADMM penalty parameter
        admm_tol: ADMM primal and dual residual tolerance
        admm_max_iter: ADMM iteration limit
        admm_support_tol: Threshold applied to the exactly sparse ADMM block
    """

    lam: float = 0.0
    L_f: float = 0.1
    beta: float = 0.1
    beta_schedule: str = "constant"
    beta_final: float = 1e-3
    max_iter: int = 2000
    rel_tol: float = 1e-7
    step_tol: float = 1e-9
    support_tol: float = 1e-4
    tol_window: int = 3
    restart: bool = True
    penalty: str = "group"
    screen: bool = False
    rho: float = 1.0
    admm_tol: float = 1e-6
    admm_max_iter: int = 5000
    admm_support_tol: float = 0.0

    def __post_init__(self):
        require_nonnegative(self.lam, "lambda")
        require_positive(self.L_f, "L_f")
        require_positive(self.beta, "beta")
        require_positive(self.beta_final, "beta_final")
        require_positive(self.rel_tol, "rel_tol")
        require_positive(self.step_tol, "step_tol")
        require_nonnegative(self.support_tol, "support_tol")
        require_nonnegative(self.admm_support_tol, "admm_support_tol")
        require_positive(self.rho, "rho")
        require_positive(self.admm_tol, "admm_tol")
        require_choice(self.beta_schedule, ("constant", "inverse_k"), "beta_schedule")
        require_choice(self.penalty, PENALTIES, "penalty")
        for name in ("max_iter", "tol_window", "admm_max_iter"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer", field=name, value=value)

    def with_lambda(self, lam: float) -> "SolverConfig":
        return replace(self, lam=float(lam))


class EdgeSet:
    """Unordered pairs (u, v) with u < v over nodes 0..p-1."""

    def __init__(self, p: int, edges: Iterable[Tuple[int, int]] = ()):
        self.p = int(p)
        normalised = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValidationError(f"Self-loop ({u}, {v}) is not an edge", field="edges")
            if not (0 <= u < self.p and 0 <= v < self.p):
                raise ValidationError(f"Edge ({u}, {v}) outside 0..{self.p - 1}", field="edges")
            normalised.add((min(u, v), max(u, v)))
        self._edges = frozenset(normalised)

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "EdgeSet":
        mask = np.asarray(mask, dtype=bool)
        u, v = np.nonzero(np.triu(mask | mask.T, k=1))
        return cls(mask.shape[0], zip(u.tolist(), v.tolist()))

    def __len__(self) -> int:
        return len(self._edges)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return iter(self.sorted())

    def __contains__(self, edge) -> bool:
        u, v = edge
        return (min(u, v), max(u, v)) in self._edges

    def __eq__(self, other) -> bool:
        return isinstance(other, EdgeSet) and self.p == other.p and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self.p, self._edges))

    def __repr__(self) -> str:
        return f"EdgeSet(p={self.p}, edges={self.sorted()})"

    def sorted(self) -> List[Tuple[int, int]]:
        return sorted(self._edges)

    def as_set(self) -> frozenset:
        return self._edges

    def mask(self) -> np.ndarray:
        mask = np.zeros((self.p, self.p), dtype=bool)
        for u, v in self._edges:
            mask[u, v] = mask[v, u] = True
        return mask

    def max_degree(self) -> int:
        if self.p == 0:
            return 0
        return int(self.mask().sum(axis=1).max())


@dataclass(frozen=True)
class PrecisionField:
    """
    Estimated precision matrices on an index grid.

    ``group_norms`` holds the quadratic-mean norm sqrt(K^-1 sum_k Omega_uv(z_k)^2)
    of the group-sparse point the support was read from.
    """

    grid: IndexGrid
    matrices: np.ndarray
    group_norms: np.ndarray
    support: EdgeSet

    @property
    def p(self) -> int:
        return int(self.matrices.shape[1])


@dataclass
class SolveReport:
    solver: str
    iterations: int
    objective_trace: List[float]
    converged: bool
    final_objective: float
    wall_time: float
    elapsed_trace: List[float] = field(default_factory=list)
    restarts: int = 0


def _stack_array(stack) -> np.ndarray:
    if isinstance(stack, (MatrixStack, PrecisionField, CovarianceField)):
        return stack.matrices
    return np.asarray(stack, dtype=float)


def ccs_objective(stack, cov: CovarianceField, lam: float, penalty: str = "group") -> float:
    """
    Penalised local likelihood summed over grid points.

    Raises:
        GridMismatchError: Stack and covariance field differ in grid or dimension
        NonPDError: A stack matrix has an eigenvalue <= 0
    """
    require_choice(penalty, PENALTIES, "penalty")
    matrices = _stack_array(stack)
    if isinstance(stack, (MatrixStack, PrecisionField)) and not stack.grid.same_as(cov.grid):
        raise GridMismatchError("Stack and covariance field are on different grids")
    if matrices.shape != cov.matrices.shape:
        raise GridMismatchError(
            f"Stack shape {matrices.shape} does not match covariance shape {cov.matrices.shape}"
        )
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrices + matrices.transpose(0, 2, 1)))
    bad = np.flatnonzero(eigenvalues.min(axis=1) <= 0.0)
    if bad.size:
        raise NonPDError(
            f"Matrix at grid index {bad[0]} is not positive definite", grid_index=int(bad[0])
        )
    return _objective_from_spectrum(matrices, eigenvalues, cov.matrices, lam, penalty)


def _objective_from_spectrum(
    matrices: np.ndarray, eigenvalues: np.ndarray, sigma: np.ndarray, lam: float, penalty: str
) -> float:
    trace_term = float(np.einsum("kij,kji->", sigma, matrices))
    logdet_term = float(np.log(eigenvalues).sum())
    value = trace_term - logdet_term
    if lam > 0.0:
        value += lam * (group_penalty(matrices) if penalty == "group" else l1_penalty(matrices))
    return value


def _penalty_prox(matrices: np.ndarray, t: float, penalty: str) -> np.ndarray:
    if t <= 0.0:
        return matrices.copy()
    if penalty == "group":
        return group_prox(matrices, t)
    return soft_threshold_prox(matrices, t)


def _diagonal_start(sigma: np.ndarray) -> np.ndarray:
    diag = np.diagonal(sigma, axis1=1, axis2=2) + _INIT_RIDGE
    K, p = diag.shape
    start = np.zeros((K, p, p))
    idx = np.arange(p)
    start[:, idx, idx] = 1.0 / diag
    return start


def _quad_mean_norms(matrices: np.ndarray) -> np.ndarray:
    return group_norms(matrices) / np.sqrt(matrices.shape[0])


def _build_field(
    grid: IndexGrid, matrices: np.ndarray, sparse_point: np.ndarray, tol: float
) -> PrecisionField:
    norms = _quad_mean_norms(sparse_point)
    return PrecisionField(
        grid=grid,
        matrices=matrices,
        group_norms=norms,
        support=EdgeSet.from_mask(norms > tol),
    )


def _relative_change(current: float, previous: float) -> float:
    return abs(current - previous) / max(abs(previous), np.finfo(float).eps)


@performance_monitor.measure_execution_time("fit_prisma")
def fit_prisma(
    cov: CovarianceField, config: SolverConfig, strict: bool = False
) -> Tuple[PrecisionField, SolveReport]:
    """
    Proximal iterative smoothing for the penalised local likelihood.

    The smoothed problem is off the penalised optimum by up to beta * lambda per
    group, so with the constant schedule and lambda > 0 every stationary stage
    shrinks beta tenfold until ``beta_final``. The run counts as converged only
    when the last stage meets both ``rel_tol`` and ``step_tol``.

    Args:
        cov: Smoothed covariance field
        config: Solver settings
        strict: Raise NotConvergedError instead of returning an unconverged fit

    Returns:
        (field, report); the field holds the last prox iterate Theta_k, its
        support is read from prox(Theta_k, beta_k * lambda)

    Raises:
        SolverError: Eigendecomposition failure or non-finite objective
        NotConvergedError: Only with ``strict=True``
    """
    sigma = cov.matrices
    K, p, _ = sigma.shape
    lam = config.lam
    start_time = time.perf_counter()
    logger.info(
        f"PRISMA start: K={K}, p={p}, lambda={lam:.6g}, L_f={config.L_f}, "
        f"beta={config.beta} ({config.beta_schedule}), penalty={config.penalty}"
    )

    theta_prev = _diagonal_start(sigma)
    omega = theta_prev.copy()
    alpha = 0.0
    objective = ccs_objective(theta_prev, cov, lam, config.penalty)
    trace = [objective]
    elapsed = [time.perf_counter() - start_time]
    converged = False
    stationary = 0
    restarts = 0
    beta_level = config.beta
    beta_floor = min(config.beta, config.beta_final)
    refine = config.beta_schedule == "constant" and lam > 0.0
    beta_k = config.beta
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        beta_k = beta_level if config.beta_schedule == "constant" else config.beta / iteration
        L_k = config.L_f + 1.0 / beta_k
        U = omega - _penalty_prox(omega, beta_k * lam, config.penalty)
        step = omega - (sigma + U / beta_k) / L_k
        step = 0.5 * (step + step.transpose(0, 2, 1))
        try:
            theta, spectrum = logdet_prox_with_spectrum(step, L_k)
        except np.linalg.LinAlgError as e:
            raise SolverError(
                f"Eigendecomposition failed at iteration {iteration}: {e}", iteration=iteration
            )

        new_objective = _objective_from_spectrum(theta, spectrum, sigma, lam, config.penalty)
        if not np.isfinite(new_objective):
            raise SolverError(
                f"Non-finite objective at iteration {iteration}", iteration=iteration
            )

        alpha_next = (1.0 + np.sqrt(1.0 + 4.0 * alpha * alpha)) / 2.0
        if config.restart and np.vdot(omega - theta, theta - theta_prev) > 0.0:
            omega = theta
            alpha = 1.0
            restarts += 1
        else:
            omega = theta + ((alpha - 1.0) / alpha_next) * (theta - theta_prev)
            alpha = alpha_next
        step_change = float(np.linalg.norm(theta - theta_prev) / np.linalg.norm(theta))
        theta_prev = theta

        change = _relative_change(new_objective, objective)
        objective = new_objective
        trace.append(objective)
        elapsed.append(time.perf_counter() - start_time)

        if iteration % _LOG_EVERY == 0:
            logger.debug(
                f"PRISMA iteration {iteration}: objective={objective:.10g}, beta={beta_k:.3g}"
            )

        last_stage = not refine or beta_level <= beta_floor
        settled = change <= config.rel_tol and (not last_stage or step_change <= config.step_tol)
        stationary = stationary + 1 if settled else 0
        if stationary >= config.tol_window:
            if last_stage:
                converged = True
                break
            beta_level = max(beta_level * _BETA_DECAY, beta_floor)
            omega = theta
            alpha = 1.0
            stationary = 0
            logger.debug(f"PRISMA iteration {iteration}: refining beta to {beta_level:.3g}")

    sparse_point = _penalty_prox(theta_prev, beta_k * lam, config.penalty)
    result = _build_field(cov.grid, theta_prev, sparse_point, config.support_tol)
    report = SolveReport(
        solver="prisma",
        iterations=iteration,
        objective_trace=trace,
        converged=converged,
        final_objective=objective,
        wall_time=time.perf_counter() - start_time,
        elapsed_trace=elapsed,
        restarts=restarts,
    )
    _finish(report, len(result.support), strict)
    return result, report


@performance_monitor.measure_execution_time("fit_admm")
def fit_admm(
    cov: CovarianceField,
    lam: float,
    rho: float = 1.0,
    max_iter: int = 5000,
    tol: float = 1e-6,
    penalty: str = "group",
    support_tol: float = 0.0,
    strict: bool = False,
) -> Tuple[PrecisionField, SolveReport]:
    """
    Two-block ADMM with the consensus split Omega = Psi.

    The Omega block is a log-determinant prox per grid point, the Psi block a
    penalty prox with parameter lambda / rho, followed by a scaled dual update.
    Stops when both primal and dual residual norms are <= tol.

    Returns:
        (field, report); matrices come from the Omega block, the support and
        group norms from the exactly sparse Psi block
    """
    require_nonnegative(lam, "lambda")
    require_positive(rho, "rho")
    require_positive(tol, "tol")
    require_choice(penalty, PENALTIES, "penalty")
    sigma = cov.matrices
    K, p, _ = sigma.shape
    start_time = time.perf_counter()
    logger.info(f"ADMM start: K={K}, p={p}, lambda={lam:.6g}, rho={rho}, penalty={penalty}")

    psi = _diagonal_start(sigma)
    dual = np.zeros_like(psi)
    omega = psi.copy()
    objective = ccs_objective(psi, cov, lam, penalty)
    trace = [objective]
    elapsed = [time.perf_counter() - start_time]
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        step = psi - dual - sigma / rho
        step = 0.5 * (step + step.transpose(0, 2, 1))
        try:
            omega, spectrum = logdet_prox_with_spectrum(step, rho)
        except np.linalg.LinAlgError as e:
            raise SolverError(
                f"Eigendecomposition failed at iteration {iteration}: {e}", iteration=iteration
            )
        psi_old = psi
        psi = _penalty_prox(omega + dual, lam / rho, penalty)
        dual = dual + omega - psi

        primal_residual = float(np.linalg.norm(omega - psi))
        dual_residual = float(rho * np.linalg.norm(psi - psi_old))
        objective = _objective_from_spectrum(omega, spectrum, sigma, lam, penalty)
        if not np.isfinite(objective):
            raise SolverError(
                f"Non-finite objective at iteration {iteration}", iteration=iteration
            )
        trace.append(objective)
        elapsed.append(time.perf_counter() - start_time)

        if iteration % _LOG_EVERY == 0:
            logger.debug(
                f"ADMM iteration {iteration}: objective={objective:.10g}, "
                f"primal={primal_residual:.3g}, dual={dual_residual:.3g}"
            )
        if primal_residual <= tol and dual_residual <= tol:
            converged = True
            break

    result = _build_field(cov.grid, omega, psi, support_tol)
    report = SolveReport(
        solver="admm",
        iterations=iteration,
        objective_trace=trace,
        converged=converged,
        final_objective=objective,
        wall_time=time.perf_counter() - start_time,
        elapsed_trace=elapsed,
    )
    _finish(report, len(result.support), strict)
    return result, report


def _finish(report: SolveReport, n_edges: int, strict: bool) -> None:
    logger.info(
        f"{report.solver.upper()} finished: iterations={report.iterations}, "
        f"objective={report.final_objective:.10g}, converged={report.converged}, "
        f"edges={n_edges}, time={report.wall_time:.3f}s"
    )
    if not report.converged:
        logger.warning(f"{report.solver.upper()} reached the iteration limit without converging")
        if strict:
            raise NotConvergedError(
                f"{report.solver} did not converge in {report.iterations} iterations",
                report=report,
            )


def extract_support(field: PrecisionField, tol: float) -> EdgeSet:
    """Unordered pairs whose quadratic-mean group norm exceeds ``tol``."""
    require_nonnegative(tol, "tol")
    return EdgeSet.from_mask(field.group_norms > tol)


def screen_components(cov: CovarianceField, lam: float) -> List[List[int]]:
    """
    Connected components of the graph with edges {(u, v): ||Sigma_uv(.)||_2 > lambda}.

    Components are returned sorted, each as a sorted node list.
    """
    require_positive(lam, "lambda")
    norms = group_norms(cov.matrices)
    graph = nx.Graph()
    graph.add_nodes_from(range(cov.p))
    u, v = np.nonzero(np.triu(norms > lam, k=1))
    graph.add_edges_from(zip(u.tolist(), v.tolist()))
    components = sorted(sorted(component) for component in nx.connected_components(graph))
    logger.debug(f"Screening at lambda={lam:.6g}: {len(components)} components")
    return components


def _sub_field(cov: CovarianceField, nodes: List[int]) -> CovarianceField:
    idx = np.asarray(nodes)
    return replace(cov, matrices=cov.matrices[:, idx[:, None], idx[None, :]])


def fit_screened(
    cov: CovarianceField, config: SolverConfig, solver: str = "prisma", strict: bool = False
) -> Tuple[PrecisionField, SolveReport]:
    """
    Solves every screening component separately and assembles the result
    block-diagonally.

    Singleton components have the closed-form solution 1 / Sigma_uu(z_k).
    The merged report sums the component traces (shorter traces are padded
    with their last value) and is converged only if every component is.
    """
    require_choice(solver, SOLVERS, "solver")
    K, p, _ = cov.matrices.shape
    if config.lam <= 0.0:
        return fit_field(replace(config, screen=False), cov, solver, strict)

    start_time = time.perf_counter()
    components = screen_components(cov, config.lam)
    matrices = np.zeros((K, p, p))
    sparse_norms = np.zeros((p, p))
    traces: List[List[float]] = []
    iterations = 0
    converged = True

    for nodes in components:
        idx = np.asarray(nodes)
        if len(nodes) == 1:
            u = nodes[0]
            variances = cov.matrices[:, u, u]
            if np.any(variances <= 0.0):
                raise NonPDError(f"Zero local variance for variable {u}")
            matrices[:, u, u] = 1.0 / variances
            traces.append([float(np.sum(1.0 + np.log(variances)))])
            continue
        sub_result, sub_report = fit_field(
            replace(config, screen=False), _sub_field(cov, nodes), solver, strict
        )
        matrices[:, idx[:, None], idx[None, :]] = sub_result.matrices
        sparse_norms[idx[:, None], idx[None, :]] = sub_result.group_norms
        traces.append(sub_report.objective_trace)
        iterations = max(iterations, sub_report.iterations)
        converged = converged and sub_report.converged

    length = max(len(trace) for trace in traces)
    padded = np.array([trace + [trace[-1]] * (length - len(trace)) for trace in traces])
    merged_trace = padded.sum(axis=0).tolist()

    tol = config.support_tol if solver == "prisma" else config.admm_support_tol
    result = PrecisionField(
        grid=cov.grid,
        matrices=matrices,
        group_norms=sparse_norms,
        support=EdgeSet.from_mask(sparse_norms > tol),
    )
    report = SolveReport(
        solver=solver,
        iterations=iterations,
        objective_trace=merged_trace,
        converged=converged,
        final_objective=merged_trace[-1],
        wall_time=time.perf_counter() - start_time,
    )
    logger.info(
        f"Screened solve: {len(components)} components, objective={report.final_objective:.10g}"
    )
    return result, report


def fit_field(
    config: SolverConfig, cov: CovarianceField, solver: str = "prisma", strict: bool = False
) -> Tuple[PrecisionField, SolveReport]:
    """
    Dispatches to the configured solver.

    Screening runs when enabled and whenever lambda reaches the screening bound,
    where every component is a single node and the solution is closed-form.
    """
    require_choice(solver, SOLVERS, "solver")
    if config.screen or (config.lam > 0.0 and config.lam >= lambda_max(cov)):
        return fit_screened(cov, config, solver, strict)
    if solver == "prisma":
        return fit_prisma(cov, config, strict)
    return fit_admm(
        cov,
        config.lam,
        rho=config.rho,
        max_iter=config.admm_max_iter,
        tol=config.admm_tol,
        penalty=config.penalty,
        support_tol=config.admm_support_tol,
        strict=strict,
    )


def single_point_field(
    sigma: np.ndarray, z: float, h: float, kind: str, centering: str
) -> CovarianceField:
    """Wraps one covariance matrix as a field on the one-point grid {z}."""
    return CovarianceField(
        grid=IndexGrid(np.array([z])),
        matrices=sigma[None, :, :],
        h=h,
        kind=kind,
        centering=centering,
    )


def fit_glasso_static(
    sample: IndexedSample, lam: float, config: SolverConfig, strict: bool = False
) -> np.ndarray:
    """
    Graphical lasso on the pooled covariance, ignoring the index variable.

    Reuses the PRISMA machinery with the l1 prox on a one-point grid.
    """
    if sample.n < 2:
        raise ValidationError("Static glasso needs at least two observations", field="n")
    sigma = pooled_covariance(sample)
    cov = single_point_field(sigma, 0.0, 1.0, "epanechnikov", "at_target")
    result, _ = fit_prisma(cov, replace(config, lam=float(lam), penalty="l1"), strict)
    return result.matrices[0]


def fit_pointwise_lasso(
    sample: IndexedSample,
    tau: float,
    h: float,
    lam: float,
    config: SolverConfig,
    kind: str = "epanechnikov",
    centering: str = "per_observation",
    strict: bool = False,
) -> np.ndarray:
    """
    Locally smoothed graphical lasso at the single index value ``tau``.

    Raises:
        EmptyBandwidthError: No sample within h of tau
    """
    if not (0.0 <= tau <= 1.0):
        raise ValidationError(f"tau must lie in [0, 1], got {tau}", field="tau", value=tau)
    local = local_covariance_field(sample, IndexGrid(np.array([tau])), h, kind, centering)
    result, _ = fit_prisma(local, replace(config, lam=float(lam), penalty="l1"), strict)
    return result.matrices[0]


def lambda_max(cov: CovarianceField, penalty: str = "group") -> float:
    """Smallest lambda whose solution has no off-diagonal support."""
    require_choice(penalty, PENALTIES, "penalty")
    if penalty == "group":
        return float(group_norms(cov.matrices).max())
    off = np.abs(cov.matrices).max(axis=0)
    np.fill_diagonal(off, 0.0)
    return float(off.max())


def lambda_grid(cov: CovarianceField, count: int, penalty: str = "group") -> np.ndarray:
    """Log-spaced descending lambdas from lambda_max down to lambda_max / 100."""
    if int(count) != count or count < 2:
        raise ValidationError(f"count must be an integer >= 2, got {count}", field="count")
    top = lambda_max(cov, penalty)
    if top <= 0.0:
        raise ValidationError("Covariance field has no off-diagonal signal", field="cov")
    return np.geomspace(top, top / 100.0, int(count))


def simulation_lambda(n: int, p: int, multiplier: float = 1.0, grid_size: int = 1) -> float:
    """
    Default simulation penalty multiplier * sqrt(grid_size) * n^(-3/8) * sqrt(log p).

    n^(-3/8) sqrt(log p) is the per-point noise level; the group penalty acts on
    the norm of grid_size entries, so a penalty meant for the raw-sum objective
    over a grid passes that grid's size.
    """
    if n < 1 or p < 2:
        raise ValidationError("simulation_lambda needs n >= 1 and p >= 2", field="n")
    if int(grid_size) != grid_size or grid_size < 1:
        raise ValidationError(
            f"grid_size must be a positive integer, got {grid_size}", field="grid_size"
        )
    return float(multiplier * np.sqrt(grid_size) * n ** (-3.0 / 8.0) * np.sqrt(np.log(p)))


def fit_ccs(
    sample: IndexedSample,
    smoothing: SmoothingConfig,
    config: SolverConfig,
    solver: str = "prisma",
    h: Optional[float] = None,
    strict: bool = False,
) -> Tuple[PrecisionField, SolveReport, CovarianceField]:
    """
    Full estimation pipeline: smoothed covariance field, then the solver.

    The bandwidth defaults to the estimation rate c_h * n^(-1/5).
    """
    bandwidth = h if h is not None else smoothing.bandwidth(sample.n, "estimation")
    cov = local_covariance_field(
        sample, smoothing.grid(), bandwidth, smoothing.kernel, smoothing.centering
    )
    result, report = fit_field(config, cov, solver, strict)
    return result, report, cov
