"""
Synthetic ground truth: random graphs, index-varying precision paths,
positive-definiteness flooring and data sampling from x | z ~ N(0, Omega(z)^-1).
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import networkx as nx
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.distance import cdist

from ccs.local_moments import IndexedSample, IndexGrid, uniform_grid
from ccs.solvers import EdgeSet
from utils.exceptions import FileOperationError, ValidationError
from utils.validators import GRAPH_KINDS, PATH_KINDS, ConfigValidator, require_choice

logger = logging.getLogger(__name__)

MIN_NODES = {"chain": 2, "nearest_neighbor": 3, "erdos_renyi": 5, "scale_free": 6}
ER_MAX_DEGREE = 5
ER_EDGES_PER_NODE = 2
NN_NEIGHBOURS = 2
SCALE_FREE_CLIQUE = 5

# Random-walk paths
WALK_STEPS = 10_000
WALK_STEP_SIZE = 0.002
WALK_KNOTS = 21

_SAMPLING_CHUNK = 2048


@dataclass(frozen=True)
class GraphSpec:
    p: int
    edges: EdgeSet
    kind: str

    @property
    def max_degree(self) -> int:
        return self.edges.max_degree()


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _chain_edges(p: int, rng: np.random.Generator):
    order = rng.permutation(p)
    graph = nx.relabel_nodes(nx.path_graph(p), dict(enumerate(order.tolist())))
    return graph.edges()


def _nearest_neighbor_edges(p: int, rng: np.random.Generator):
    points = rng.uniform(size=(p, 2))
    distances = cdist(points, points)
    np.fill_diagonal(distances, np.inf)
    neighbours = np.argsort(distances, axis=1, kind="stable")[:, :NN_NEIGHBOURS]
    return [(u, int(v)) for u in range(p) for v in neighbours[u]]


def _erdos_renyi_edges(p: int, rng: np.random.Generator, max_restarts: int = 1000):
    target = ER_EDGES_PER_NODE * p
    pairs = np.array([(u, v) for u in range(p) for v in range(u + 1, p)])
    for attempt in range(max_restarts):
        degree = np.zeros(p, dtype=int)
        chosen = []
        for u, v in pairs[rng.permutation(len(pairs))]:
            if degree[u] < ER_MAX_DEGREE and degree[v] < ER_MAX_DEGREE:
                chosen.append((int(u), int(v)))
                degree[u] += 1
                degree[v] += 1
                if len(chosen) == target:
                    return chosen
        logger.debug(f"Erdos-Renyi dead end after {len(chosen)} edges, restart {attempt + 1}")
    raise ValidationError(
        f"Could not place {target} edges with maximum degree {ER_MAX_DEGREE} on {p} nodes",
        field="p",
        value=p,
    )


def _scale_free_edges(p: int, rng: np.random.Generator):
    graph = nx.barabasi_albert_graph(
        p,
        1,
        seed=int(rng.integers(2**31 - 1)),
        initial_graph=nx.complete_graph(SCALE_FREE_CLIQUE),
    )
    return graph.edges()


def generate_graph(kind: str, p: int, seed) -> GraphSpec:
    """
    Random graph of the given kind; deterministic given ``seed``.

    chain: a random node permutation connected in succession.
    nearest_neighbor: each of p uniform points in the unit square joined to
    its two closest neighbours (union of the neighbour relations).
    erdos_renyi: 2p edges with maximum degree 5.
    scale_free: preferential attachment grown from a 5-node clique.
    """
    require_choice(kind, GRAPH_KINDS, "graph_kind")
    if int(p) != p or p < MIN_NODES[kind]:
        raise ValidationError(
            f"{kind} graphs need p >= {MIN_NODES[kind]}, got {p}", field="p", value=p
        )
    p = int(p)
    rng = _rng(seed)
    builders = {
        "chain": _chain_edges,
        "nearest_neighbor": _nearest_neighbor_edges,
        "erdos_renyi": _erdos_renyi_edges,
        "scale_free": _scale_free_edges,
    }
    edges = EdgeSet(p, builders[kind](p, rng))
    logger.debug(f"Generated {kind} graph: p={p}, edges={len(edges)}")
    return GraphSpec(p=p, edges=edges, kind=kind)


def random_walk_path(rng: np.random.Generator) -> np.ndarray:
    """
    Raw walk at t / T for t = 0..T: start uniform on [-0.3, -0.2] U [0.2, 0.3],
    then steps of +-0.002 with equal probability.
    """
    start = rng.uniform(0.2, 0.3) * rng.choice((-1.0, 1.0))
    steps = (1.0 - 2.0 * rng.binomial(1, 0.5, size=WALK_STEPS)) * WALK_STEP_SIZE
    return np.concatenate(([start], start + np.cumsum(steps)))


def _draw_path_parameters(path_kind: str, n_edges: int, rng: np.random.Generator) -> np.ndarray:
    if path_kind in ("linear", "sin"):
        return rng.uniform(size=n_edges)
    if path_kind in ("two_regime", "constant"):
        return rng.uniform(0.2, 0.3, size=n_edges) * rng.choice((-1.0, 1.0), size=n_edges)
    knot_steps = np.linspace(0, WALK_STEPS, WALK_KNOTS).astype(int)
    knots = np.empty((WALK_KNOTS, n_edges))
    for e in range(n_edges):
        knots[:, e] = random_walk_path(rng)[knot_steps]
    return knots


@dataclass(frozen=True)
class ScenarioSpec:
    """
    Synthetic ground truth Omega*(z).

    ``parameters`` holds per-edge offsets c_uv (linear, sin), signed levels
    (two_regime, constant) or spline knot values of shape (21, |S|)
    (random_walk), in the sorted edge order of ``graph.edges``.
    """

    graph: GraphSpec
    path_kind: str
    parameters: np.ndarray
    pd_floor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        require_choice(self.path_kind, PATH_KINDS, "path_kind")
        if self.pd_floor <= 0.0:
            raise ValidationError("pd_floor must be positive", field="pd_floor")

    def edge_values(self, z_values: np.ndarray) -> np.ndarray:
        """Path values at each z for every edge, shape (m, |S|)."""
        z = np.atleast_1d(np.asarray(z_values, dtype=float))[:, None]
        c = self.parameters
        if len(self.graph.edges) == 0:
            return np.zeros((z.shape[0], 0))
        if self.path_kind == "linear":
            return 2.0 * z - c[None, :]
        if self.path_kind == "sin":
            return np.sin(2.0 * np.pi * z + c[None, :])
        if self.path_kind == "two_regime":
            return np.where(z < 0.5, c[None, :], -c[None, :])
        if self.path_kind == "constant":
            return np.broadcast_to(c[None, :], (z.shape[0], c.size)).copy()
        spline = CubicSpline(np.linspace(0.0, 1.0, WALK_KNOTS), c, bc_type="natural")
        return spline(z[:, 0])

    def raw_precision_at(self, z_values: np.ndarray) -> np.ndarray:
        """Off-diagonal path values with a zero diagonal, shape (m, p, p)."""
        values = self.edge_values(z_values)
        p = self.graph.p
        raw = np.zeros((values.shape[0], p, p))
        edges = self.graph.edges.sorted()
        if edges:
            u, v = np.array(edges).T
            raw[:, u, v] = values
            raw[:, v, u] = values
        return raw

    def precision_at(self, z_values: np.ndarray) -> np.ndarray:
        """Omega*(z) after the positive-definiteness floor, shape (m, p, p)."""
        return enforce_pd(self.raw_precision_at(z_values), self.pd_floor)


@dataclass(frozen=True)
class GroundTruth:
    grid: IndexGrid
    matrices: np.ndarray
    support: EdgeSet


def build_scenario(
    graph: GraphSpec, path_kind: str, seed, pd_floor: float = 0.5
) -> ScenarioSpec:
    require_choice(path_kind, PATH_KINDS, "path_kind")
    parameters = _draw_path_parameters(path_kind, len(graph.edges), _rng(seed))
    return ScenarioSpec(
        graph=graph, path_kind=path_kind, parameters=parameters, pd_floor=pd_floor, seed=seed
    )


def make_scenario(
    graph_kind: str, p: int, path_kind: str, seed: int, pd_floor: float = 0.5
) -> ScenarioSpec:
    """Graph and paths drawn from independent streams spawned from ``seed``."""
    graph_seed, path_seed = np.random.SeedSequence(seed).spawn(2)
    graph = generate_graph(graph_kind, p, graph_seed)
    scenario = replace(build_scenario(graph, path_kind, path_seed, pd_floor), seed=int(seed))
    logger.info(
        f"Scenario: {graph_kind} p={p} edges={len(graph.edges)} paths={path_kind} seed={seed}"
    )
    return scenario


def generate_precision_field(
    graph: GraphSpec, path_kind: str, grid: IndexGrid, seed, pd_floor: float = 0.5
) -> np.ndarray:
    """Omega*(z_k) on the grid for freshly drawn path parameters, shape (K, p, p)."""
    return build_scenario(graph, path_kind, seed, pd_floor).precision_at(grid.points)


def enforce_pd(matrices: np.ndarray, floor: float = 0.5) -> np.ndarray:
    """
    Adds delta(z) I with delta(z) = max(0, floor - lambda_min) to every matrix.
    """
    matrices = np.asarray(matrices, dtype=float)
    single = matrices.ndim == 2
    stack = matrices[None] if single else matrices
    stack = 0.5 * (stack + stack.transpose(0, 2, 1))
    shift = np.maximum(0.0, floor - np.linalg.eigvalsh(stack)[:, 0])
    result = stack + shift[:, None, None] * np.eye(stack.shape[1])[None]
    return result[0] if single else result


def sample_dataset(
    scenario: ScenarioSpec, n: int, seed, grid: Optional[IndexGrid] = None
) -> Tuple[IndexedSample, GroundTruth]:
    """
    Draws z_i ~ U[0, 1] and x_i = Sigma*(z_i)^(1/2) eps_i with the symmetric
    eigen square root of Sigma*(z_i) = Omega*(z_i)^-1, evaluated exactly at z_i.

    Returns:
        The sample and Omega* on ``grid`` (51 uniform points by default)
    """
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n}", field="n", value=n)
    n = int(n)
    rng = _rng(seed)
    z = rng.uniform(size=n)
    noise = rng.standard_normal((n, scenario.graph.p))
    x = np.empty_like(noise)
    for start in range(0, n, _SAMPLING_CHUNK):
        stop = min(start + _SAMPLING_CHUNK, n)
        eigenvalues, Q = np.linalg.eigh(scenario.precision_at(z[start:stop]))
        rotated = np.einsum("mji,mj->mi", Q, noise[start:stop]) / np.sqrt(eigenvalues)
        x[start:stop] = np.einsum("mij,mj->mi", Q, rotated)

    grid = grid if grid is not None else uniform_grid(51)
    truth = GroundTruth(
        grid=grid, matrices=scenario.precision_at(grid.points), support=scenario.graph.edges
    )
    return IndexedSample(z=z, x=x), truth


SCENARIO_KEYS = ("graph_kind", "p", "seed", "path_kind", "pd_floor")


def save_scenario(scenario: ScenarioSpec, path: str, header: Optional[str] = None) -> None:
    """Writes the scenario recipe as key=value lines."""
    values = {
        "graph_kind": scenario.graph.kind,
        "p": scenario.graph.p,
        "seed": scenario.seed,
        "path_kind": scenario.path_kind,
        "pd_floor": repr(float(scenario.pd_floor)),
    }
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write((header or "# ccs synthetic scenario") + "\n")
            for key in SCENARIO_KEYS:
                f.write(f"{key}={values[key]}\n")
    except OSError as e:
        raise FileOperationError(
            f"Failed to write scenario: {e}", file_path=path, operation="write"
        )


def load_scenario(path: str) -> ScenarioSpec:
    """Regenerates a scenario from its saved recipe."""
    raw = ConfigValidator.read_config_file(path)
    missing = [key for key in SCENARIO_KEYS if key not in raw]
    if missing:
        raise ValidationError(f"Scenario file {path} is missing keys {missing}", field="scenario")
    values = {key: ConfigValidator.parse_value(key, raw[key], path) for key in SCENARIO_KEYS}
    return make_scenario(
        values["graph_kind"], values["p"], values["path_kind"], values["seed"], values["pd_floor"]
    )
