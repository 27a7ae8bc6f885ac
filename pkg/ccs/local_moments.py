"""
Locally weighted mean and covariance estimators evaluated on index grids.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ccs.kernels import default_bandwidth, smoothing_weight_matrix, smoothing_weights
from utils.exceptions import GridMismatchError, ValidationError
from utils.validators import CENTERING_MODES, KERNEL_KINDS, require_choice

logger = logging.getLogger(__name__)

# Rows of the per-observation centering weight matrix computed at a time
_CENTERING_CHUNK = 1024


@dataclass(frozen=True)
class IndexGrid:
    """Strictly increasing index points within [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).ravel()
        if points.size == 0:
            raise ValidationError("Index grid must be non-empty", field="grid")
        if not np.all(np.isfinite(points)) or points[0] < 0.0 or points[-1] > 1.0:
            raise ValidationError("Index grid must lie within [0, 1]", field="grid")
        if np.any(np.diff(points) <= 0.0):
            raise ValidationError("Index grid must be strictly increasing", field="grid")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return int(self.points.size)

    def same_as(self, other: "IndexGrid") -> bool:
        return len(self) == len(other) and bool(np.array_equal(self.points, other.points))


def uniform_grid(K: int) -> IndexGrid:
    """K equally spaced points 0, 1/(K-1), ..., 1."""
    if int(K) != K or K < 2:
        raise ValidationError(f"Grid size must be an integer >= 2, got {K}", field="K", value=K)
    return IndexGrid(np.linspace(0.0, 1.0, int(K)))


def rescale_index(z: np.ndarray) -> np.ndarray:
    """Affine map of z onto [0, 1] (min -> 0, max -> 1), order preserved."""
    z = np.asarray(z, dtype=float)
    low, high = z.min(), z.max()
    if high <= low:
        raise ValidationError("Index variable is constant and cannot be rescaled", field="z")
    scaled = (z - low) / (high - low)
    return np.clip(scaled, 0.0, 1.0)


@dataclass(frozen=True)
class IndexedSample:
    """
    n observations (z_i, x_i) with z_i in [0, 1] and x_i in R^p.

    Attributes:
        z: Index values, shape (n,)
        x: Observations, shape (n, p)
        columns: Names of the p variables
    """

    z: np.ndarray
    x: np.ndarray
    columns: Optional[List[str]] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != z.size:
            raise ValidationError(
                f"x must have shape (n, p) with n = len(z) = {z.size}, got {x.shape}",
                field="x",
            )
        if z.size < 1 or x.shape[1] < 1:
            raise ValidationError("Sample needs n >= 1 and p >= 1", field="x")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
            raise ValidationError("Sample contains non-finite values", field="x")
        if z.min() < 0.0 or z.max() > 1.0:
            raise ValidationError("Index values must lie in [0, 1]", field="z")
        columns = self.columns
        if columns is None:
            columns = [f"x{j}" for j in range(x.shape[1])]
        elif len(columns) != x.shape[1]:
            raise ValidationError("One column name per variable is required", field="columns")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "columns", list(columns))

    @classmethod
    def from_arrays(
        cls,
        z: Sequence[float],
        x: np.ndarray,
        columns: Optional[List[str]] = None,
        rescale: bool = True,
    ) -> "IndexedSample":
        z = np.asarray(z, dtype=float)
        if rescale:
            z = rescale_index(z)
        return cls(z=z, x=np.asarray(x, dtype=float), columns=columns)

    @property
    def n(self) -> int:
        return int(self.z.size)

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    def subset(self, indices: Sequence[int]) -> "IndexedSample":
        indices = np.asarray(indices, dtype=int)
        return IndexedSample(z=self.z[indices], x=self.x[indices], columns=self.columns)


@dataclass(frozen=True)
class MeanField:
    grid: IndexGrid
    means: np.ndarray


@dataclass(frozen=True)
class CovarianceField:
    """
    Kernel-smoothed covariance matrices on an index grid.

    Matrices are symmetrised on construction. ``n_samples`` records the
    sample size the field was computed from.
    """

    grid: IndexGrid
    matrices: np.ndarray
    h: float
    kind: str
    centering: str
    n_samples: int = 0

    def __post_init__(self):
        matrices = np.asarray(self.matrices, dtype=float)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise ValidationError("Covariance stack must have shape (K, p, p)", field="matrices")
        if matrices.shape[0] != len(self.grid):
            raise GridMismatchError(
                f"{matrices.shape[0]} matrices for a grid of {len(self.grid)} points"
            )
        require_choice(self.kind, KERNEL_KINDS, "kernel")
        require_choice(self.centering, CENTERING_MODES, "centering")
        matrices = 0.5 * (matrices + matrices.transpose(0, 2, 1))
        object.__setattr__(self, "matrices", matrices)

    @property
    def p(self) -> int:
        return int(self.matrices.shape[1])

    @property
    def K(self) -> int:
        return int(self.matrices.shape[0])


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing choices of the estimation pipeline."""

    kernel: str = "epanechnikov"
    c_h: float = 1.0
    grid_size: int = 51
    centering: str = "per_observation"

    def __post_init__(self):
        require_choice(self.kernel, KERNEL_KINDS, "kernel")
        require_choice(self.centering, CENTERING_MODES, "centering")

    def bandwidth(self, n: int, mode: str = "estimation") -> float:
        return default_bandwidth(n, self.c_h, mode)

    def grid(self) -> IndexGrid:
        return uniform_grid(self.grid_size)


def local_mean(sample: IndexedSample, z_query: float, h: float, kind: str) -> np.ndarray:
    """Nadaraya-Watson mean m(z) = sum_i w_i(z) x_i."""
    weights = smoothing_weights(z_query, sample.z, h, kind)
    return weights @ sample.x


def local_mean_field(sample: IndexedSample, grid: IndexGrid, h: float, kind: str) -> MeanField:
    weights = smoothing_weight_matrix(grid.points, sample.z, h, kind)
    return MeanField(grid=grid, means=weights @ sample.x)


def _per_observation_centers(sample: IndexedSample, h: float, kind: str) -> np.ndarray:
    # Every z_i lies within h of itself, so these weights are always defined
    centers = np.empty_like(sample.x)
    for start in range(0, sample.n, _CENTERING_CHUNK):
        stop = min(start + _CENTERING_CHUNK, sample.n)
        weights = smoothing_weight_matrix(sample.z[start:stop], sample.z, h, kind)
        centers[start:stop] = weights @ sample.x
    return centers


def local_covariance_field(
    sample: IndexedSample,
    grid: IndexGrid,
    h: float,
    kind: str,
    centering: str = "per_observation",
) -> CovarianceField:
    """
    Locally weighted covariance at every grid point.

    Sigma(z_k) = sum_i w_i(z_k) (x_i - c_i)(x_i - c_i)^T where c_i is the local
    mean at z_i (``per_observation``), the local mean at z_k (``at_target``)
    or zero (``none``).

    Raises:
        EmptyBandwidthError: A grid point has no sample within h
    """
    require_choice(centering, CENTERING_MODES, "centering")
    weights = smoothing_weight_matrix(grid.points, sample.z, h, kind)

    if centering == "per_observation":
        residuals = sample.x - _per_observation_centers(sample, h, kind)
    elif centering == "none":
        residuals = sample.x

    matrices = np.empty((len(grid), sample.p, sample.p))
    for k in range(len(grid)):
        w = weights[k]
        if centering == "at_target":
            residuals = sample.x - w @ sample.x
        matrices[k] = (residuals * w[:, None]).T @ residuals

    logger.debug(
        f"Covariance field: n={sample.n}, p={sample.p}, K={len(grid)}, h={h:.4g}, "
        f"kernel={kind}, centering={centering}"
    )
    return CovarianceField(
        grid=grid, matrices=matrices, h=h, kind=kind, centering=centering, n_samples=sample.n
    )


def pooled_covariance(sample: IndexedSample) -> np.ndarray:
    """Mean-centred sample covariance with 1/n normalisation, ignoring z."""
    residuals = sample.x - sample.x.mean(axis=0)
    cov = residuals.T @ residuals / sample.n
    return 0.5 * (cov + cov.T)


def interpolate_field(field, z_query: float, mode: str = "nearest") -> np.ndarray:
    """
    Evaluates a grid-valued matrix field at an arbitrary index value.

    ``nearest`` returns the stored matrix at the closest grid point (ties go to
    the lower point); ``linear`` interpolates entrywise between the bracketing
    grid points. Queries outside the grid's span return the end matrix.

    Args:
        field: Any object with ``grid`` and ``matrices`` (precision or covariance)
        z_query: Index value in [0, 1]
        mode: ``nearest`` or ``linear``
    """
    require_choice(mode, ("nearest", "linear"), "mode")
    if not (0.0 <= z_query <= 1.0):
        raise ValidationError(f"z_query must lie in [0, 1], got {z_query}", field="z_query")
    points = field.grid.points
    matrices = field.matrices
    upper = int(np.searchsorted(points, z_query, side="left"))
    if upper < len(points) and points[upper] == z_query:
        return matrices[upper].copy()
    if upper == 0:
        return matrices[0].copy()
    if upper == len(points):
        return matrices[-1].copy()
    lower = upper - 1
    z_low, z_high = points[lower], points[upper]
    if mode == "nearest":
        index = lower if (z_query - z_low) <= (z_high - z_query) else upper
        return matrices[index].copy()
    t = (z_query - z_low) / (z_high - z_low)
    return (1.0 - t) * matrices[lower] + t * matrices[upper]


def nearest_grid_indices(grid: IndexGrid, z_values: np.ndarray) -> np.ndarray:
    """Vectorised nearest grid index with ties resolved to the lower point."""
    points = grid.points
    z_values = np.asarray(z_values, dtype=float)
    upper = np.clip(np.searchsorted(points, z_values, side="left"), 0, len(points) - 1)
    lower = np.clip(upper - 1, 0, len(points) - 1)
    choose_lower = np.abs(z_values - points[lower]) <= np.abs(points[upper] - z_values)
    return np.where(choose_lower, lower, upper)
