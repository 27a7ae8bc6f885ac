"""
Kernel functions, Nadaraya-Watson smoothing weights and kernel density estimates.

Conventions:
    u = (z_i - z_query) / h
    K_h(t) = K(t / h) / h

All kernels are symmetric densities supported on [-1, 1]. Bandwidths are
expressed on the rescaled index scale [0, 1].
"""

import logging
from typing import Union

import numpy as np

from utils.exceptions import EmptyBandwidthError, ValidationError
from utils.validators import KERNEL_KINDS, require_choice, require_positive

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Closed-form values of the integral of K(t)^2 over [-1, 1]
_L2_NORMS = {
    "epanechnikov": 0.6,
    "boxcar": 0.5,
    "tricube": 175.0 / 247.0,
}

BANDWIDTH_RATES = {
    "estimation": -1.0 / 5.0,
    "inference": -1.0 / 4.0,
}


def kernel_eval(kind: str, u: ArrayLike) -> ArrayLike:
    """
    Evaluates K(u); zero outside [-1, 1].

    Args:
        kind: One of ``epanechnikov``, ``boxcar``, ``tricube``
        u: Scalar or array of scaled distances

    Returns:
        Kernel values with the shape of ``u`` (a float for scalar input)
    """
    require_choice(kind, KERNEL_KINDS, "kernel")
    arr = np.asarray(u, dtype=float)
    a = np.abs(arr)
    inside = a <= 1.0
    if kind == "epanechnikov":
        values = 0.75 * (1.0 - arr * arr)
    elif kind == "boxcar":
        values = np.full_like(arr, 0.5)
    else:
        values = (70.0 / 81.0) * (1.0 - a**3) ** 3
    values = np.where(inside, values, 0.0)
    if np.ndim(u) == 0:
        return float(values)
    return values


def smoothing_weights(
    z_query: float, index_points: np.ndarray, h: float, kind: str
) -> np.ndarray:
    """
    Normalised local weights w_i = K_h(z_i - z_query) / sum_j K_h(z_j - z_query).

    Raises:
        EmptyBandwidthError: No index point within h of ``z_query``
    """
    h = require_positive(h, "h")
    points = np.asarray(index_points, dtype=float)
    if points.size == 0:
        raise ValidationError("index_points must be non-empty", field="index_points")
    raw = kernel_eval(kind, (points - z_query) / h)
    total = raw.sum()
    if total <= 0.0:
        raise EmptyBandwidthError(
            f"No sample within h={h:.6g} of z={z_query:.6g}", z_query=z_query, h=h
        )
    return raw / total


def smoothing_weight_matrix(
    z_queries: np.ndarray, index_points: np.ndarray, h: float, kind: str
) -> np.ndarray:
    """
    Row-normalised weights for many query points at once, shape (K, n).

    Raises:
        EmptyBandwidthError: Names the first query point without neighbours
    """
    h = require_positive(h, "h")
    queries = np.asarray(z_queries, dtype=float)
    points = np.asarray(index_points, dtype=float)
    if points.size == 0:
        raise ValidationError("index_points must be non-empty", field="index_points")
    raw = kernel_eval(kind, (points[None, :] - queries[:, None]) / h)
    totals = raw.sum(axis=1)
    empty = np.flatnonzero(totals <= 0.0)
    if empty.size:
        z_bad = float(queries[empty[0]])
        raise EmptyBandwidthError(
            f"No sample within h={h:.6g} of grid point {empty[0]} (z={z_bad:.6g})",
            z_query=z_bad,
            h=h,
            details={"grid_index": int(empty[0])},
        )
    return raw / totals[:, None]


def density_estimate(
    z_query: ArrayLike, index_points: np.ndarray, h: float, kind: str
) -> ArrayLike:
    """
    Kernel density estimate f(z) = (n h)^-1 sum_i K((z_i - z) / h).

    Accepts a scalar or an array of query points.
    """
    h = require_positive(h, "h")
    points = np.asarray(index_points, dtype=float)
    if points.size == 0:
        raise ValidationError("index_points must be non-empty", field="index_points")
    queries = np.atleast_1d(np.asarray(z_query, dtype=float))
    values = kernel_eval(kind, (points[None, :] - queries[:, None]) / h).sum(axis=1)
    values = values / (points.size * h)
    if np.ndim(z_query) == 0:
        return float(values[0])
    return values


def kernel_l2_norm(kind: str) -> float:
    """Integral of K(t)^2 dt, closed form per kernel."""
    require_choice(kind, KERNEL_KINDS, "kernel")
    return _L2_NORMS[kind]


def default_bandwidth(n: int, c_h: float = 1.0, mode: str = "estimation") -> float:
    """
    h = c_h * n^(-1/5) for estimation, c_h * n^(-1/4) for inference.
    """
    require_choice(mode, tuple(BANDWIDTH_RATES), "mode")
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}", field="n", value=n)
    require_positive(c_h, "c_h")
    return float(c_h * n ** BANDWIDTH_RATES[mode])
