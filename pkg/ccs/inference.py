"""
De-sparsified precision estimates and pointwise confidence intervals.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ccs.kernels import density_estimate, kernel_l2_norm
from ccs.local_moments import CovarianceField, IndexedSample, IndexGrid
from ccs.solvers import EdgeSet, PrecisionField
from utils.exceptions import EmptyBandwidthError, GridMismatchError, ValidationError
from utils.validators import RATE_MODES, require_choice, require_positive, require_unit_interval

logger = logging.getLogger(__name__)

# Exponent r of the n^(-r) factor in the half-width
RATE_EXPONENTS = {
    "undersmoothed": 3.0 / 8.0,
    "theorem": 2.0 / 5.0,
}


def debias(omega: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """
    De-sparsified estimate 2*Omega - Omega Sigma Omega.

    Works on single matrices (p, p) and stacks (K, p, p) alike.
    """
    omega = np.asarray(omega, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if omega.shape != sigma.shape or omega.shape[-1] != omega.shape[-2]:
        raise GridMismatchError(
            f"debias needs square inputs of equal shape, got {omega.shape} and {sigma.shape}"
        )
    result = 2.0 * omega - omega @ sigma @ omega
    return 0.5 * (result + np.swapaxes(result, -1, -2))


def normal_quantile(p: float) -> float:
    """Standard normal quantile, polished by one Newton step on the CDF."""
    require_unit_interval(p, "p", open_interval=True)
    x = float(special.ndtri(p))
    density = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    if density > 0.0:
        x -= (float(special.ndtr(x)) - p) / density
    return x


@dataclass(frozen=True)
class ConfidenceBand:
    """
    Pointwise intervals per grid point and ordered pair.

    ``point``, ``lower`` and ``upper`` have shape (K, p, p).
    """

    grid: IndexGrid
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    rate_mode: str
    n: int

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def band_half_width(
    omega: np.ndarray, density: np.ndarray, n: int, alpha: float, rate_mode: str, kind: str
) -> np.ndarray:
    """
    q_{1-alpha/2} * n^(-r) * sqrt((Omega_uv^2 + Omega_uu Omega_vv) / f(z) * int K^2).

    Args:
        omega: Estimates, shape (K, p, p)
        density: Index density estimate per grid point, shape (K,)
    """
    require_choice(rate_mode, RATE_MODES, "rate_mode")
    quantile = normal_quantile(1.0 - alpha / 2.0)
    diag = np.diagonal(omega, axis1=1, axis2=2)
    variance = omega**2 + diag[:, :, None] * diag[:, None, :]
    variance = np.maximum(variance, 0.0) / density[:, None, None] * kernel_l2_norm(kind)
    return quantile * n ** (-RATE_EXPONENTS[rate_mode]) * np.sqrt(variance)


def confidence_band(
    field: PrecisionField,
    cov: CovarianceField,
    sample: IndexedSample,
    alpha: float,
    rate_mode: str = "undersmoothed",
    kind: str = "epanechnikov",
    h: Optional[float] = None,
) -> ConfidenceBand:
    """
    Pointwise (1 - alpha) intervals around the de-sparsified estimate.

    The density in the width uses the same kernel and bandwidth as ``cov``
    unless ``h`` is given.

    Raises:
        GridMismatchError: Field and covariance are on different grids
        EmptyBandwidthError: Density estimate is zero at a grid point
    """
    require_unit_interval(alpha, "alpha", open_interval=True)
    require_choice(rate_mode, RATE_MODES, "rate_mode")
    if not field.grid.same_as(cov.grid) or field.matrices.shape != cov.matrices.shape:
        raise GridMismatchError("Precision and covariance fields must share grid and dimension")
    h = require_positive(h if h is not None else cov.h, "h")

    density = np.asarray(density_estimate(field.grid.points, sample.z, h, kind))
    empty = np.flatnonzero(density <= 0.0)
    if empty.size:
        z_bad = float(field.grid.points[empty[0]])
        raise EmptyBandwidthError(
            f"Index density estimate is zero at grid point {empty[0]} (z={z_bad:.6g})",
            z_query=z_bad,
            h=h,
        )

    point = debias(field.matrices, cov.matrices)
    half = band_half_width(field.matrices, density, sample.n, alpha, rate_mode, kind)
    logger.debug(
        f"Confidence band: alpha={alpha}, mode={rate_mode}, n={sample.n}, "
        f"mean half-width={float(half.mean()):.4g}"
    )
    return ConfidenceBand(
        grid=field.grid,
        point=point,
        lower=point - half,
        upper=point + half,
        alpha=alpha,
        rate_mode=rate_mode,
        n=sample.n,
    )


@dataclass(frozen=True)
class CoverageSummary:
    """
    Empirical coverage and mean interval length on the support S and on its
    complement S^c (off-diagonal pairs only).
    """

    avgcov_S: float
    avgcov_Sc: float
    avglength_S: float
    avglength_Sc: float
    pair_coverage: np.ndarray
    replicates: int

    def as_dict(self) -> dict:
        return {
            "avgcov_S": self.avgcov_S,
            "avgcov_Sc": self.avgcov_Sc,
            "avglength_S": self.avglength_S,
            "avglength_Sc": self.avglength_Sc,
            "replicates": self.replicates,
        }


def _mean_or_nan(values: np.ndarray) -> float:
    return float(values.mean()) if values.size else float("nan")


def coverage_tally(
    truth: np.ndarray,
    bands: Sequence[ConfidenceBand],
    support: Optional[EdgeSet] = None,
) -> CoverageSummary:
    """
    Fraction of (replicate, grid point) pairs whose interval contains the truth.

    Args:
        truth: True precision matrices on the bands' grid, shape (K, p, p)
        bands: One band per replicate
        support: True edge set; defaults to pairs that are nonzero somewhere

    Bounds are inclusive.
    """
    truth = np.asarray(truth, dtype=float)
    if not bands:
        raise ValidationError("coverage_tally needs at least one band", field="bands")
    for band in bands:
        if band.point.shape != truth.shape or not band.grid.same_as(bands[0].grid):
            raise GridMismatchError("Every band must share the truth's grid and dimension")

    lower = np.stack([band.lower for band in bands])
    upper = np.stack([band.upper for band in bands])
    covered = (lower <= truth[None]) & (truth[None] <= upper)
    pair_coverage = covered.mean(axis=(0, 1))
    with np.errstate(invalid="ignore"):
        pair_length = (upper - lower).mean(axis=(0, 1))

    p = truth.shape[1]
    if support is None:
        support = EdgeSet.from_mask(np.any(truth != 0.0, axis=0))
    in_support = support.mask()
    upper_pairs = np.triu(np.ones((p, p), dtype=bool), k=1)
    on_S = upper_pairs & in_support
    on_Sc = upper_pairs & ~in_support

    summary = CoverageSummary(
        avgcov_S=_mean_or_nan(pair_coverage[on_S]),
        avgcov_Sc=_mean_or_nan(pair_coverage[on_Sc]),
        avglength_S=_mean_or_nan(pair_length[on_S]),
        avglength_Sc=_mean_or_nan(pair_length[on_Sc]),
        pair_coverage=pair_coverage,
        replicates=len(bands),
    )
    logger.info(
        f"Coverage over {len(bands)} replicates: S={summary.avgcov_S:.4f}, "
        f"Sc={summary.avgcov_Sc:.4f}"
    )
    return summary
