"""
Proximal operators used by the conditional covariance selection solvers.

Stacks are arrays of shape (K, p, p): one symmetric matrix per grid point.
Groups are ordered off-diagonal pairs (u, v) spanning all grid points;
diagonals are never penalised.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ccs.local_moments import IndexGrid
from utils.exceptions import GridMismatchError, ValidationError
from utils.validators import require_positive

logger = logging.getLogger(__name__)

# Largest asymmetry accepted by the log-determinant prox
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class MatrixStack:
    """One symmetric p x p matrix per grid point."""

    grid: IndexGrid
    matrices: np.ndarray

    def __post_init__(self):
        matrices = np.asarray(self.matrices, dtype=float)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise ValidationError("Matrix stack must have shape (K, p, p)", field="matrices")
        if matrices.shape[0] != len(self.grid):
            raise GridMismatchError(
                f"{matrices.shape[0]} matrices for a grid of {len(self.grid)} points"
            )
        object.__setattr__(self, "matrices", matrices)


StackLike = Union[MatrixStack, np.ndarray]


def _as_array(stack: StackLike) -> np.ndarray:
    if isinstance(stack, MatrixStack):
        return stack.matrices
    matrices = np.asarray(stack, dtype=float)
    if matrices.ndim == 2:
        matrices = matrices[None]
    if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
        raise ValidationError("Matrix stack must have shape (K, p, p)", field="stack")
    return matrices


def _like(stack: StackLike, matrices: np.ndarray) -> StackLike:
    if isinstance(stack, MatrixStack):
        return MatrixStack(grid=stack.grid, matrices=matrices)
    if np.ndim(stack) == 2:
        return matrices[0]
    return matrices


def group_norms(stack: StackLike) -> np.ndarray:
    """
    Euclidean norm of every entry across grid points, shape (p, p).

    The diagonal is reported as zero since it never forms a group.
    """
    matrices = _as_array(stack)
    norms = np.sqrt(np.einsum("kuv,kuv->uv", matrices, matrices))
    np.fill_diagonal(norms, 0.0)
    return norms


def group_penalty(stack: StackLike) -> float:
    """Sum of group norms over ordered off-diagonal pairs."""
    return float(group_norms(stack).sum())


def l1_penalty(stack: StackLike) -> float:
    """Sum of absolute off-diagonal entries over all grid points."""
    matrices = _as_array(stack)
    total = np.abs(matrices).sum()
    diagonal = np.abs(np.diagonal(matrices, axis1=1, axis2=2)).sum()
    return float(total - diagonal)


def group_prox(stack: StackLike, t: float) -> StackLike:
    """
    Block soft-thresholding of every off-diagonal group.

    Each entry (u, v) is scaled by (1 - t / g_uv)_+ with g_uv the group norm;
    groups with g_uv <= t become exactly zero at every grid point.
    """
    t = require_positive(t, "t")
    matrices = _as_array(stack)
    norms = group_norms(matrices)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > t, 1.0 - t / norms, 0.0)
    np.fill_diagonal(scale, 1.0)
    return _like(stack, matrices * scale[None, :, :])


def soft_threshold_prox(stack: StackLike, t: float) -> StackLike:
    """Entrywise sign(a)(|a| - t)_+ on off-diagonals, independently per grid point."""
    t = require_positive(t, "t")
    matrices = _as_array(stack)
    shrunk = np.sign(matrices) * np.maximum(np.abs(matrices) - t, 0.0)
    p = matrices.shape[1]
    diag = np.arange(p)
    shrunk[:, diag, diag] = matrices[:, diag, diag]
    return _like(stack, shrunk)


def _logdet_eigenvalues(eigenvalues: np.ndarray, L: float) -> np.ndarray:
    # Positive root of L*w - 1/w = lambda; the negative branch uses the
    # rationalised form to avoid cancellation
    root = np.sqrt(eigenvalues * eigenvalues + 4.0 * L)
    return np.where(
        eigenvalues >= 0.0,
        (eigenvalues + root) / (2.0 * L),
        2.0 / (root - eigenvalues),
    )


def logdet_prox_with_spectrum(A: np.ndarray, L: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched log-determinant prox returning the prox eigenvalues as well.

    Args:
        A: Symmetric matrix (p, p) or stack (K, p, p)
        L: Positive curvature

    Returns:
        (Omega, omega) where omega holds the eigenvalues of each Omega

    Raises:
        ValidationError: Asymmetry above tolerance
        numpy.linalg.LinAlgError: Eigendecomposition failed
    """
    L = require_positive(L, "L")
    A = np.asarray(A, dtype=float)
    asymmetry = np.max(np.abs(A - np.swapaxes(A, -1, -2))) if A.size else 0.0
    if not np.isfinite(asymmetry) or asymmetry > SYMMETRY_TOL:
        raise ValidationError(
            f"logdet_prox needs a symmetric input, asymmetry {asymmetry:.3g}", field="A"
        )
    eigenvalues, Q = np.linalg.eigh(L * A)
    omega = _logdet_eigenvalues(eigenvalues, L)
    Omega = (Q * omega[..., None, :]) @ np.swapaxes(Q, -1, -2)
    Omega = 0.5 * (Omega + np.swapaxes(Omega, -1, -2))
    return Omega, omega


def logdet_prox(A: np.ndarray, L: float) -> np.ndarray:
    """
    argmin over PD Omega of L/2 ||Omega - A||_F^2 - log det Omega.

    The result satisfies L*Omega - inv(Omega) = L*A.
    """
    Omega, _ = logdet_prox_with_spectrum(A, L)
    return Omega


def moreau_gradient(stack: StackLike, lam: float, beta: float) -> StackLike:
    """
    Gradient of the beta-Moreau envelope of the group penalty:
    (X - group_prox(X, lam * beta)) / beta.
    """
    beta = require_positive(beta, "beta")
    lam = require_positive(lam, "lambda")
    matrices = _as_array(stack)
    shrunk = _as_array(group_prox(matrices, lam * beta))
    return _like(stack, (matrices - shrunk) / beta)
