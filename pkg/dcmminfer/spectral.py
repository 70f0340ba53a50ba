#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Top-K eigenpairs with fixed ordering and sign, plus plug-in H and N."""

from dataclasses import dataclass
from enum import Enum
from logging import getLogger
from typing import Final, Tuple

import numpy as np
from scipy.linalg import LinAlgError, eigh

from .utils import (
    AsymmetricMatrixError,
    ConfigurationError,
    EigenConvergenceError,
    EigenGapError,
)

logger = getLogger(__name__)

INPUT_SYMMETRY_TOLERANCE: Final[float] = 1e-10
EIGEN_RESIDUAL_TOLERANCE: Final[float] = 1e-8
EIGEN_GAP_TOLERANCE: Final[float] = 1e-12


class SpectralSource(Enum):
    """Whether a context comes from the observed X or the population H."""

    Observed = "observed"
    GroundTruth = "ground_truth"


@dataclass(frozen=True)
class SpectralContext:
    """Top-K eigenpairs sorted by signed value, largest first.

    Attributes:
        lambdas: length ``K`` eigenvalues, strictly decreasing.
        u: ``n x K`` orthonormal eigenvectors; column ``j`` pairs with
            ``lambdas[j]``.
        u1_sign_fixed: whether the first column was negated to make its
            entry sum nonnegative.
        source: which matrix the pairs were taken from.
    """

    lambdas: np.ndarray
    u: np.ndarray
    u1_sign_fixed: bool = False
    source: SpectralSource = SpectralSource.Observed

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def k(self) -> int:
        return self.u.shape[1]

    @property
    def u1(self) -> np.ndarray:
        """Leading eigenvector."""
        return self.u[:, 0]

    @property
    def u_bar(self) -> np.ndarray:
        """Trailing ``n x (K - 1)`` eigenvectors."""
        return self.u[:, 1:]

    @property
    def lambda1(self) -> float:
        return float(self.lambdas[0])

    @property
    def lambda_bar(self) -> np.ndarray:
        """Trailing eigenvalues ``(lambda_2, ..., lambda_K)``."""
        return self.lambdas[1:]

    def residuals(self, matrix: np.ndarray) -> np.ndarray:
        """Return ``||M u_j - lambda_j u_j||_2`` for every column."""
        return np.linalg.norm(matrix @ self.u - self.u * self.lambdas, axis=0)


def check_symmetric(
    matrix: np.ndarray, tolerance: float = INPUT_SYMMETRY_TOLERANCE
) -> None:
    """Raise ``AsymmetricMatrixError`` if ``matrix`` is not symmetric."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigurationError(
            f"Expected a square matrix, got shape {matrix.shape}."
        )
    asymmetry = np.abs(matrix - matrix.T)
    worst = float(asymmetry.max()) if asymmetry.size else 0.0
    if worst > tolerance:
        position = np.unravel_index(np.argmax(asymmetry), asymmetry.shape)
        raise AsymmetricMatrixError(
            worst, (int(position[0]), int(position[1]))
        )


def _eigh(
    matrix: np.ndarray, subset: Tuple[int, int]
) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return eigh(matrix, subset_by_index=list(subset), driver="evr")
    except LinAlgError as error:
        raise EigenConvergenceError(
            f"Symmetric eigensolver failed to converge: {error}"
        )


def _fix_leading_sign(u1: np.ndarray) -> bool:
    """Return whether ``u1`` must be negated for a nonnegative entry sum."""
    total = u1.sum()
    if total != 0:
        return bool(total < 0)
    nonzero = np.flatnonzero(u1)
    return bool(nonzero.size and u1[nonzero[0]] < 0)


def eigen_topk(
    matrix: np.ndarray,
    k: int,
    source: SpectralSource = SpectralSource.Observed,
) -> SpectralContext:
    """Return the ``k`` eigenpairs of largest magnitude, sorted descending.

    The candidates are the ``k`` largest and ``k`` smallest eigenpairs (both
    ends of the spectrum); the ``k`` of largest magnitude are kept, ties in
    magnitude keeping the more positive value. The leading eigenvector is
    negated if its entries sum to a negative number (or, for a zero sum, if
    its first nonzero entry is negative).

    Args:
        matrix: symmetric ``n x n`` matrix.
        k: number of eigenpairs, ``1 <= k <= n``.
        source: label recorded on the returned context.

    Raises:
        AsymmetricMatrixError: ``matrix`` is not symmetric within 1e-10.
        ConfigurationError: ``k`` outside ``[1, n]``.
        EigenConvergenceError: the solver fails or a residual exceeds
            ``1e-8 * (1 + |lambda|)``.
    """
    matrix = np.asarray(matrix, dtype=float)
    check_symmetric(matrix)
    n = matrix.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"Need 1 <= K <= n, got K={k}, n={n}.")
    if 2 * k >= n:
        values, vectors = _eigh(matrix, (0, n - 1))
    else:
        low_values, low_vectors = _eigh(matrix, (0, k - 1))
        high_values, high_vectors = _eigh(matrix, (n - k, n - 1))
        values = np.concatenate([low_values, high_values])
        vectors = np.hstack([low_vectors, high_vectors])
    chosen = np.lexsort((-values, -np.abs(values)))[:k]
    chosen = chosen[np.argsort(-values[chosen], kind="stable")]
    lambdas = values[chosen].copy()
    u = vectors[:, chosen].copy()
    flipped = _fix_leading_sign(u[:, 0])
    if flipped:
        u[:, 0] = -u[:, 0]
    for array in (lambdas, u):
        array.setflags(write=False)
    context = SpectralContext(
        lambdas=lambdas, u=u, u1_sign_fixed=flipped, source=source
    )
    residuals = context.residuals(matrix)
    logger.debug(
        f"Top {k} eigenvalues {np.round(lambdas, 6).tolist()} "
        f"(max residual {residuals.max():.3g})"
    )
    limits = EIGEN_RESIDUAL_TOLERANCE * (1 + np.abs(lambdas))
    if np.any(residuals > limits):
        worst = int(np.argmax(residuals / limits))
        raise EigenConvergenceError(
            f"Eigenpair {worst} residual {residuals[worst]:.3g} exceeds "
            f"{limits[worst]:.3g}."
        )
    return context


def check_eigen_gap(spec: SpectralContext) -> None:
    """Raise ``EigenGapError`` if ``lambda_1`` meets another eigenvalue."""
    lambda1 = spec.lambda1
    for index, other in enumerate(spec.lambdas[1:], 1):
        if abs(lambda1 - other) <= EIGEN_GAP_TOLERANCE * max(abs(lambda1), 1):
            raise EigenGapError(lambda1, float(other), index)


def h_hat(spec: SpectralContext) -> np.ndarray:
    """Return the rank-K reconstruction ``sum_j lambda_j u_j u_j^T``."""
    h = (spec.u * spec.lambdas) @ spec.u.T
    return (h + h.T) / 2


def n_matrix(spec: SpectralContext) -> np.ndarray:
    """Return ``N`` with eigenvalues beyond the top K treated as zero.

    ``N = (I - U U^T) + sum_{j >= 2} lambda_1 / (lambda_1 - lambda_j)
    u_j u_j^T``, so ``N u_1 = 0`` and ``N`` is the identity on the
    complement of the top-K eigenspace.
    """
    check_eigen_gap(spec)
    weights = spec.lambda1 / (spec.lambda1 - spec.lambda_bar)
    n = np.eye(spec.n) - spec.u @ spec.u.T
    n += (spec.u_bar * weights) @ spec.u_bar.T
    return (n + n.T) / 2


def plug_in_ctx(spec: SpectralContext) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(H_hat, N_hat)`` built from ``spec``."""
    return h_hat(spec), n_matrix(spec)
