#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Membership reconstruction from SCORE embeddings and simplex vertices.

The three estimation steps run in order inside ``fit_mixed_score``:

1. ``eigen_topk`` and ``score_embedding`` map nodes to ``r_i``.
2. ``successive_projection`` finds the vertices ``b_k``.
3. ``reconstruct_pi`` solves barycentric coordinates ``a_i``, rescales them
   by ``c_k`` and renormalises to ``pi_i``.

``ground_truth_quantities`` repeats steps 1 and 3 on the population matrix
``H`` with the true pure-node sets in place of step 2.
"""

from dataclasses import dataclass, replace
from logging import getLogger
from os import PathLike
from pathlib import Path
from typing import Final, List, Optional, Sequence, Tuple, Union

import numpy as np
from pandas import DataFrame
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial.distance import cdist, pdist

from .embedding import Embedding, score_embedding
from .model import AdjacencyMatrix, DcmmParams, build_h
from .spectral import SpectralContext, SpectralSource, eigen_topk
from .utils import (
    CSV_FLOAT_FORMAT,
    ConfigurationError,
    DegenerateSimplexError,
    JSONDict,
    ReconstructionError,
    SpectralDegeneracyError,
    write_json,
)
from .vertex_hunt import (
    SINGLE_COMMUNITY_RADIUS,
    VertexHuntResult,
    default_radius,
    successive_projection,
)

logger = getLogger(__name__)

SIMPLEX_CONDITION_LIMIT: Final[float] = 1e12
NORMALISER_TOLERANCE: Final[float] = 1e-12


def membership_columns(k: int) -> List[str]:
    """Membership headers ``pi_1 .. pi_K``."""
    return [f"pi_{index}" for index in range(1, k + 1)]


def augmented_vertex_matrix(vertices: np.ndarray) -> np.ndarray:
    """Return the ``K x K`` matrix with columns ``(b_k, 1)``."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    return np.vstack([vertices.T, np.ones(vertices.shape[0])])


def _factor_simplex(b_aug: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    condition = float(np.linalg.cond(b_aug))
    if not np.isfinite(condition) or condition >= SIMPLEX_CONDITION_LIMIT:
        raise DegenerateSimplexError(condition, SIMPLEX_CONDITION_LIMIT)
    return lu_factor(b_aug)


def barycentric_coords(point: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Solve ``B a = (point, 1)`` for the barycentric coordinates ``a``.

    Raises:
        DegenerateSimplexError: ``B`` has condition number ``>= 1e12``.
    """
    factor = _factor_simplex(augmented_vertex_matrix(vertices))
    return lu_solve(factor, np.append(np.asarray(point, dtype=float), 1.0))


def barycentric_coords_all(
    points: np.ndarray, vertices: np.ndarray
) -> np.ndarray:
    """Return the ``n x K`` barycentric coordinates of all ``points``."""
    factor = _factor_simplex(augmented_vertex_matrix(vertices))
    rhs = np.vstack([np.asarray(points, float).T, np.ones(len(points))])
    return lu_solve(factor, rhs).T


def c_scaling(lambdas: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Return ``c_k = (lambda_1 + b_k^T diag(lambda_2..lambda_K) b_k)^-1/2``.

    Raises:
        SpectralDegeneracyError: a bracketed term is not positive.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    arguments = lambdas[0] + (np.asarray(vertices) ** 2) @ lambdas[1:]
    if np.any(arguments <= 0):
        community = int(np.argmin(arguments))
        raise SpectralDegeneracyError(
            f"c_{community} argument lambda_1 + b^T Lambda b = "
            f"{arguments[community]:.6g} is not positive."
        )
    return arguments ** -0.5


def pi_from_barycentric(
    a: np.ndarray, c: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(pi, normalisers)`` from ``pi'_i(k) = a_i(k) / c_k``.

    Raises:
        ReconstructionError: a node's normaliser is numerically zero.
    """
    pi_prime = a / c
    normalisers = pi_prime.sum(axis=1)
    scale = max(float(np.abs(pi_prime).max(initial=0.0)), 1.0)
    tiny = np.flatnonzero(np.abs(normalisers) <= NORMALISER_TOLERANCE * scale)
    if tiny.size:
        node = int(tiny[0])
        raise ReconstructionError(node, float(normalisers[node]))
    return pi_prime / normalisers[:, None], normalisers


@dataclass(frozen=True)
class MembershipEstimate:
    """Estimated memberships and every reconstruction intermediate.

    Attributes:
        pi_hat: ``n x K`` estimated memberships; rows sum to 1 and may hold
            negative entries unless ``clipped``.
        a_hat: ``n x K`` barycentric coordinates.
        c_hat: length ``K`` scaling.
        lambdas: the ``K`` eigenvalues used.
        b_hat: ``K x K`` augmented vertex matrix.
        raw_negative_mass: per node, the sum of negative entries of the
            unclipped ``pi_hat``.
        points: ``n x (K - 1)`` embedding.
        hunt: vertex hunting result the estimate was built from.
        clipped: whether negative entries were clipped and rows
            renormalised.
    """

    pi_hat: np.ndarray
    a_hat: np.ndarray
    c_hat: np.ndarray
    lambdas: np.ndarray
    b_hat: np.ndarray
    raw_negative_mass: np.ndarray
    points: np.ndarray
    hunt: VertexHuntResult
    clipped: bool = False

    @property
    def n(self) -> int:
        return self.pi_hat.shape[0]

    @property
    def k(self) -> int:
        return self.pi_hat.shape[1]

    @property
    def vertex_sets(self) -> Tuple[np.ndarray, ...]:
        return self.hunt.vertex_sets

    @property
    def vertices(self) -> np.ndarray:
        return self.hunt.vertices

    def with_clipping(self) -> "MembershipEstimate":
        """Return a copy with negatives set to 0 and rows renormalised."""
        clipped = np.clip(self.pi_hat, 0, None)
        clipped /= clipped.sum(axis=1, keepdims=True)
        return replace(self, pi_hat=clipped, clipped=True)

    def aligned_pi(self, permutation: Sequence[int]) -> np.ndarray:
        """Return ``pi_hat`` with columns reordered to ``permutation``."""
        return self.pi_hat[:, list(permutation)]

    def to_frame(self) -> DataFrame:
        """Return a ``node_id, pi_1, ..., pi_K`` table."""
        frame = DataFrame(self.pi_hat, columns=membership_columns(self.k))
        frame.insert(0, "node_id", np.arange(self.n))
        return frame

    def save_csv(self, path: PathLike) -> None:
        """Write the membership table to ``path``."""
        path = Path(path)
        path.parent.mkdir(exist_ok=True, parents=True)
        self.to_frame().to_csv(
            path, index=False, float_format=CSV_FLOAT_FORMAT
        )

    def vertices_json_dict(self) -> JSONDict:
        """Return the vertex report written next to ``pi.csv``."""
        report = self.hunt.to_json_dict()
        report.update(
            {
                "lambdas": self.lambdas.tolist(),
                "c_hat": self.c_hat.tolist(),
                "clipped": self.clipped,
                "negative_mass_nodes": int(
                    np.count_nonzero(self.raw_negative_mass < 0)
                ),
            }
        )
        return report

    def save_vertices(self, path: PathLike, indent: Optional[int] = 2) -> None:
        """Write ``vertices_json_dict`` to ``path``."""
        write_json(self.vertices_json_dict(), path, indent=indent)


def reconstruct_pi(
    embedding: Embedding,
    hunt: VertexHuntResult,
    lambdas: np.ndarray,
    clip: bool = False,
) -> MembershipEstimate:
    """Reconstruct memberships from an embedding and hunted vertices.

    ``pi'_i(k) = a_i(k) / c_k`` and ``pi_i = pi'_i / sum_k pi'_i(k)``.
    Negative entries are kept unless ``clip`` is set.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    vertices = hunt.vertices
    b_hat = augmented_vertex_matrix(vertices)
    a_hat = barycentric_coords_all(embedding.points, vertices)
    c_hat = c_scaling(lambdas, vertices)
    pi_hat, _ = pi_from_barycentric(a_hat, c_hat)
    raw_negative_mass = np.where(pi_hat < 0, pi_hat, 0.0).sum(axis=1)
    negative_nodes = int(np.count_nonzero(raw_negative_mass < 0))
    if negative_nodes:
        logger.debug(
            f"{negative_nodes} nodes have negative estimated memberships "
            f"(total mass {raw_negative_mass.sum():.4g})"
        )
    estimate = MembershipEstimate(
        pi_hat=pi_hat,
        a_hat=a_hat,
        c_hat=c_hat,
        lambdas=lambdas,
        b_hat=b_hat,
        raw_negative_mass=raw_negative_mass,
        points=embedding.points,
        hunt=hunt,
    )
    return estimate.with_clipping() if clip else estimate


@dataclass(frozen=True)
class GroundTruthQuantities:
    """Population counterparts of the reconstruction intermediates.

    Community ``k`` is the model's community ``k``; ``vertex_sets[k]`` is
    its set of pure nodes.
    """

    vertices: np.ndarray
    a: np.ndarray
    c: np.ndarray
    b_aug: np.ndarray
    points: np.ndarray
    spectral: SpectralContext
    vertex_sets: Tuple[np.ndarray, ...]

    def pure_node_radius(self) -> float:
        """Half the distance from the pure nodes to the nearest other node.

        Without mixed nodes, half the smallest distance between vertices.
        """
        pure = np.concatenate(self.vertex_sets)
        mixed = np.setdiff1d(np.arange(self.points.shape[0]), pure)
        if mixed.size == 0:
            if self.vertices.shape[1] == 0:
                return SINGLE_COMMUNITY_RADIUS
            return float(pdist(self.vertices).min() / 2)
        return float(cdist(self.points[pure], self.points[mixed]).min() / 2)


def ground_truth_quantities(
    params: DcmmParams, k: Optional[int] = None
) -> GroundTruthQuantities:
    """Return ``b*``, ``a*``, ``c*``, ``B*`` and ``r*`` of ``params``."""
    k = params.k if k is None else k
    if k != params.k:
        raise ConfigurationError(
            f"Requested K={k} but the model has {params.k} communities."
        )
    spectral = eigen_topk(build_h(params), k, SpectralSource.GroundTruth)
    points = score_embedding(spectral).points
    vertex_sets = tuple(params.pure_node_sets)
    vertices = np.vstack(
        [points[members].mean(axis=0) for members in vertex_sets]
    )
    return GroundTruthQuantities(
        vertices=vertices,
        a=barycentric_coords_all(points, vertices),
        c=c_scaling(spectral.lambdas, vertices),
        b_aug=augmented_vertex_matrix(vertices),
        points=points,
        spectral=spectral,
        vertex_sets=vertex_sets,
    )


@dataclass(frozen=True)
class MixedScoreFit:
    """Every intermediate of one Mixed-SCORE fit."""

    spectral: SpectralContext
    embedding: Embedding
    hunt: VertexHuntResult
    estimate: MembershipEstimate


def fit_mixed_score(
    matrix: Union[AdjacencyMatrix, np.ndarray],
    k: int,
    phi: Optional[float] = None,
    clip: bool = False,
) -> MixedScoreFit:
    """Run the three estimation steps on ``matrix``.

    Args:
        matrix: observed adjacency (or any symmetric matrix, e.g. ``H``).
        k: number of communities.
        phi: vertex-set radius; ``default_radius`` when ``None``.
        clip: clip negative memberships and renormalise.
    """
    if isinstance(matrix, AdjacencyMatrix):
        matrix = matrix.entries
    spectral = eigen_topk(matrix, k)
    embedding = score_embedding(spectral)
    if phi is None:
        phi = default_radius(embedding.points, k)
    hunt = successive_projection(embedding.points, k, phi)
    estimate = reconstruct_pi(embedding, hunt, spectral.lambdas, clip=clip)
    return MixedScoreFit(
        spectral=spectral, embedding=embedding, hunt=hunt, estimate=estimate
    )
