#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Successive projection vertex hunting and label alignment."""

from dataclasses import dataclass
from logging import getLogger
from typing import Final, List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist, pdist

from .utils import ConfigurationError, JSONDict, RankDeficiencyError

logger = getLogger(__name__)

PROJECTION_NORM_TOLERANCE: Final[float] = 1e-12
SINGLE_COMMUNITY_RADIUS: Final[float] = 1.0


@dataclass(frozen=True)
class VertexHuntResult:
    """Anchors, near-vertex node sets and estimated simplex vertices.

    Attributes:
        anchors: node index picked in each projection round.
        vertex_sets: disjoint node sets, ``vertex_sets[k]`` holds every node
            within ``radius`` of anchor ``k`` and closer to it than to any
            other anchor.
        vertices: ``K x (K - 1)`` matrix, row ``k`` the mean of the points
            in ``vertex_sets[k]``.
        radius: the radius used.
    """

    anchors: Tuple[int, ...]
    vertex_sets: Tuple[np.ndarray, ...]
    vertices: np.ndarray
    radius: float

    @property
    def k(self) -> int:
        return len(self.anchors)

    def to_json_dict(self) -> JSONDict:
        """Return anchors, sets, vertices and radius for reports."""
        return {
            "k": self.k,
            "radius": self.radius,
            "anchors": list(self.anchors),
            "vertex_sets": [members.tolist() for members in self.vertex_sets],
            "vertices": self.vertices.tolist(),
        }


def projection_anchors(points: np.ndarray, k: int) -> List[int]:
    """Select ``k`` anchors by successive projection.

    Each point is augmented to ``Z_i = (1, r_i)``. Every round picks the
    largest ``||Z_i||`` (smallest index on ties) and projects all ``Z_i``
    onto the orthogonal complement of the picked vector.

    Raises:
        RankDeficiencyError: every residual norm vanishes before ``k``
            anchors are found.
    """
    points = np.asarray(points, dtype=float)
    z = np.hstack([np.ones((points.shape[0], 1)), points])
    scale = float(np.linalg.norm(z, axis=1).max())
    anchors: List[int] = []
    for round_number in range(k):
        norms = np.linalg.norm(z, axis=1)
        anchor = int(np.argmax(norms))
        if norms[anchor] <= PROJECTION_NORM_TOLERANCE * scale or (
            anchor in anchors
        ):
            raise RankDeficiencyError(
                f"Successive projection found only {round_number} of {k} "
                "distinct anchors; the points span too few dimensions."
            )
        anchors.append(anchor)
        selected = z[anchor].copy()
        z = z - np.outer(z @ selected, selected) / (selected @ selected)
    return anchors


def successive_projection(
    points: np.ndarray, k: int, phi: float
) -> VertexHuntResult:
    """Find ``k`` simplex vertices and their near-vertex node sets.

    Nodes within ``phi`` of several anchors join the nearest one. For
    ``k == 1`` no hunting is done: the single set holds every node and the
    vertex is the empty-dimensional origin.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"Need 1 <= K <= n, got K={k}, n={n}.")
    if phi <= 0:
        raise ConfigurationError(f"Radius phi must be positive, got {phi}.")
    if k == 1:
        return VertexHuntResult(
            anchors=(0,),
            vertex_sets=(np.arange(n),),
            vertices=np.zeros((1, 0)),
            radius=float(phi),
        )
    anchors = projection_anchors(points, k)
    distances = cdist(points, points[anchors])
    nearest = np.argmin(distances, axis=1)
    within = distances[np.arange(n), nearest] <= phi
    vertex_sets = tuple(
        np.flatnonzero(within & (nearest == community))
        for community in range(k)
    )
    vertices = np.vstack(
        [points[members].mean(axis=0) for members in vertex_sets]
    )
    logger.debug(
        f"Anchors {anchors} with radius {phi:.4g}, set sizes "
        f"{[members.size for members in vertex_sets]}"
    )
    return VertexHuntResult(
        anchors=tuple(anchors),
        vertex_sets=vertex_sets,
        vertices=vertices,
        radius=float(phi),
    )


def default_radius(points: np.ndarray, k: int) -> float:
    """Return half the smallest distance between projection anchors.

    The anchors come from a radius-free projection pass; nodes inside
    several balls are split by :func:`successive_projection` to the
    nearest anchor.

    Raises:
        RankDeficiencyError: coincident anchors.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k == 1:
        return SINGLE_COMMUNITY_RADIUS
    if n <= k:
        raise ConfigurationError(
            f"default_radius needs more nodes than communities, got n={n}, "
            f"K={k}."
        )
    anchors = projection_anchors(points, k)
    gap = float(pdist(points[anchors]).min())
    if gap <= 0:
        raise RankDeficiencyError("Two anchors coincide; radius undefined.")
    radius = gap / 2
    logger.debug(f"Default radius {radius:.4g} from anchors {anchors}")
    return radius


def match_permutation(
    est_vertices: np.ndarray, true_vertices: np.ndarray
) -> Tuple[int, ...]:
    """Return ``perm`` minimising ``sum_k ||est[perm[k]] - true[k]||^2``.

    ``est_vertices[list(perm)]`` is aligned with ``true_vertices``; rows may
    be any common dimension (vertices, or columns of membership matrices).
    """
    est_vertices = np.asarray(est_vertices, dtype=float)
    true_vertices = np.asarray(true_vertices, dtype=float)
    if est_vertices.shape != true_vertices.shape:
        raise ConfigurationError(
            f"Cannot align shapes {est_vertices.shape} and "
            f"{true_vertices.shape}."
        )
    if est_vertices.shape[1] == 0:
        return tuple(range(est_vertices.shape[0]))
    cost = cdist(true_vertices, est_vertices, metric="sqeuclidean")
    _, columns = linear_sum_assignment(cost)
    return tuple(int(column) for column in columns)
