#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""SCORE embedding: trailing eigenvectors divided by the leading one."""

from dataclasses import dataclass
from logging import getLogger
from os import PathLike
from pathlib import Path
from typing import Final, List, Optional

import numpy as np
from pandas import DataFrame

from .spectral import SpectralContext
from .utils import CSV_FLOAT_FORMAT, DegenerateEigenvectorError

logger = getLogger(__name__)

RELATIVE_DENOMINATOR_TOLERANCE: Final[float] = 1e-8


def embedding_columns(k: int) -> List[str]:
    """Coordinate headers ``r_1 .. r_{K-1}``."""
    return [f"r_{index}" for index in range(1, k)]


@dataclass(frozen=True)
class Embedding:
    """Per-node SCORE ratios.

    Attributes:
        points: ``n x (K - 1)`` matrix, row ``i`` is ``r_i``.
        u1: leading eigenvector used as the denominator.
        min_abs_u1: smallest ``|u1[i]|``.
    """

    points: np.ndarray
    u1: np.ndarray
    min_abs_u1: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def k(self) -> int:
        return self.points.shape[1] + 1

    def to_frame(self) -> DataFrame:
        """Return a ``node_id, r_1, ..., r_{K-1}`` table."""
        frame = DataFrame(self.points, columns=embedding_columns(self.k))
        frame.insert(0, "node_id", np.arange(self.n))
        return frame

    def save_csv(self, path: PathLike) -> None:
        """Write the embedding table to ``path``."""
        path = Path(path)
        path.parent.mkdir(exist_ok=True, parents=True)
        self.to_frame().to_csv(
            path, index=False, float_format=CSV_FLOAT_FORMAT
        )


def default_denominator_tolerance(u1: np.ndarray) -> float:
    """Return ``1e-8 * max |u1|``."""
    return RELATIVE_DENOMINATOR_TOLERANCE * float(np.max(np.abs(u1)))


def score_embedding(
    spec: SpectralContext, denom_tol: Optional[float] = None
) -> Embedding:
    """Return ``r_i = (U[i, 2] / U[i, 1], ..., U[i, K] / U[i, 1])``.

    Raises:
        DegenerateEigenvectorError: some ``|u1[i]| <= denom_tol``; the first
            such node is reported. Small entries are never clamped.
    """
    u1 = spec.u1
    if denom_tol is None:
        denom_tol = default_denominator_tolerance(u1)
    magnitudes = np.abs(u1)
    small = np.flatnonzero(magnitudes <= denom_tol)
    if small.size:
        node = int(small[0])
        raise DegenerateEigenvectorError(node, float(u1[node]), denom_tol)
    points = spec.u_bar / u1[:, None]
    points.setflags(write=False)
    return Embedding(
        points=points, u1=u1, min_abs_u1=float(magnitudes.min())
    )
