#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Degree-corrected mixed membership model, sampling and adjacency files."""

from dataclasses import dataclass
from enum import Enum
from logging import getLogger
from os import PathLike
from pathlib import Path
from typing import Final, List, Optional, Tuple, Union

import numpy as np
from networkx import (
    Graph,
    from_numpy_array,
    number_connected_components,
    to_numpy_array,
)
from pandas import DataFrame

from .utils import (
    AdjacencyFormatError,
    AsymmetricMatrixError,
    ConfigurationError,
    JSONDict,
    ModelError,
    ModelValidationError,
    read_csv,
    read_json,
    write_json,
)

logger = getLogger(__name__)

ROW_SUM_TOLERANCE: Final[float] = 1e-12
SYMMETRY_TOLERANCE: Final[float] = 1e-12
P_CONDITION_LIMIT: Final[float] = 1e12

SYNTHETIC_P_OFF_DIAGONAL: Final[float] = 0.2
SYNTHETIC_MEMBERSHIP_RANGE: Final[Tuple[float, float]] = (0.1, 0.9)
SYNTHETIC_THETA_RANGE: Final[Tuple[float, float]] = (0.3, 0.9)
MIN_SYNTHETIC_NODES: Final[int] = 4

PARAMS_JSON_FIELDS: Final[Tuple[str, ...]] = (
    "n",
    "k",
    "theta",
    "pi",
    "p",
    "self_loop",
)


class AdjacencyFormat(Enum):
    """Supported adjacency file layouts."""

    EdgeListCsv = "edgelist"
    DenseCsv = "dense"


class SyntheticSetting(Enum):
    """Degree settings of the two-community synthetic experiment."""

    ThetaConst06 = "const06"
    ThetaUniform = "uniform"
    ThetaConst09 = "const09"


@dataclass(frozen=True)
class DcmmParams:
    """Ground-truth DCMM parameters ``(theta, Pi, P)``.

    Attributes:
        theta: length ``n`` positive degree parameters.
        pi: ``n x K`` membership matrix, rows on the probability simplex.
        p: ``K x K`` symmetric nonsingular connectivity with entries in [0, 1].
        self_loop: whether diagonal entries of X are sampled.
    """

    theta: np.ndarray
    pi: np.ndarray
    p: np.ndarray
    self_loop: bool = False

    def __post_init__(self) -> None:
        """Coerce arrays and check every model invariant."""
        object.__setattr__(
            self, "theta", np.array(self.theta, dtype=float).ravel()
        )
        object.__setattr__(self, "pi", np.atleast_2d(np.array(self.pi, float)))
        object.__setattr__(self, "p", np.atleast_2d(np.array(self.p, float)))
        for array in (self.theta, self.pi, self.p):
            array.setflags(write=False)
        self.validate()

    @property
    def n(self) -> int:
        """Number of nodes."""
        return self.pi.shape[0]

    @property
    def k(self) -> int:
        """Number of communities."""
        return self.pi.shape[1]

    def validate(self) -> None:
        """Raise ``ModelValidationError`` naming the first broken invariant."""
        n, k = self.pi.shape
        if self.theta.shape != (n,):
            raise ModelValidationError(
                "shape", f"theta has {self.theta.size} entries for {n} nodes"
            )
        if self.p.shape != (k, k):
            raise ModelValidationError(
                "shape", f"P is {self.p.shape} for {k} communities"
            )
        if not np.all(np.isfinite(self.pi)) or np.any(self.pi < 0):
            raise ModelValidationError(
                "nonnegative memberships", "Pi has negative or non-finite rows"
            )
        row_error = np.abs(self.pi.sum(axis=1) - 1.0)
        if np.any(row_error > ROW_SUM_TOLERANCE):
            node = int(np.argmax(row_error))
            raise ModelValidationError(
                "rows of Pi sum to 1",
                f"row {node} sums to {self.pi[node].sum():.15g}",
            )
        for community in range(k):
            if not np.any(self.pi[:, community] == 1.0):
                raise ModelValidationError(
                    "pure node per community",
                    f"community {community} has no node with pi = 1",
                )
        if not np.all(self.theta > 0):
            node = int(np.argmin(self.theta))
            raise ModelValidationError(
                "positive theta", f"theta[{node}] = {self.theta[node]:.6g}"
            )
        if np.max(np.abs(self.p - self.p.T)) > SYMMETRY_TOLERANCE:
            raise ModelValidationError("P symmetric")
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ModelValidationError("P entries in [0, 1]")
        if np.linalg.cond(self.p) >= P_CONDITION_LIMIT:
            raise ModelValidationError("P nonsingular")

    @property
    def pure_node_sets(self) -> List[np.ndarray]:
        """Indices of the pure nodes of each community."""
        return [np.flatnonzero(self.pi[:, k] == 1.0) for k in range(self.k)]

    def to_json_dict(self) -> JSONDict:
        """Return the fixed-schema json representation."""
        return {
            "n": self.n,
            "k": self.k,
            "theta": self.theta.tolist(),
            "pi": self.pi.tolist(),
            "p": self.p.tolist(),
            "self_loop": bool(self.self_loop),
        }

    @classmethod
    def from_json_dict(cls, data: JSONDict) -> "DcmmParams":
        """Build parameters from the fixed-schema json representation."""
        missing = [name for name in PARAMS_JSON_FIELDS if name not in data]
        if missing:
            raise ModelValidationError(
                "json schema", f"missing fields {', '.join(missing)}"
            )
        params = cls(
            theta=data["theta"],
            pi=data["pi"],
            p=data["p"],
            self_loop=bool(data["self_loop"]),
        )
        if params.n != int(data["n"]) or params.k != int(data["k"]):
            raise ModelValidationError(
                "json schema",
                f"declared n={data['n']}, k={data['k']} but arrays give "
                f"n={params.n}, k={params.k}",
            )
        return params

    def save(self, path: PathLike, indent: Optional[int] = 2) -> None:
        """Write parameters as json to ``path``."""
        write_json(self.to_json_dict(), path, indent=indent)

    @classmethod
    def load(cls, path: PathLike) -> "DcmmParams":
        """Read parameters from a json file."""
        return cls.from_json_dict(read_json(path))


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Symmetric binary observed network.

    Attributes:
        entries: ``n x n`` symmetric matrix of zeros and ones (float dtype).
        self_loop: whether diagonal entries may be nonzero.
    """

    entries: np.ndarray
    self_loop: bool = False

    def __post_init__(self) -> None:
        """Coerce ``entries`` and check symmetry and binary values."""
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise AdjacencyFormatError(
                f"adjacency must be square, got shape {entries.shape}"
            )
        if not np.all((entries == 0) | (entries == 1)):
            raise AdjacencyFormatError("adjacency entries must be 0 or 1")
        asymmetry = np.abs(entries - entries.T)
        if np.any(asymmetry > 0):
            position = np.unravel_index(np.argmax(asymmetry), asymmetry.shape)
            raise AsymmetricMatrixError(
                float(asymmetry.max()), (int(position[0]), int(position[1]))
            )
        if not self.self_loop and np.any(np.diag(entries) != 0):
            node = int(np.flatnonzero(np.diag(entries))[0])
            raise AdjacencyFormatError(
                f"self-loop at node {node} but self_loop mode is off"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __str__(self) -> str:
        """Return a summary of nodes and edges."""
        return f"AdjacencyMatrix: {self.n} nodes | {self.edge_count} edges"

    @property
    def n(self) -> int:
        """Number of nodes."""
        return self.entries.shape[0]

    @property
    def edge_count(self) -> int:
        """Number of undirected edges, self-loops counted once."""
        return int(
            (self.entries.sum() + np.trace(self.entries)) // 2
        )

    def to_graph(self) -> Graph:
        """Return a ``networkx.Graph`` on nodes ``0..n-1``."""
        return from_numpy_array(self.entries)

    @classmethod
    def from_graph(
        cls, graph: Graph, n: Optional[int] = None, self_loop: bool = False
    ) -> "AdjacencyMatrix":
        """Build from a graph whose nodes are the integers ``0..n-1``."""
        n = n if n is not None else (max(graph.nodes) + 1 if graph else 0)
        for node in graph.nodes:
            if not isinstance(node, (int, np.integer)) or not 0 <= node < n:
                raise AdjacencyFormatError(
                    f"node {node!r} is not an index in [0, {n})"
                )
        graph = graph.copy()
        graph.add_nodes_from(range(n))
        entries = to_numpy_array(graph, nodelist=list(range(n)), weight=None)
        return cls(entries=entries, self_loop=self_loop)


def build_h(params: DcmmParams) -> np.ndarray:
    """Return ``H = Theta Pi P Pi^T Theta``, exactly symmetric."""
    weighted = params.theta[:, None] * params.pi
    h = (weighted @ params.p) @ weighted.T
    upper = np.triu(h)
    return upper + np.triu(h, 1).T


def sample_adjacency(params: DcmmParams, seed: int) -> AdjacencyMatrix:
    """Draw ``X`` with independent Bernoulli(H_ij) upper-triangle entries.

    The diagonal is sampled only in self-loop mode. One generator seeded
    with ``seed`` consumes the upper triangle in row-major order.
    """
    h = build_h(params)
    low, high = float(h.min()), float(h.max())
    if low < 0 or high > 1:
        raise ModelError(low, high)
    n = params.n
    rows, cols = np.triu_indices(n, k=0 if params.self_loop else 1)
    rng = np.random.default_rng(seed)
    draws = (rng.random(rows.size) < h[rows, cols]).astype(float)
    entries = np.zeros((n, n))
    entries[rows, cols] = draws
    entries[cols, rows] = draws
    return AdjacencyMatrix(entries=entries, self_loop=params.self_loop)


def synthetic_config(
    setting: Union[SyntheticSetting, str],
    n: int,
    seed: int,
    pure_per_community: int = 1,
    self_loop: bool = False,
) -> DcmmParams:
    """Generate the two-community synthetic configuration.

    The first ``2 * pure_per_community`` rows are pure (``[1, 0]`` then
    ``[0, 1]``); the first entry of each remaining row is Uniform[0.1, 0.9]
    and the second its complement. Rows are then shuffled and ``theta`` is
    set by ``setting``. The generator is consumed in that fixed order:
    memberships, shuffle, theta.
    """
    setting = SyntheticSetting(setting)
    if n < MIN_SYNTHETIC_NODES:
        raise ConfigurationError(
            f"synthetic_config needs n >= {MIN_SYNTHETIC_NODES}, got {n}."
        )
    if pure_per_community < 1 or 2 * pure_per_community > n:
        raise ConfigurationError(
            f"pure_per_community={pure_per_community} does not fit n={n}."
        )
    rng = np.random.default_rng(seed)
    pure_rows = 2 * pure_per_community
    first = np.empty(n)
    first[:pure_per_community] = 1.0
    first[pure_per_community:pure_rows] = 0.0
    first[pure_rows:] = rng.uniform(*SYNTHETIC_MEMBERSHIP_RANGE, n - pure_rows)
    pi = np.column_stack([first, 1.0 - first])
    pi = pi[rng.permutation(n)]
    if setting is SyntheticSetting.ThetaConst06:
        theta = np.full(n, 0.6)
    elif setting is SyntheticSetting.ThetaConst09:
        theta = np.full(n, 0.9)
    else:
        theta = rng.uniform(*SYNTHETIC_THETA_RANGE, n)
    p = np.array(
        [[1.0, SYNTHETIC_P_OFF_DIAGONAL], [SYNTHETIC_P_OFF_DIAGONAL, 1.0]]
    )
    logger.debug(
        f"Synthetic {setting.value} config: n={n}, seed={seed}, "
        f"{pure_rows} pure rows"
    )
    return DcmmParams(theta=theta, pi=pi, p=p, self_loop=self_loop)


def _parse_index(
    cell: str, n: Optional[int], path: PathLike, line_number: int
) -> int:
    """Parse a zero-based node index from ``cell``."""
    try:
        index = int(cell)
    except ValueError:
        raise AdjacencyFormatError(
            f"'{cell}' is not an integer node index", path, line_number
        )
    if index < 0 or (n is not None and index >= n):
        raise AdjacencyFormatError(
            f"node index {index} out of range", path, line_number
        )
    return index


def _load_edge_list(
    path: PathLike, n: Optional[int], self_loop: bool
) -> AdjacencyMatrix:
    graph = Graph()
    if n is not None:
        graph.add_nodes_from(range(n))
    for line_number, row in read_csv(path):
        if len(row) != 2:
            raise AdjacencyFormatError(
                f"expected 'i,j', found {len(row)} fields", path, line_number
            )
        i, j = (_parse_index(cell, n, path, line_number) for cell in row)
        if i == j and not self_loop:
            raise AdjacencyFormatError(
                f"self-loop {i},{j} but self_loop mode is off",
                path,
                line_number,
            )
        graph.add_edge(i, j)
    return AdjacencyMatrix.from_graph(graph, n=n, self_loop=self_loop)


def _load_dense(path: PathLike, self_loop: bool) -> AdjacencyMatrix:
    rows: List[List[float]] = []
    width: Optional[int] = None
    for line_number, row in read_csv(path):
        width = width if width is not None else len(row)
        if len(row) != width:
            raise AdjacencyFormatError(
                f"expected {width} fields, found {len(row)}", path, line_number
            )
        values: List[float] = []
        for cell in row:
            if cell not in ("0", "1"):
                raise AdjacencyFormatError(
                    f"entry '{cell}' is not 0 or 1", path, line_number
                )
            values.append(float(cell))
        rows.append(values)
    if width is not None and len(rows) != width:
        raise AdjacencyFormatError(
            f"{len(rows)} rows for {width} columns; matrix must be square",
            path,
        )
    return AdjacencyMatrix(
        entries=np.array(rows).reshape(len(rows), len(rows)),
        self_loop=self_loop,
    )


def load_adjacency(
    path: PathLike,
    format: Union[AdjacencyFormat, str] = AdjacencyFormat.EdgeListCsv,
    n: Optional[int] = None,
    self_loop: bool = False,
) -> AdjacencyMatrix:
    """Load an adjacency matrix from an edge-list or dense CSV file.

    Edge lists hold one zero-based ``i,j`` pair per line; the node count is
    ``n`` when given, else the largest index plus one. Dense files hold
    ``n`` rows of ``n`` comma-separated 0/1 values and must be symmetric.
    """
    format = AdjacencyFormat(format)
    path = Path(path)
    if format is AdjacencyFormat.EdgeListCsv:
        adjacency = _load_edge_list(path, n, self_loop)
    else:
        adjacency = _load_dense(path, self_loop)
    logger.info(
        f"Loaded {adjacency} from {path} with "
        f"{number_connected_components(adjacency.to_graph())} "
        "connected components"
    )
    return adjacency


def save_adjacency(
    adjacency: AdjacencyMatrix,
    path: PathLike,
    format: Union[AdjacencyFormat, str] = AdjacencyFormat.EdgeListCsv,
) -> None:
    """Write ``adjacency`` in either supported CSV layout.

    Edge lists lose isolated trailing nodes; pass ``n`` to
    ``load_adjacency`` to restore them.
    """
    format = AdjacencyFormat(format)
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    if format is AdjacencyFormat.EdgeListCsv:
        rows, cols = np.nonzero(np.triu(adjacency.entries))
        frame = DataFrame({"source": rows, "target": cols})
    else:
        frame = DataFrame(adjacency.entries.astype(int))
    frame.to_csv(path, header=False, index=False)
