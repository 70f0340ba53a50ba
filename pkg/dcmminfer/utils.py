#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Utils for saving and loading reports, logging, seeding and errors."""

from csv import reader
from dataclasses import asdict, is_dataclass
from datetime import datetime
from json import dump, load
from logging import INFO, FileHandler, getLogger
from os import PathLike, getenv
from pathlib import Path
from typing import Any, Dict, Final, Iterator, List, Optional, Tuple, Union

import numpy as np
from dotenv import load_dotenv

DEFAULT_ENV_PATH: PathLike = Path(".env")

LOG_FOLDER: PathLike = Path("logs/")
LOG_TIME_FORMAT: Final[str] = "%a, %d %b %Y %H:%M:%S"
LOG_FILENAME_DATE_FORMAT: Final[str] = "%Y-%m-%d-%H:%M:%S"

CSV_FLOAT_FORMAT: Final[str] = "%.17g"

logger = getLogger(__name__)

load_dotenv(dotenv_path=DEFAULT_ENV_PATH)

DEFAULT_ALPHA: Final[float] = float(getenv("DCMM_ALPHA", 0.05))
DEFAULT_BOOTSTRAP_DRAWS: Final[int] = int(getenv("DCMM_BOOTSTRAP", 1000))
DEFAULT_WORKERS: Final[int] = int(getenv("DCMM_WORKERS", 1))
DEFAULT_SEED: Final[int] = int(getenv("DCMM_SEED", 20230101))
MIN_BOOTSTRAP_DRAWS: Final[int] = 50

JSONDict = Dict[str, Any]
CSVRowType = Tuple[int, List[str]]
NodeCommunityPair = Tuple[int, int]


def formatted_now_str(date_format: str = LOG_FILENAME_DATE_FORMAT) -> str:
    """Return current time in ``date_format`` format."""
    return datetime.now().strftime(date_format)


DEFAULT_LOG_FILE_NAME = f"dcmminfer_{formatted_now_str()}.log"


def read_csv(path: PathLike, **kwargs) -> Iterator[CSVRowType]:
    """Open ``path`` and yield one-based line numbers with stripped rows.

    Blank lines are skipped but still counted so that parse errors can
    report the line of the original file.
    """
    with open(path, newline="") as csv_file:
        for line_number, row in enumerate(reader(csv_file, **kwargs), 1):
            cells = [cell.strip() for cell in row]
            if not cells or all(cell == "" for cell in cells):
                continue
            yield line_number, cells


def json_serialise(obj: Any) -> Any:
    """Convert numpy and dataclass values into plain JSON types."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return json_serialise(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): json_serialise(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [json_serialise(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_serialise(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(
    data: Union[JSONDict, List],
    path: PathLike,
    indent: Optional[int] = 2,
) -> None:
    """Write ``data`` to ``path`` as json, creating parent folders."""
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    with open(path, "w") as json_file:
        dump(json_serialise(data), json_file, indent=indent, default=str)
        json_file.write("\n")


def read_json(path: PathLike) -> Any:
    """Read a json file."""
    with open(Path(path)) as json_file:
        return load(json_file)


def replicate_seed(master_seed: int, *key: int) -> int:
    """Return the 64-bit seed of substream ``key`` under ``master_seed``.

    The seed depends only on ``master_seed`` and ``key`` (for example a
    replicate index), never on which worker or in what order work runs.
    """
    sequence = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(int(k) for k in key)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def replicate_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for substream ``key``."""
    return np.random.default_rng(
        np.random.SeedSequence(
            entropy=int(master_seed), spawn_key=tuple(int(k) for k in key)
        )
    )


def file_log_handler(
    level: int = INFO,
    filename: str = DEFAULT_LOG_FILE_NAME,
    folder: PathLike = LOG_FOLDER,
    reset_log: bool = True,
    *args,
    **kwargs,
) -> FileHandler:
    """Add a file logger."""
    log_path = Path(folder) / filename
    log_path.parent.mkdir(exist_ok=True, parents=True)
    if reset_log:
        file_handler = FileHandler(log_path, mode="w")
    else:
        file_handler = FileHandler(log_path)
    file_handler.setLevel(level)
    return file_handler


class Error(Exception):
    """Base class for exceptions in this package.

    See: https://docs.python.org/3/tutorial/errors.html
    """

    pass


class ValidationError(Error):
    """Inputs or configuration that break a documented precondition."""

    pass


class NumericalDegeneracyError(Error):
    """A numerical step met a singular or near-singular quantity."""

    pass


class ModelValidationError(ValidationError):
    """Model parameters violating a named invariant."""

    def __init__(
        self,
        invariant: str,
        detail: str = "",
        message: Optional[str] = None,
    ) -> None:
        """Record the failing ``invariant`` and optional ``detail``."""
        self.invariant = invariant
        self.detail = detail
        self.message = message or (
            f"DCMM parameters violate invariant '{invariant}'"
            + (f": {detail}" if detail else ".")
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class ModelError(ValidationError):
    """Edge probabilities outside [0, 1]; P or theta are too large."""

    def __init__(
        self, low: float, high: float, message: Optional[str] = None
    ) -> None:
        """Initialise with the observed range of H."""
        self.low = low
        self.high = high
        self.message = message or (
            f"H has entries in [{low:.6g}, {high:.6g}], outside [0, 1]. "
            "Reduce P or theta."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class ConfigurationError(ValidationError):
    """Invalid experiment, generator or bootstrap configuration."""

    pass


class AdjacencyFormatError(ValidationError):
    """Malformed adjacency file, optionally pointing at a line."""

    def __init__(
        self,
        reason: str,
        path: Optional[PathLike] = None,
        line_number: Optional[int] = None,
    ) -> None:
        """Compose the message from ``reason``, ``path`` and line."""
        self.reason = reason
        self.path = path
        self.line_number = line_number
        location = f"{path}" if path else "adjacency input"
        if line_number is not None:
            location += f", line {line_number}"
        self.message = f"{location}: {reason}"
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class AsymmetricMatrixError(ValidationError):
    """A matrix required to be symmetric is not."""

    def __init__(
        self,
        max_asymmetry: float,
        position: Optional[Tuple[int, int]] = None,
        message: Optional[str] = None,
    ) -> None:
        """Record the largest asymmetry and where it occurs."""
        self.max_asymmetry = max_asymmetry
        self.position = position
        where = f" at {position}" if position is not None else ""
        self.message = message or (
            f"Matrix is not symmetric{where}: "
            f"max |M - M^T| = {max_asymmetry:.6g}."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class ContextSourceError(ValidationError):
    """An operation requested on a context of the wrong source."""

    pass


class MissingPairError(ValidationError, KeyError):
    """A (node, community) pair without computed influence matrices."""

    def __init__(self, pair: NodeCommunityPair) -> None:
        """Record the missing ``pair``."""
        self.pair = pair
        self.message = f"No influence matrices computed for pair {pair}."
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class EigenGapError(NumericalDegeneracyError):
    """Leading eigenvalue not separated from another selected one."""

    def __init__(self, lambda1: float, other: float, index: int) -> None:
        """Record the colliding eigenvalues."""
        self.lambda1 = lambda1
        self.other = other
        self.index = index
        self.message = (
            f"Eigen-gap failure: lambda_1 = {lambda1:.6g} is not separated "
            f"from lambda_{index + 1} = {other:.6g}."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class EigenConvergenceError(NumericalDegeneracyError):
    """The dense symmetric eigensolver failed to converge."""

    pass


class DegenerateEigenvectorError(NumericalDegeneracyError):
    """Leading eigenvector entry too small to divide by."""

    def __init__(self, node: int, value: float, tolerance: float) -> None:
        """Record the offending ``node`` and entry."""
        self.node = node
        self.value = value
        self.tolerance = tolerance
        self.message = (
            f"Leading eigenvector entry of node {node} is {value:.3g}, "
            f"at or below tolerance {tolerance:.3g}."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class RankDeficiencyError(NumericalDegeneracyError):
    """Vertex hunting exhausted the point cloud before K anchors."""

    pass


class DegenerateSimplexError(NumericalDegeneracyError):
    """The augmented vertex matrix is singular or ill-conditioned."""

    def __init__(self, condition: float, limit: float) -> None:
        """Record the condition estimate."""
        self.condition = condition
        self.limit = limit
        self.message = (
            f"Augmented vertex matrix is ill-conditioned: "
            f"cond = {condition:.3g} >= {limit:.3g}."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class SpectralDegeneracyError(NumericalDegeneracyError):
    """Nonpositive argument of the c_k scaling."""

    pass


class ReconstructionError(NumericalDegeneracyError):
    """Zero normaliser when rescaling a node's membership."""

    def __init__(self, node: int, normaliser: float) -> None:
        """Record the ``node`` and its normaliser."""
        self.node = node
        self.normaliser = normaliser
        self.message = (
            f"Membership normaliser of node {node} is {normaliser:.3g}."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class InfluenceDegeneracyError(NumericalDegeneracyError):
    """A denominator of an influence matrix vanished."""

    def __init__(self, symbol: str, value: float) -> None:
        """Record the vanishing ``symbol``."""
        self.symbol = symbol
        self.value = value
        self.message = (
            f"Influence matrix denominator {symbol} = {value:.3g} "
            "is numerically zero."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message


class DegenerateVarianceError(NumericalDegeneracyError):
    """A plug-in variance needed as a divisor is not positive."""

    pass


class ExperimentFailedError(NumericalDegeneracyError):
    """Too many replicates of an experiment were skipped."""

    def __init__(self, skipped: int, replicates: int, limit: float) -> None:
        """Record skip counts."""
        self.skipped = skipped
        self.replicates = replicates
        self.limit = limit
        self.message = (
            f"{skipped} of {replicates} replicates were skipped, "
            f"more than the allowed {limit:.0%}."
        )
        super().__init__(self.message)

    def __str__(self) -> str:
        """Set self.__str__ to use self.message."""
        return self.message
