# -*- coding: utf-8 -*-

"""Main module: simulation experiments and network-level entry points."""

from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from functools import partial
from logging import DEBUG, INFO, Logger, StreamHandler, getLogger
from multiprocessing import Pool
from os import PathLike
from pathlib import Path
from sys import stdout
from typing import Any, Callable, Dict, Final, List, Optional, Tuple, Union

import numpy as np
from pandas import DataFrame
from scipy.stats import kstest

from .inference import (
    RankInterval,
    TestReport,
    membership_rank,
    rank_ci,
    standardized_stat,
    two_node_test,
)
from .influence import InferenceContext, influence_matrices
from .membership import (
    MixedScoreFit,
    fit_mixed_score,
    ground_truth_quantities,
)
from .model import (
    AdjacencyMatrix,
    DcmmParams,
    SyntheticSetting,
    build_h,
    sample_adjacency,
    synthetic_config,
)
from .utils import (
    CSV_FLOAT_FORMAT,
    DEFAULT_ALPHA,
    DEFAULT_BOOTSTRAP_DRAWS,
    DEFAULT_SEED,
    DEFAULT_WORKERS,
    LOG_TIME_FORMAT,
    MIN_BOOTSTRAP_DRAWS,
    ConfigurationError,
    ExperimentFailedError,
    JSONDict,
    NumericalDegeneracyError,
    file_log_handler,
    json_serialise,
    replicate_seed,
    write_json,
)
from .vertex_hunt import match_permutation

logger: Logger = getLogger(__name__)
logger.setLevel(DEBUG)
stream_handler: StreamHandler = StreamHandler(stdout)
stream_handler.setLevel(INFO)
logger.addHandler(stream_handler)

DEFAULT_DESK_N: Final[int] = 600
DEFAULT_DESK_REPLICATES: Final[int] = 300
FULL_SCALE_N: Final[int] = 2000
FULL_SCALE_REPLICATES: Final[int] = 500
MAX_SKIP_FRACTION: Final[float] = 0.05
MIN_NODES: Final[int] = 4
SYNTHETIC_K: Final[int] = 2

STATS_FILE_NAME: Final[str] = "stats.csv"
SUMMARY_FILE_NAME: Final[str] = "summary.json"
SIMULATE_LOG_FILE_NAME: Final[str] = "simulate.log"
PI_FILE_NAME: Final[str] = "pi.csv"
VERTICES_FILE_NAME: Final[str] = "vertices.json"
EMBEDDING_FILE_NAME: Final[str] = "embedding.csv"

OK_STATUS: Final[str] = "ok"
SKIPPED_STATUS: Final[str] = "skipped"
SUMMARY_FIELDS: Final[Tuple[str, ...]] = (
    "mean",
    "std",
    "ks_distance",
    "coverage",
    "rejection_rate",
)

RecordType = Dict[str, Any]


class ExperimentKind(Enum):
    """Monte Carlo experiments the harness can run."""

    Normality = "normality"
    RankCoverage = "rank_coverage"
    TwoNodeCalibration = "twonode_calibration"


@dataclass
class ExperimentConfig:
    """Settings of one simulation experiment.

    When ``params`` is given it fixes the model (and ``n``) for every
    replicate; otherwise the model is ``synthetic_config(setting, n, seed)``.
    ``noiseless`` replaces each sampled network by ``H`` itself. Without
    ``phi``, ``run_experiment`` uses half the gap between the model's pure
    nodes and its other nodes in the population embedding.
    """

    kind: ExperimentKind = ExperimentKind.Normality
    setting: SyntheticSetting = SyntheticSetting.ThetaConst09
    n: int = DEFAULT_DESK_N
    replicates: int = DEFAULT_DESK_REPLICATES
    bootstrap_draws: int = DEFAULT_BOOTSTRAP_DRAWS
    alpha: float = DEFAULT_ALPHA
    seed: int = DEFAULT_SEED
    workers: int = DEFAULT_WORKERS
    output_dir: Optional[Path] = None
    params: Optional[DcmmParams] = None
    node: int = 0
    community: int = 0
    alternative: bool = False
    phi: Optional[float] = None
    noiseless: bool = False
    self_loop: bool = False

    def __post_init__(self) -> None:
        """Coerce enums and paths and validate ranges."""
        self.kind = ExperimentKind(self.kind)
        self.setting = SyntheticSetting(self.setting)
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)
        if self.params is not None:
            self.n = self.params.n
            self.self_loop = self.params.self_loop
        if self.replicates < 1:
            raise ConfigurationError(
                f"replicates must be >= 1, got {self.replicates}."
            )
        if self.n < MIN_NODES:
            raise ConfigurationError(
                f"n must be >= {MIN_NODES}, got {self.n}."
            )
        if not 0 < self.alpha < 1:
            raise ConfigurationError(
                f"alpha must lie in (0, 1), got {self.alpha}."
            )
        if self.workers < 1:
            raise ConfigurationError(
                f"workers must be >= 1, got {self.workers}."
            )
        if (
            self.kind is ExperimentKind.RankCoverage
            and self.bootstrap_draws < MIN_BOOTSTRAP_DRAWS
        ):
            raise ConfigurationError(
                f"Need at least {MIN_BOOTSTRAP_DRAWS} bootstrap draws, "
                f"got {self.bootstrap_draws}."
            )
        if not 0 <= self.node < self.n:
            raise ConfigurationError(
                f"node {self.node} outside [0, {self.n})."
            )
        if not 0 <= self.community < self.k:
            raise ConfigurationError(
                f"community {self.community} outside [0, {self.k})."
            )

    @property
    def k(self) -> int:
        return self.params.k if self.params is not None else SYNTHETIC_K

    @classmethod
    def full_scale(cls, **kwargs) -> "ExperimentConfig":
        """Config with the full-size ``n`` and replicate count.

        Explicit ``n`` or ``replicates`` in ``kwargs`` take precedence.
        """
        settings = {"n": FULL_SCALE_N, "replicates": FULL_SCALE_REPLICATES}
        settings.update(kwargs)
        return cls(**settings)

    def model_params(self) -> DcmmParams:
        """Return the fixed model every replicate samples from."""
        if self.params is not None:
            return self.params
        pure_per_community = (
            2 if self.kind is ExperimentKind.TwoNodeCalibration else 1
        )
        return synthetic_config(
            self.setting,
            self.n,
            self.seed,
            pure_per_community=pure_per_community,
            self_loop=self.self_loop,
        )

    def to_json_dict(self) -> JSONDict:
        """Return settings for ``summary.json``, without the model arrays."""
        return {
            "kind": self.kind.value,
            "setting": (
                None if self.params is not None else self.setting.value
            ),
            "n": self.n,
            "k": self.k,
            "replicates": self.replicates,
            "bootstrap_draws": self.bootstrap_draws,
            "alpha": self.alpha,
            "seed": self.seed,
            "workers": self.workers,
            "node": self.node,
            "community": self.community,
            "alternative": self.alternative,
            "phi": self.phi,
            "noiseless": self.noiseless,
            "self_loop": self.self_loop,
        }


@dataclass
class ExperimentSummary:
    """Replicate records and their aggregates.

    ``std`` and ``lag1_autocorrelation`` are ``None`` when too few
    replicates completed to define them.
    """

    kind: ExperimentKind
    seed: int
    replicates: int
    records: List[RecordType]
    completed: int
    skipped: int
    mean: Optional[float] = None
    std: Optional[float] = None
    ks_distance: Optional[float] = None
    coverage: Optional[float] = None
    rejection_rate: Optional[float] = None
    lag1_autocorrelation: Optional[float] = None
    wall_time: float = 0.0
    config: JSONDict = field(default_factory=dict)

    def __str__(self) -> str:
        """Return a one-line summary."""
        parts = [f"{self.kind.value}: {self.completed}/{self.replicates}"]
        for name in SUMMARY_FIELDS:
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value:.4g}")
        return " | ".join(parts)

    def statistics(self) -> np.ndarray:
        """Statistics of completed replicates in replicate order."""
        return np.array(
            [
                record["statistic"]
                for record in self.records
                if record["status"] == OK_STATUS
            ],
            dtype=float,
        )

    def to_frame(self) -> DataFrame:
        """Return one row per replicate."""
        return DataFrame.from_records(self.records)

    def to_json_dict(self) -> JSONDict:
        """Return aggregates and config, without per-replicate records."""
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "replicates": self.replicates,
            "completed": self.completed,
            "skipped": self.skipped,
            "mean": self.mean,
            "std": self.std,
            "ks_distance": self.ks_distance,
            "coverage": self.coverage,
            "rejection_rate": self.rejection_rate,
            "lag1_autocorrelation": self.lag1_autocorrelation,
            "wall_time_seconds": self.wall_time,
            "config": self.config,
        }

    def save(self, output_dir: PathLike, indent: Optional[int] = 2) -> None:
        """Write ``stats.csv`` and ``summary.json`` into ``output_dir``."""
        output_dir = Path(output_dir)
        output_dir.mkdir(exist_ok=True, parents=True)
        self.to_frame().to_csv(
            output_dir / STATS_FILE_NAME,
            index=False,
            float_format=CSV_FLOAT_FORMAT,
        )
        write_json(
            self.to_json_dict(), output_dir / SUMMARY_FILE_NAME, indent=indent
        )


def _replicate_network(
    params: DcmmParams, cfg: ExperimentConfig, seed: int
) -> Union[AdjacencyMatrix, np.ndarray]:
    if cfg.noiseless:
        return build_h(params)
    return sample_adjacency(params, seed)


def _fit_aligned(
    matrix: Union[AdjacencyMatrix, np.ndarray],
    params: DcmmParams,
    cfg: ExperimentConfig,
) -> Tuple[MixedScoreFit, InferenceContext, int]:
    """Fit, build the plug-in context and map the true community label."""
    fit = fit_mixed_score(matrix, params.k, cfg.phi)
    permutation = match_permutation(fit.estimate.pi_hat.T, params.pi.T)
    ctx = InferenceContext.from_fit(fit, matrix, self_loop=params.self_loop)
    return fit, ctx, permutation[cfg.community]


def normality_replicate(
    params: DcmmParams, cfg: ExperimentConfig, index: int
) -> RecordType:
    """Standardised membership error of the designated node."""
    seed = replicate_seed(cfg.seed, index)
    matrix = _replicate_network(params, cfg, seed)
    fit, ctx, community = _fit_aligned(matrix, params, cfg)
    infl = influence_matrices(ctx, [(cfg.node, community)])
    truth = float(params.pi[cfg.node, cfg.community])
    statistic = standardized_stat(
        cfg.node, community, fit.estimate, infl, ctx, truth
    )
    return {
        "statistic": statistic,
        "pi_hat": float(fit.estimate.pi_hat[cfg.node, community]),
        "pi_true": truth,
    }


def rank_coverage_replicate(
    params: DcmmParams, cfg: ExperimentConfig, index: int
) -> RecordType:
    """Whether the bootstrap rank interval covers the true rank."""
    seed = replicate_seed(cfg.seed, index)
    matrix = _replicate_network(params, cfg, seed)
    fit, ctx, community = _fit_aligned(matrix, params, cfg)
    interval: RankInterval = rank_ci(
        cfg.node,
        community,
        fit.estimate,
        ctx,
        b_draws=cfg.bootstrap_draws,
        alpha=cfg.alpha,
        seed=replicate_seed(cfg.seed, index, 1),
    )
    rank = membership_rank(params.pi, cfg.node, cfg.community)
    return {
        "lower": interval.lower,
        "upper": interval.upper,
        "true_rank": rank,
        "covered": interval.contains(rank),
        "c_quantile": interval.c_quantile,
    }


def twonode_nodes(
    params: DcmmParams, cfg: ExperimentConfig
) -> Tuple[int, int]:
    """Two pure nodes: same community under the null, different otherwise.

    Raises:
        ConfigurationError: the model lacks the pure nodes needed.
    """
    pure = params.pure_node_sets
    if cfg.alternative:
        if params.k < 2:
            raise ConfigurationError("The alternative needs K >= 2.")
        return int(pure[0][0]), int(pure[1][0])
    members = pure[cfg.community]
    if members.size < 2:
        raise ConfigurationError(
            f"Community {cfg.community} has {members.size} pure node(s); "
            "the two-node null needs 2."
        )
    return int(members[0]), int(members[1])


def twonode_replicate(
    params: DcmmParams, cfg: ExperimentConfig, index: int
) -> RecordType:
    """Two-node test between the designated pure nodes."""
    node_i, node_j = twonode_nodes(params, cfg)
    seed = replicate_seed(cfg.seed, index)
    matrix = _replicate_network(params, cfg, seed)
    fit = fit_mixed_score(matrix, params.k, cfg.phi)
    ctx = InferenceContext.from_fit(fit, matrix, self_loop=params.self_loop)
    components = range(params.k - 1)
    infl = influence_matrices(
        ctx, [(node, c) for node in (node_i, node_j) for c in components]
    )
    report: TestReport = two_node_test(
        node_i, node_j, fit.estimate, infl, ctx, cfg.alpha
    )
    return {
        "statistic": report.statistic,
        "p_value": report.p_value,
        "rejected": report.rejected,
    }


REPLICATE_FUNCTIONS: Final[Dict[ExperimentKind, Callable]] = {
    ExperimentKind.Normality: normality_replicate,
    ExperimentKind.RankCoverage: rank_coverage_replicate,
    ExperimentKind.TwoNodeCalibration: twonode_replicate,
}


def run_replicate(
    params: DcmmParams, cfg: ExperimentConfig, index: int
) -> RecordType:
    """Run replicate ``index``; numerical failures become skipped records."""
    record: RecordType = {
        "replicate": index,
        "seed": replicate_seed(cfg.seed, index),
        "status": OK_STATUS,
        "reason": "",
    }
    try:
        record.update(REPLICATE_FUNCTIONS[cfg.kind](params, cfg, index))
    except NumericalDegeneracyError as error:
        logger.warning(f"Replicate {index} skipped: {error}")
        record.update(status=SKIPPED_STATUS, reason=str(error))
    return record


def _lag1_autocorrelation(values: np.ndarray) -> Optional[float]:
    if values.size < 3 or np.std(values) == 0:
        return None
    return float(np.corrcoef(values[:-1], values[1:])[0, 1])


def summarise(
    cfg: ExperimentConfig, records: List[RecordType], wall_time: float = 0.0
) -> ExperimentSummary:
    """Aggregate replicate records into an ``ExperimentSummary``."""
    completed = [r for r in records if r["status"] == OK_STATUS]
    summary = ExperimentSummary(
        kind=cfg.kind,
        seed=cfg.seed,
        replicates=cfg.replicates,
        records=records,
        completed=len(completed),
        skipped=len(records) - len(completed),
        wall_time=wall_time,
        config=cfg.to_json_dict(),
    )
    if cfg.kind is ExperimentKind.RankCoverage:
        if completed:
            covered = [record["covered"] for record in completed]
            summary.coverage = float(np.mean(covered))
        return summary
    statistics = summary.statistics()
    if statistics.size:
        summary.mean = float(statistics.mean())
    if statistics.size > 1:
        summary.std = float(statistics.std(ddof=1))
    summary.lag1_autocorrelation = _lag1_autocorrelation(statistics)
    if cfg.kind is ExperimentKind.Normality and statistics.size:
        summary.ks_distance = float(kstest(statistics, "norm").statistic)
    if cfg.kind is ExperimentKind.TwoNodeCalibration and completed:
        summary.rejection_rate = float(
            np.mean([r["rejected"] for r in completed])
        )
    return summary


def run_experiment(
    cfg: ExperimentConfig, log_file: bool = True, indent: Optional[int] = 2
) -> ExperimentSummary:
    """Run every replicate of ``cfg`` and aggregate.

    Replicate ``r`` draws its network from substream ``r`` of ``cfg.seed``
    and results are collected in replicate order, so outputs other than
    wall time do not depend on ``cfg.workers``. Outputs are written when
    ``cfg.output_dir`` is set.

    Raises:
        ExperimentFailedError: more than 5% of replicates were skipped.
    """
    handler = None
    if log_file and cfg.output_dir is not None:
        handler = file_log_handler(
            filename=SIMULATE_LOG_FILE_NAME, folder=cfg.output_dir
        )
        logger.addHandler(handler)
    try:
        params = cfg.model_params()
        if cfg.phi is None:
            cfg = replace(
                cfg, phi=ground_truth_quantities(params).pure_node_radius()
            )
        start: datetime = datetime.now()
        logger.info(
            f"Start {cfg.kind.value}: {start.strftime(LOG_TIME_FORMAT)} "
            f"(n={cfg.n}, replicates={cfg.replicates}, workers={cfg.workers})"
        )
        replicate = partial(run_replicate, params, cfg)
        indices = range(cfg.replicates)
        if cfg.workers == 1:
            records = [replicate(index) for index in indices]
        else:
            with Pool(processes=cfg.workers) as pool:
                records = pool.map(replicate, indices)
        wall_time = (datetime.now() - start).total_seconds()
        summary = summarise(cfg, records, wall_time)
        logger.info(f"{summary} ({wall_time:.1f}s)")
        if cfg.output_dir is not None:
            summary.save(cfg.output_dir, indent=indent)
        if summary.skipped > MAX_SKIP_FRACTION * cfg.replicates:
            raise ExperimentFailedError(
                summary.skipped, cfg.replicates, MAX_SKIP_FRACTION
            )
        return summary
    finally:
        if handler is not None:
            logger.removeHandler(handler)
            handler.close()


def run_normality_experiment(cfg: ExperimentConfig) -> ExperimentSummary:
    """Distribution of the standardised membership error."""
    return run_experiment(replace(cfg, kind=ExperimentKind.Normality))


def run_rank_coverage_experiment(cfg: ExperimentConfig) -> ExperimentSummary:
    """Coverage of bootstrap rank intervals."""
    return run_experiment(replace(cfg, kind=ExperimentKind.RankCoverage))


def run_twonode_calibration_experiment(
    cfg: ExperimentConfig,
) -> ExperimentSummary:
    """Rejection rate of the two-node test, under the null by default."""
    return run_experiment(replace(cfg, kind=ExperimentKind.TwoNodeCalibration))


def fit_network(
    adjacency: AdjacencyMatrix,
    k: int,
    phi: Optional[float] = None,
    clip: bool = False,
) -> Tuple[MixedScoreFit, InferenceContext]:
    """Fit ``adjacency`` and build its plug-in inference context."""
    fit = fit_mixed_score(adjacency, k, phi, clip=clip)
    logger.info(
        f"Fitted K={k} with radius {fit.hunt.radius:.4g}; vertex set sizes "
        f"{[members.size for members in fit.hunt.vertex_sets]}"
    )
    return fit, InferenceContext.from_fit(fit, adjacency)


def write_estimate(
    fit: MixedScoreFit, output_dir: PathLike, indent: Optional[int] = 2
) -> Dict[str, Path]:
    """Write ``pi.csv``, ``vertices.json`` and ``embedding.csv``."""
    output_dir = Path(output_dir)
    paths = {
        "pi": output_dir / PI_FILE_NAME,
        "vertices": output_dir / VERTICES_FILE_NAME,
        "embedding": output_dir / EMBEDDING_FILE_NAME,
    }
    fit.estimate.save_csv(paths["pi"])
    fit.estimate.save_vertices(paths["vertices"], indent=indent)
    fit.embedding.save_csv(paths["embedding"])
    return paths


def save_report(
    path: PathLike,
    report: Union[TestReport, RankInterval, List, JSONDict],
    indent: Optional[int] = 2,
) -> None:
    """Write a report (or list of reports) as json."""
    if isinstance(report, list):
        data: Any = [_report_json(item) for item in report]
    else:
        data = _report_json(report)
    write_json(data, path, indent=indent)


def _report_json(report: Any) -> Any:
    if hasattr(report, "to_json_dict"):
        return report.to_json_dict()
    return json_serialise(report)
