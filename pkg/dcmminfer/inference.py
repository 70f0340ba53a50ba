#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests and confidence intervals built on plug-in influence variances."""

from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from math import ceil
from typing import Dict, Final, List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve
from scipy.special import chdtrc, ndtr, ndtri
from scipy.stats import rankdata

from .influence import (
    InferenceContext,
    InfluenceMatrix,
    InfluenceSet,
    covariance_tr,
    influence_matrices,
    variance_tr,
)
from .membership import MembershipEstimate
from .spectral import SpectralSource
from .utils import (
    DEFAULT_ALPHA,
    DEFAULT_BOOTSTRAP_DRAWS,
    MIN_BOOTSTRAP_DRAWS,
    ConfigurationError,
    ContextSourceError,
    DegenerateVarianceError,
    JSONDict,
    NodeCommunityPair,
    ValidationError,
    replicate_rng,
)

logger = getLogger(__name__)

SIGMA_PSD_TOLERANCE: Final[float] = 1e-10
CONTRAST_CONDITION_LIMIT: Final[float] = 1e12


def normal_cdf(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Standard normal distribution function."""
    return ndtr(x)


def normal_quantile(p: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Standard normal quantile for ``p`` in (0, 1)."""
    p_array = np.asarray(p, dtype=float)
    if np.any((p_array <= 0) | (p_array >= 1)):
        raise ValidationError(f"Normal quantile needs p in (0, 1), got {p}.")
    return ndtri(p)


def chisq_survival(x: Union[float, np.ndarray], df: int) -> float:
    """Upper tail ``P(chi^2_df > x)`` for ``df >= 1``."""
    if df < 1:
        raise ValidationError(f"Chi-square needs df >= 1, got {df}.")
    if np.any(np.asarray(x) < 0):
        raise ValidationError(f"Chi-square survival needs x >= 0, got {x}.")
    return chdtrc(df, x)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}.")


def _standard_deviation(
    matrix: InfluenceMatrix, ctx: InferenceContext, label: str
) -> float:
    variance = variance_tr(matrix, ctx)
    if not variance > 0:
        raise DegenerateVarianceError(
            f"Plug-in variance of {label} is {variance:.3g}; cannot "
            "standardise."
        )
    return float(np.sqrt(variance))


class TestKind(Enum):
    """Hypothesis tests on estimated memberships."""

    __test__ = False

    ClosestCommunity = "closest_community"
    TwoNode = "two_node"


@dataclass
class TestReport:
    """Outcome of a membership test.

    ``rejected`` is the community whose closest-community null was
    rejected (or ``None``) for ``ClosestCommunity``, and whether the
    equal-membership null was rejected for ``TwoNode``.
    """

    __test__ = False

    kind: TestKind
    statistic: float
    p_value: float
    alpha: float
    rejected: Union[None, int, bool]
    details: JSONDict = field(default_factory=dict)

    def to_json_dict(self) -> JSONDict:
        return {
            "kind": self.kind.value,
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "alpha": self.alpha,
            "rejected": self.rejected,
            **self.details,
        }


@dataclass
class RankInterval:
    """Bootstrap confidence interval for the rank of ``pi_node(community)``.

    Rank 1 is the largest membership weight in ``community``.
    """

    node: int
    community: int
    lower: int
    upper: int
    alpha: float
    c_quantile: float
    b_draws: int
    estimated_rank: float
    n: int

    def __post_init__(self) -> None:
        if not 1 <= self.lower <= self.upper <= self.n:
            raise ValidationError(
                f"Invalid rank interval [{self.lower}, {self.upper}] "
                f"for n={self.n}."
            )

    def contains(self, rank: float) -> bool:
        return self.lower <= rank <= self.upper

    def to_json_dict(self) -> JSONDict:
        return {
            "node": self.node,
            "community": self.community,
            "lower": self.lower,
            "upper": self.upper,
            "alpha": self.alpha,
            "b_draws": self.b_draws,
            "c_quantile": self.c_quantile,
            "estimated_rank": self.estimated_rank,
            "n": self.n,
        }


def sigma_matrix(
    pairs: Sequence[NodeCommunityPair],
    infl: InfluenceSet,
    ctx: InferenceContext,
) -> np.ndarray:
    """Covariance matrix of ``(Tr[C^pi_p W])`` over ``pairs``.

    Raises:
        ConfigurationError: repeated pairs.
        MissingPairError: a pair without influence matrices.
    """
    pairs = [tuple(pair) for pair in pairs]
    if len(set(pairs)) != len(pairs):
        raise ConfigurationError(f"Pairs must be distinct, got {pairs}.")
    dense = [infl.pi(node, community).dense() for node, community in pairs]
    size = len(dense)
    sigma = np.empty((size, size))
    for row in range(size):
        for column in range(row, size):
            value = covariance_tr(dense[row], dense[column], ctx)
            sigma[row, column] = sigma[column, row] = value
    smallest = float(np.linalg.eigvalsh(sigma).min()) if size else 0.0
    if smallest < -SIGMA_PSD_TOLERANCE:
        logger.warning(f"Sigma has a negative eigenvalue {smallest:.3g}")
    return sigma


def closest_community_test(
    node: int,
    est: MembershipEstimate,
    infl: InfluenceSet,
    ctx: InferenceContext,
    alpha: float = DEFAULT_ALPHA,
) -> TestReport:
    """Bonferroni test of which community ``node`` is closest to.

    The null for community ``k`` is rejected when every standardised
    difference ``(pi(k) - pi(l)) / sd`` over ``l != k`` exceeds
    ``z_{1 - alpha / (K - 1)}``. At most one community can be rejected. The
    reported p-value is the Bonferroni-adjusted value of the community with
    the largest minimal standardised difference.
    """
    _check_alpha(alpha)
    k = est.k
    if k < 2:
        raise ConfigurationError("The closest-community test needs K >= 2.")
    critical = float(normal_quantile(1 - alpha / (k - 1)))
    pi_row = est.pi_hat[node]
    minimal = np.empty(k)
    for community in range(k):
        differences = []
        for other in range(k):
            if other == community:
                continue
            sd = _standard_deviation(
                infl.pi(node, community) - infl.pi(node, other),
                ctx,
                f"C^pi[{node},{community}] - C^pi[{node},{other}]",
            )
            differences.append((pi_row[community] - pi_row[other]) / sd)
        minimal[community] = min(differences)
    rejected_communities = np.flatnonzero(minimal > critical)
    rejected = (
        int(rejected_communities[0]) if rejected_communities.size else None
    )
    best = int(np.argmax(minimal))
    p_value = min(1.0, (k - 1) * float(1 - normal_cdf(minimal[best])))
    return TestReport(
        kind=TestKind.ClosestCommunity,
        statistic=float(minimal[best]),
        p_value=p_value,
        alpha=alpha,
        rejected=rejected,
        details={
            "node": node,
            "critical_value": critical,
            "standardised_margins": minimal.tolist(),
        },
    )


def closest_community_scan(
    est: MembershipEstimate,
    ctx: InferenceContext,
    alpha: float = DEFAULT_ALPHA,
    nodes: Optional[Sequence[int]] = None,
) -> List[TestReport]:
    """Run ``closest_community_test`` on every node (or ``nodes``)."""
    nodes = list(range(est.n)) if nodes is None else list(nodes)
    infl = influence_matrices(
        ctx, [(node, k) for node in nodes for k in range(est.k)]
    )
    reports = [
        closest_community_test(node, est, infl, ctx, alpha) for node in nodes
    ]
    assigned = sum(report.rejected is not None for report in reports)
    logger.info(
        f"{assigned} of {len(nodes)} nodes assigned a closest community "
        f"at alpha={alpha}"
    )
    return reports


def _bootstrap_statistics(
    differences: List[InfluenceMatrix],
    sds: np.ndarray,
    residual: np.ndarray,
    b_draws: int,
    seed: int,
) -> np.ndarray:
    """Multiplier bootstrap maxima, one per draw.

    Draw ``b`` multiplies the upper triangle (with diagonal) of the residual
    by standard normals from substream ``b`` of ``seed``, mirrored.
    """
    n = residual.shape[0]
    f_stack = np.stack([matrix.f for matrix in differences])
    g_stack = np.stack([matrix.g for matrix in differences])
    u_bar, u1 = differences[0].u_bar, differences[0].u1

    def traces(w: np.ndarray) -> np.ndarray:
        return np.einsum("jak,ak->j", f_stack, w @ u_bar) + g_stack @ (w @ u1)

    centre = traces(residual) / sds
    rows, columns = np.triu_indices(n)
    maxima = np.empty(b_draws)
    multipliers = np.zeros((n, n))
    for draw in range(b_draws):
        values = replicate_rng(seed, draw).standard_normal(rows.size)
        multipliers[rows, columns] = values
        multipliers[columns, rows] = values
        perturbed = traces(residual * multipliers) / sds
        maxima[draw] = np.max(np.abs(perturbed - values.mean() * centre))
    return maxima


def bootstrap_quantile(maxima: np.ndarray, alpha: float) -> float:
    """Order statistic ``ceil((1 - alpha) B)`` of the bootstrap maxima."""
    ordered = np.sort(maxima)
    index = min(max(ceil((1 - alpha) * ordered.size), 1), ordered.size)
    return float(ordered[index - 1])


def rank_ci(
    node: int,
    community: int,
    est: MembershipEstimate,
    ctx: InferenceContext,
    b_draws: int = DEFAULT_BOOTSTRAP_DRAWS,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    infl: Optional[InfluenceSet] = None,
) -> RankInterval:
    """Multiplier bootstrap confidence interval for a membership rank.

    With ``D_j = C^pi_{j,k} - C^pi_{i,k}`` and ``sd_j`` its plug-in
    standard deviation, the bounds are ``1 + #{j: pi_j - pi_i > c sd_j}``
    and ``n - #{j: pi_j - pi_i < -c sd_j}``, where ``c`` is the bootstrap
    ``1 - alpha`` quantile of ``max_j |T_j|`` and the noise is replaced
    by the plug-in residual ``X - H_hat``.

    Raises:
        ConfigurationError: ``b_draws`` below the minimum or ``n < 2``.
        ContextSourceError: ``ctx`` carries no residual.
        DegenerateVarianceError: some ``sd_j`` is not positive.
    """
    _check_alpha(alpha)
    if b_draws < MIN_BOOTSTRAP_DRAWS:
        raise ConfigurationError(
            f"Need at least {MIN_BOOTSTRAP_DRAWS} bootstrap draws, "
            f"got {b_draws}."
        )
    n = est.n
    if n < 2:
        raise ConfigurationError("Rank intervals need n >= 2.")
    if ctx.source is not SpectralSource.Observed or ctx.residual is None:
        raise ContextSourceError(
            "rank_ci needs an observed context with a residual "
            "(InferenceContext.from_fit)."
        )
    if infl is None or any(
        (other, community) not in infl.cpi for other in range(n)
    ):
        infl = influence_matrices(ctx, [(j, community) for j in range(n)])
    others = [j for j in range(n) if j != node]
    own = infl.pi(node, community)
    differences = [infl.pi(j, community) - own for j in others]
    sds = np.array(
        [
            _standard_deviation(
                matrix,
                ctx,
                f"C^pi[{j},{community}] - C^pi[{node},{community}]",
            )
            for j, matrix in zip(others, differences)
        ]
    )
    maxima = _bootstrap_statistics(
        differences, sds, ctx.residual, b_draws, seed
    )
    c_quantile = bootstrap_quantile(maxima, alpha)
    gaps = est.pi_hat[others, community] - est.pi_hat[node, community]
    lower = 1 + int(np.count_nonzero(gaps - c_quantile * sds > 0))
    upper = n - int(np.count_nonzero(gaps + c_quantile * sds < 0))
    estimated_rank = membership_rank(est.pi_hat, node, community)
    logger.debug(
        f"Rank interval of pi[{node},{community}]: [{lower}, {upper}] "
        f"(c={c_quantile:.4g})"
    )
    return RankInterval(
        node=node,
        community=community,
        lower=lower,
        upper=upper,
        alpha=alpha,
        c_quantile=c_quantile,
        b_draws=b_draws,
        estimated_rank=estimated_rank,
        n=n,
    )


def rank_ci_profile(
    node: int,
    est: MembershipEstimate,
    ctx: InferenceContext,
    b_draws: int = DEFAULT_BOOTSTRAP_DRAWS,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> List[RankInterval]:
    """Rank intervals of ``node`` in every community."""
    infl = influence_matrices(
        ctx, [(j, k) for j in range(est.n) for k in range(est.k)]
    )
    return [
        rank_ci(node, community, est, ctx, b_draws, alpha, seed, infl)
        for community in range(est.k)
    ]


def two_node_test(
    node_i: int,
    node_j: int,
    est: MembershipEstimate,
    infl: InfluenceSet,
    ctx: InferenceContext,
    alpha: float = DEFAULT_ALPHA,
) -> TestReport:
    """Chi-square test that two nodes share the same membership vector.

    Uses the first ``K - 1`` coordinates of each node; the statistic is
    ``d^T (T Sigma T^T)^-1 d`` with ``T = [I, -I]``.

    Raises:
        DegenerateVarianceError: ``T Sigma T^T`` is ill-conditioned.
    """
    _check_alpha(alpha)
    k = est.k
    if k < 2:
        raise ConfigurationError("The two-node test needs K >= 2.")
    if node_i == node_j:
        raise ConfigurationError("The two-node test needs distinct nodes.")
    components = range(k - 1)
    pairs = [(node_i, c) for c in components]
    pairs += [(node_j, c) for c in components]
    sigma = sigma_matrix(pairs, infl, ctx)
    contrast = np.hstack([np.eye(k - 1), -np.eye(k - 1)])
    covariance = contrast @ sigma @ contrast.T
    condition = float(np.linalg.cond(covariance))
    if not np.isfinite(condition) or condition >= CONTRAST_CONDITION_LIMIT:
        raise DegenerateVarianceError(
            f"Two-node covariance is singular (cond = {condition:.3g})."
        )
    difference = est.pi_hat[node_i, : k - 1] - est.pi_hat[node_j, : k - 1]
    statistic = max(
        float(difference @ solve(covariance, difference, assume_a="pos")), 0.0
    )
    p_value = float(chisq_survival(statistic, k - 1))
    return TestReport(
        kind=TestKind.TwoNode,
        statistic=statistic,
        p_value=p_value,
        alpha=alpha,
        rejected=bool(p_value < alpha),
        details={"nodes": [node_i, node_j], "df": k - 1},
    )


def standardized_stat(
    node: int,
    community: int,
    est: MembershipEstimate,
    infl: InfluenceSet,
    ctx: InferenceContext,
    truth: float,
) -> float:
    """Return ``(pi_hat(node, community) - truth) / sd(C^pi)``."""
    sd = _standard_deviation(
        infl.pi(node, community), ctx, f"C^pi[{node},{community}]"
    )
    return float((est.pi_hat[node, community] - truth) / sd)


def membership_rank(pi: np.ndarray, node: int, community: int) -> float:
    """Rank of ``pi[node, community]`` in its column, largest first.

    Tied values share the mean of the positions they occupy.
    """
    ranks = rankdata(-np.asarray(pi)[:, community], method="average")
    return float(ranks[node])


def report_dicts(
    reports: Sequence[Union[TestReport, RankInterval]]
) -> List[Dict]:
    """JSON-ready dicts of several reports."""
    return [report.to_json_dict() for report in reports]
