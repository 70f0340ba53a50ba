#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Influence matrices, first-order error terms and trace (co)variances.

Every first-order error ``q`` of the estimation pipeline is linear in the
noise ``W = X - H`` and equals ``Tr[C_q W]`` for a fixed ``n x n`` matrix
``C_q``. All such matrices share the form

    ``C = F U_bar^T + u1 g^T``

with ``F`` of shape ``n x (K - 1)`` and ``g`` of length ``n``, so they are
held as ``InfluenceMatrix`` objects and only materialised on request.
"""

from dataclasses import dataclass, field, replace
from logging import getLogger
from typing import (
    Dict,
    Final,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Tuple,
    Union,
)

import numpy as np
from scipy.linalg import inv

from .membership import (
    GroundTruthQuantities,
    MixedScoreFit,
    ground_truth_quantities,
)
from .model import AdjacencyMatrix, DcmmParams, build_h
from .spectral import (
    SpectralContext,
    SpectralSource,
    check_symmetric,
    plug_in_ctx,
)
from .utils import (
    ConfigurationError,
    ContextSourceError,
    InfluenceDegeneracyError,
    MissingPairError,
    ModelValidationError,
    NodeCommunityPair,
)

logger = getLogger(__name__)

DENOMINATOR_TOLERANCE: Final[float] = 1e-12
N_SYMMETRY_TOLERANCE: Final[float] = 1e-10
N_KERNEL_TOLERANCE: Final[float] = 1e-8

MatrixLike = Union["InfluenceMatrix", np.ndarray]


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    """The matrix ``F U_bar^T + u1 g^T`` over a fixed eigenbasis."""

    f: np.ndarray
    g: np.ndarray
    u_bar: np.ndarray = field(repr=False)
    u1: np.ndarray = field(repr=False)

    @classmethod
    def zero(cls, u_bar: np.ndarray, u1: np.ndarray) -> "InfluenceMatrix":
        return cls(np.zeros_like(u_bar), np.zeros_like(u1), u_bar, u1)

    def __add__(self, other: "InfluenceMatrix") -> "InfluenceMatrix":
        return replace(self, f=self.f + other.f, g=self.g + other.g)

    def __sub__(self, other: "InfluenceMatrix") -> "InfluenceMatrix":
        return replace(self, f=self.f - other.f, g=self.g - other.g)

    def __mul__(self, scalar: float) -> "InfluenceMatrix":
        return replace(self, f=self.f * scalar, g=self.g * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "InfluenceMatrix":
        return self * -1.0

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def dense(self) -> np.ndarray:
        """Materialise the ``n x n`` matrix."""
        return self.f @ self.u_bar.T + np.outer(self.u1, self.g)

    def trace_with(self, w: np.ndarray) -> float:
        """Return ``Tr[C W]`` for symmetric ``W`` without materialising C."""
        return float(
            np.sum(self.f * (w @ self.u_bar)) + self.g @ (w @ self.u1)
        )


def _as_dense(matrix: MatrixLike) -> np.ndarray:
    if isinstance(matrix, InfluenceMatrix):
        return matrix.dense()
    return np.asarray(matrix, dtype=float)


def _check_denominator(symbol: str, value: float, scale: float = 1.0) -> None:
    if not np.isfinite(value) or abs(value) <= DENOMINATOR_TOLERANCE * scale:
        raise InfluenceDegeneracyError(symbol, float(value))


def _variance_weights(
    h: np.ndarray, self_loop: bool
) -> Tuple[np.ndarray, np.ndarray]:
    weights = h * (1 - h)
    diagonal = np.diag(weights).copy() if self_loop else np.zeros(len(h))
    off_diagonal = weights.copy()
    np.fill_diagonal(off_diagonal, 0.0)
    return off_diagonal, diagonal


@dataclass(frozen=True, eq=False)
class InferenceContext:
    """Quantities entering the influence matrices, hat or starred.

    Build with ``from_fit`` (plug-in, from an observed network) or
    ``from_params`` (population, from known parameters).

    Attributes:
        spectral: top-K eigenpairs of X or H.
        n_matrix: ``N`` from the same eigenpairs.
        vertices: ``K x (K - 1)`` simplex vertices ``b_k``.
        vertex_sets: node sets averaged into each vertex.
        b_aug: augmented ``K x K`` vertex matrix ``B``.
        a: ``n x K`` barycentric coordinates.
        c: length ``K`` scaling.
        points: ``n x (K - 1)`` embedding ``r``.
        h_for_variance: edge probabilities in [0, 1] used by variances.
        self_loop: whether diagonal noise has variance.
        source: hat (observed) or starred (ground truth) quantities.
        residual: ``X - H_hat`` for observed contexts.
        clamped_entries: number of ``H_hat`` entries clamped into [0, 1].
    """

    spectral: SpectralContext
    n_matrix: np.ndarray
    vertices: np.ndarray
    vertex_sets: tuple
    b_aug: np.ndarray
    a: np.ndarray
    c: np.ndarray
    points: np.ndarray
    h_for_variance: np.ndarray
    self_loop: bool = False
    source: SpectralSource = SpectralSource.Observed
    residual: Optional[np.ndarray] = None
    clamped_entries: int = 0
    b_inv: np.ndarray = field(init=False, repr=False)
    n_u_bar: np.ndarray = field(init=False, repr=False)
    off_diagonal_weights: np.ndarray = field(init=False, repr=False)
    diagonal_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Check ``N`` and ``H`` and precompute shared products."""
        check_symmetric(self.n_matrix, N_SYMMETRY_TOLERANCE)
        kernel = float(np.linalg.norm(self.n_matrix @ self.u1))
        if kernel > N_KERNEL_TOLERANCE:
            raise ModelValidationError(
                "N u1 = 0", f"||N u1|| = {kernel:.3g}"
            )
        h = self.h_for_variance
        if np.any(h < 0) or np.any(h > 1):
            raise ModelValidationError(
                "H_for_variance entries in [0, 1]",
                f"range [{h.min():.6g}, {h.max():.6g}]",
            )
        object.__setattr__(self, "b_inv", inv(self.b_aug))
        object.__setattr__(self, "n_u_bar", self.n_matrix @ self.u_bar)
        off_diagonal, diagonal = _variance_weights(h, self.self_loop)
        object.__setattr__(self, "off_diagonal_weights", off_diagonal)
        object.__setattr__(self, "diagonal_weights", diagonal)

    @property
    def n(self) -> int:
        return self.spectral.n

    @property
    def k(self) -> int:
        return self.spectral.k

    @property
    def u1(self) -> np.ndarray:
        return self.spectral.u1

    @property
    def u_bar(self) -> np.ndarray:
        return self.spectral.u_bar

    @property
    def lambda1(self) -> float:
        return self.spectral.lambda1

    @property
    def lambda_bar(self) -> np.ndarray:
        return self.spectral.lambda_bar

    @classmethod
    def from_fit(
        cls,
        fit: MixedScoreFit,
        matrix: Union[AdjacencyMatrix, np.ndarray],
        self_loop: Optional[bool] = None,
    ) -> "InferenceContext":
        """Plug-in context from a fit of the observed ``matrix``.

        ``H_hat`` entries outside [0, 1] are clamped before variances use
        them; ``residual`` keeps the unclamped ``X - H_hat``.
        """
        if isinstance(matrix, AdjacencyMatrix):
            self_loop = matrix.self_loop if self_loop is None else self_loop
            matrix = matrix.entries
        h_hat, n_hat = plug_in_ctx(fit.spectral)
        clamped = np.clip(h_hat, 0.0, 1.0)
        clamped_entries = int(np.count_nonzero(clamped != h_hat))
        if clamped_entries:
            logger.warning(
                f"Clamped {clamped_entries} plug-in H entries into [0, 1] "
                f"(range was [{h_hat.min():.4g}, {h_hat.max():.4g}])"
            )
        estimate = fit.estimate
        return cls(
            spectral=fit.spectral,
            n_matrix=n_hat,
            vertices=estimate.vertices,
            vertex_sets=estimate.vertex_sets,
            b_aug=estimate.b_hat,
            a=estimate.a_hat,
            c=estimate.c_hat,
            points=estimate.points,
            h_for_variance=clamped,
            self_loop=bool(self_loop),
            source=SpectralSource.Observed,
            residual=np.asarray(matrix, dtype=float) - h_hat,
            clamped_entries=clamped_entries,
        )

    @classmethod
    def from_params(
        cls,
        params: DcmmParams,
        truth: Optional[GroundTruthQuantities] = None,
    ) -> "InferenceContext":
        """Population context with starred quantities of ``params``."""
        truth = truth or ground_truth_quantities(params)
        _, n_star = plug_in_ctx(truth.spectral)
        return cls(
            spectral=truth.spectral,
            n_matrix=n_star,
            vertices=truth.vertices,
            vertex_sets=truth.vertex_sets,
            b_aug=truth.b_aug,
            a=truth.a,
            c=truth.c,
            points=truth.points,
            h_for_variance=build_h(params),
            self_loop=params.self_loop,
            source=SpectralSource.GroundTruth,
        )

    def zero_matrix(self) -> InfluenceMatrix:
        return InfluenceMatrix.zero(self.u_bar, self.u1)


@dataclass(frozen=True, eq=False)
class InfluenceSet:
    """Influence matrices computed for some (node, community) pairs.

    Attributes:
        pairs: requested ``(node, community)`` pairs.
        cr: ``C^r`` keyed by ``(node, component)``.
        cb: ``C^b`` keyed by ``(community, component)``.
        ca: ``C^a`` keyed by ``(node, community)``.
        cpi: ``C^pi`` keyed by ``(node, community)``.
    """

    pairs: List[NodeCommunityPair]
    cr: Dict[NodeCommunityPair, InfluenceMatrix]
    cb: Dict[NodeCommunityPair, InfluenceMatrix]
    ca: Dict[NodeCommunityPair, InfluenceMatrix]
    cpi: Dict[NodeCommunityPair, InfluenceMatrix]

    def pi(self, node: int, community: int) -> InfluenceMatrix:
        """Return ``C^pi`` for ``(node, community)``.

        Raises:
            MissingPairError: the pair was not requested.
        """
        try:
            return self.cpi[(node, community)]
        except KeyError:
            raise MissingPairError((node, community))

    def dense(self, kind: str, key: NodeCommunityPair) -> np.ndarray:
        """Materialise matrix ``key`` of ``kind`` in {r, b, a, pi}."""
        table = {"r": self.cr, "b": self.cb, "a": self.ca, "pi": self.cpi}
        try:
            return table[kind][key].dense()
        except KeyError:
            raise MissingPairError(key)


def _check_pairs(
    ctx: InferenceContext, pairs: Iterable[NodeCommunityPair]
) -> List[NodeCommunityPair]:
    checked: List[NodeCommunityPair] = []
    for node, community in pairs:
        if not (0 <= node < ctx.n and 0 <= community < ctx.k):
            raise ConfigurationError(
                f"Pair ({node}, {community}) outside n={ctx.n}, K={ctx.k}."
            )
        checked.append((int(node), int(community)))
    return checked


def _check_context_denominators(ctx: InferenceContext) -> None:
    _check_denominator("lambda_1", ctx.lambda1)
    for component, value in enumerate(ctx.lambda_bar):
        _check_denominator(
            f"Lambda_bar[{component}]", float(value), abs(ctx.lambda1)
        )
    for community, value in enumerate(ctx.c):
        _check_denominator(f"c[{community}]", float(value))


def _influence_r(
    ctx: InferenceContext, node: int, component: int
) -> InfluenceMatrix:
    u1_node = float(ctx.u1[node])
    _check_denominator(
        f"u1[{node}]", u1_node, float(np.abs(ctx.u1).max())
    )
    scale = ctx.lambda_bar[component]
    f = np.zeros_like(ctx.u_bar)
    f[node, component] = 1 / (u1_node * scale)
    g = -ctx.n_u_bar[:, component] / scale - (
        ctx.points[node, component] / (u1_node * ctx.lambda1)
    ) * ctx.n_matrix[node]
    return InfluenceMatrix(f, g, ctx.u_bar, ctx.u1)


def _influence_b(
    ctx: InferenceContext, community: int, component: int
) -> InfluenceMatrix:
    members = np.asarray(ctx.vertex_sets[community])
    if members.size == 0:
        raise InfluenceDegeneracyError(f"|V_{community}|", 0.0)
    u1_members = ctx.u1[members]
    for node, value in zip(members, u1_members):
        _check_denominator(
            f"u1[{node}]", float(value), float(np.abs(ctx.u1).max())
        )
    scale = ctx.lambda_bar[component]
    f = np.zeros_like(ctx.u_bar)
    f[members, component] = 1 / (members.size * u1_members * scale)
    weights = ctx.points[members, component] / (
        members.size * u1_members * ctx.lambda1
    )
    g = -ctx.n_u_bar[:, component] / scale - weights @ ctx.n_matrix[members]
    return InfluenceMatrix(f, g, ctx.u_bar, ctx.u1)


def _influence_lambda1(ctx: InferenceContext) -> InfluenceMatrix:
    """``u1 u1^T + 2 u1 u1^T N``, the first-order error of ``lambda_1``."""
    g = ctx.u1 + 2 * (ctx.n_matrix @ ctx.u1)
    return InfluenceMatrix(np.zeros_like(ctx.u_bar), g, ctx.u_bar, ctx.u1)


def _membership_normaliser(ctx: InferenceContext, node: int) -> float:
    normaliser = float(np.sum(ctx.a[node] / ctx.c))
    _check_denominator(f"sum_l a[{node}, l] / c_l", normaliser)
    return normaliser


def influence_matrices(
    ctx: InferenceContext, pairs: Iterable[NodeCommunityPair]
) -> InfluenceSet:
    """Build ``C^r``, ``C^b``, ``C^a`` and ``C^pi`` for ``pairs``.

    ``C^b`` is built once per (community, component); ``C^r`` and ``C^a``
    once per node appearing in ``pairs``.

    Raises:
        InfluenceDegeneracyError: a denominator is numerically zero.
    """
    pairs = _check_pairs(ctx, pairs)
    _check_context_denominators(ctx)
    k = ctx.k
    components = range(k - 1)
    cb = {
        (community, component): _influence_b(ctx, community, component)
        for community in range(k)
        for component in components
    }
    vertex_terms = []
    for community in range(k):
        term = ctx.zero_matrix()
        for component in components:
            weight = (
                ctx.vertices[community, component]
                * ctx.lambda_bar[component]
            )
            term = term + weight * cb[(community, component)]
        vertex_terms.append(term)
    lambda_term = _influence_lambda1(ctx)
    c = ctx.c
    cr: Dict[NodeCommunityPair, InfluenceMatrix] = {}
    ca: Dict[NodeCommunityPair, InfluenceMatrix] = {}
    cpi: Dict[NodeCommunityPair, InfluenceMatrix] = {}
    for node in sorted({node for node, _ in pairs}):
        for component in components:
            cr[(node, component)] = _influence_r(ctx, node, component)
        a_node = ctx.a[node]
        for community in range(k):
            total = ctx.zero_matrix()
            for component in components:
                inner = cr[(node, component)]
                for other in range(k):
                    inner = inner - a_node[other] * cb[(other, component)]
                total = total + ctx.b_inv[community, component] * inner
            ca[(node, community)] = total
    for node, community in pairs:
        a_node = ctx.a[node]
        normaliser = _membership_normaliser(ctx, node)
        total = ctx.zero_matrix()
        for other in range(k):
            if other == community:
                continue
            ck, cl = c[community], c[other]
            weight = a_node[community] * a_node[other]
            total = total + (weight * (ck / (2 * cl) - cl / (2 * ck))) * (
                lambda_term
            )
            total = total + (
                a_node[other] * ca[(node, community)]
                - a_node[community] * ca[(node, other)]
            ) * (1 / (ck * cl))
            total = total + weight * (
                (ck / cl) * vertex_terms[community]
                - (cl / ck) * vertex_terms[other]
            )
        cpi[(node, community)] = total * (1 / normaliser ** 2)
    return InfluenceSet(pairs=pairs, cr=cr, cb=cb, ca=ca, cpi=cpi)


class FirstOrderDeltas(NamedTuple):
    """First-order errors of ``r``, ``b``, ``a`` and ``pi`` for one ``W``."""

    r: np.ndarray
    b: np.ndarray
    a: np.ndarray
    pi: np.ndarray


def first_order_deltas(
    ctx: InferenceContext, w: np.ndarray
) -> FirstOrderDeltas:
    """Evaluate the first-order error terms directly for noise ``w``.

    Raises:
        ContextSourceError: ``ctx`` is not a ground-truth context.
    """
    if ctx.source is not SpectralSource.GroundTruth:
        raise ContextSourceError(
            "first_order_deltas needs a ground-truth context "
            "(InferenceContext.from_params)."
        )
    w = np.asarray(w, dtype=float)
    check_symmetric(w)
    _check_context_denominators(ctx)
    u1, u_bar, n_matrix = ctx.u1, ctx.u_bar, ctx.n_matrix
    lambda1, lambda_bar = ctx.lambda1, ctx.lambda_bar
    w_u1 = w @ u1
    w_rows = (w @ u_bar - np.outer(u1, u1 @ w @ ctx.n_u_bar)) / lambda_bar
    n_w_u1 = n_matrix @ w_u1
    delta_r = (w_rows - n_w_u1[:, None] * ctx.points / lambda1) / u1[:, None]
    k = ctx.k
    delta_b = np.vstack(
        [
            delta_r[np.asarray(members)].mean(axis=0)
            for members in ctx.vertex_sets
        ]
    ).reshape(k, k - 1)
    shifted = np.hstack(
        [delta_r - ctx.a @ delta_b, np.zeros((ctx.n, 1))]
    )
    delta_a = shifted @ ctx.b_inv.T
    delta_lambda1 = float(u1 @ w_u1 + 2 * u1 @ n_w_u1)
    vertex_terms = np.sum(ctx.vertices * lambda_bar * delta_b, axis=1)
    a, c = ctx.a, ctx.c
    normalisers = (a / c).sum(axis=1)
    delta_pi = np.zeros((ctx.n, k))
    for community in range(k):
        for other in range(k):
            if other == community:
                continue
            ck, cl = c[community], c[other]
            weight = a[:, community] * a[:, other]
            delta_pi[:, community] += (
                delta_lambda1 * (ck / (2 * cl) - cl / (2 * ck)) * weight
                + (
                    delta_a[:, community] * a[:, other]
                    - delta_a[:, other] * a[:, community]
                )
                / (ck * cl)
                + (
                    vertex_terms[community] * ck / cl
                    - vertex_terms[other] * cl / ck
                )
                * weight
            )
    delta_pi /= normalisers[:, None] ** 2
    return FirstOrderDeltas(r=delta_r, b=delta_b, a=delta_a, pi=delta_pi)


def trace_covariance(
    m1: MatrixLike, m2: MatrixLike, h: np.ndarray, self_loop: bool = False
) -> float:
    """Covariance of ``Tr[M1 W]`` and ``Tr[M2 W]`` under edge law ``h``.

    Off-diagonal pairs ``i < j`` contribute ``(M1_ij + M1_ji)(M2_ij + M2_ji)
    H_ij (1 - H_ij)``. Diagonal terms contribute only when ``self_loop`` is
    set, since otherwise ``X_ii`` is fixed at 0.
    """
    off_diagonal, diagonal = _variance_weights(np.asarray(h), self_loop)
    return _weighted_covariance(
        _as_dense(m1), _as_dense(m2), off_diagonal, diagonal
    )


def trace_variance(
    m: MatrixLike, h: np.ndarray, self_loop: bool = False
) -> float:
    """Variance of ``Tr[M W]`` under edge law ``h``."""
    return trace_covariance(m, m, h, self_loop)


def _weighted_covariance(
    m1: np.ndarray,
    m2: np.ndarray,
    off_diagonal: np.ndarray,
    diagonal: np.ndarray,
) -> float:
    if m1.shape != off_diagonal.shape or m2.shape != off_diagonal.shape:
        raise ConfigurationError(
            f"Matrix shapes {m1.shape}, {m2.shape} do not match "
            f"{off_diagonal.shape}."
        )
    s1 = m1 + m1.T
    s2 = s1 if m2 is m1 else m2 + m2.T
    off = 0.5 * float(np.sum(s1 * s2 * off_diagonal))
    return off + float(np.sum(np.diag(m1) * np.diag(m2) * diagonal))


def covariance_tr(
    m1: MatrixLike, m2: MatrixLike, ctx: InferenceContext
) -> float:
    """``V_{M1, M2}`` with the context's edge probabilities."""
    return _weighted_covariance(
        _as_dense(m1),
        _as_dense(m2),
        ctx.off_diagonal_weights,
        ctx.diagonal_weights,
    )


def variance_tr(m: MatrixLike, ctx: InferenceContext) -> float:
    """``V_M`` with the context's edge probabilities; never negative."""
    dense = _as_dense(m)
    return max(covariance_tr(dense, dense, ctx), 0.0)
