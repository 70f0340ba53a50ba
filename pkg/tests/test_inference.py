#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for membership tests and rank confidence intervals."""

from dataclasses import replace
from typing import NamedTuple

import numpy as np
import pytest
from scipy.stats import chi2, norm

from dcmminfer.inference import (
    RankInterval,
    TestKind,
    bootstrap_quantile,
    chisq_survival,
    closest_community_scan,
    closest_community_test,
    membership_rank,
    normal_cdf,
    normal_quantile,
    rank_ci,
    rank_ci_profile,
    report_dicts,
    sigma_matrix,
    standardized_stat,
    two_node_test,
)
from dcmminfer.influence import (
    InferenceContext,
    influence_matrices,
    variance_tr,
)
from dcmminfer.membership import (
    MembershipEstimate,
    fit_mixed_score,
    ground_truth_quantities,
)
from dcmminfer.model import (
    DcmmParams,
    build_h,
    sample_adjacency,
    synthetic_config,
)
from dcmminfer.utils import (
    ConfigurationError,
    ContextSourceError,
    ValidationError,
)
from dcmminfer.vertex_hunt import match_permutation

from .conftest import bernoulli_traces

OBSERVED_N: int = 300
BOOTSTRAP_DRAWS: int = 200


class ObservedFit(NamedTuple):
    params: DcmmParams
    estimate: MembershipEstimate
    ctx: InferenceContext
    permutation: tuple


@pytest.fixture(scope="module")
def observed() -> ObservedFit:
    """One sampled 300 node network, fitted with its plug-in context."""
    params = synthetic_config("const09", OBSERVED_N, 3, pure_per_community=2)
    adjacency = sample_adjacency(params, seed=5)
    fit = fit_mixed_score(adjacency, 2)
    ctx = InferenceContext.from_fit(fit, adjacency)
    permutation = match_permutation(fit.estimate.pi_hat.T, params.pi.T)
    return ObservedFit(params, fit.estimate, ctx, permutation)


class TestSpecialFunctions:
    """Normal and chi-square tails."""

    def test_normal(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_quantile(0.975) == pytest.approx(1.959963984540054)
        assert normal_cdf(normal_quantile(0.3)) == pytest.approx(0.3)

    def test_normal_domain(self):
        with pytest.raises(ValidationError):
            normal_quantile(1.0)

    def test_chi_square(self):
        assert chisq_survival(3.841458820694124, 1) == pytest.approx(0.05)
        assert chisq_survival(5.991464547107979, 2) == pytest.approx(0.05)
        assert chisq_survival(0.0, 3) == 1.0

    def test_chi_square_domain(self):
        with pytest.raises(ValidationError):
            chisq_survival(1.0, 0)


def test_bootstrap_quantile():
    maxima = np.arange(100, 0, -1, dtype=float)
    assert bootstrap_quantile(maxima, 0.05) == 95.0
    assert bootstrap_quantile(maxima, 0.5) == 50.0


def test_membership_rank_ties():
    pi = np.array([[0.5, 0.5], [0.9, 0.1], [0.5, 0.5]])
    assert membership_rank(pi, 0, 0) == 2.5
    assert membership_rank(pi, 1, 0) == 1.0
    assert membership_rank(pi, 1, 1) == 3.0


class TestClosestCommunity:
    """Bonferroni closest-community test."""

    def test_pure_node_assigned(self, observed):
        pure = int(observed.params.pure_node_sets[0][0])
        expected = observed.permutation[0]
        infl = influence_matrices(observed.ctx, [(pure, 0), (pure, 1)])
        report = closest_community_test(
            pure, observed.estimate, infl, observed.ctx, alpha=0.05
        )
        assert report.kind is TestKind.ClosestCommunity
        assert report.rejected == expected
        assert 0 <= report.p_value < 0.05
        assert report.to_json_dict()["node"] == pure

    def test_scan(self, observed):
        reports = closest_community_scan(
            observed.estimate, observed.ctx, nodes=[0, 1, 2]
        )
        assert [r.details["node"] for r in reports] == [0, 1, 2]
        for report in reports:
            assert 0 <= report.p_value <= 1
            assert report.rejected in (None, 0, 1)

    def test_alpha_range(self, observed):
        infl = influence_matrices(observed.ctx, [(0, 0), (0, 1)])
        with pytest.raises(ConfigurationError):
            closest_community_test(
                0, observed.estimate, infl, observed.ctx, alpha=1.5
            )


class TestTwoNode:
    """Chi-square equal-membership test."""

    def infl(self, ctx, *nodes):
        return influence_matrices(ctx, [(node, 0) for node in nodes])

    def test_different_communities(self, observed):
        first, second = (
            int(members[0]) for members in observed.params.pure_node_sets
        )
        report = two_node_test(
            first,
            second,
            observed.estimate,
            self.infl(observed.ctx, first, second),
            observed.ctx,
        )
        assert report.kind is TestKind.TwoNode
        assert report.rejected is True
        assert report.details["df"] == 1

    def test_same_community(self, observed):
        first, second = observed.params.pure_node_sets[1][:2]
        report = two_node_test(
            int(first),
            int(second),
            observed.estimate,
            self.infl(observed.ctx, int(first), int(second)),
            observed.ctx,
        )
        assert report.statistic >= 0
        assert 0 < report.p_value <= 1

    def test_same_node(self, observed):
        with pytest.raises(ConfigurationError):
            two_node_test(
                3,
                3,
                observed.estimate,
                self.infl(observed.ctx, 3),
                observed.ctx,
            )


class TestSigma:
    """Covariance of membership errors."""

    def test_positive_semidefinite(self, observed):
        pairs = [(0, 0), (1, 0), (2, 1)]
        infl = influence_matrices(observed.ctx, pairs)
        sigma = sigma_matrix(pairs, infl, observed.ctx)
        assert np.allclose(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() > -1e-10

    def test_repeated_pairs(self, observed):
        infl = influence_matrices(observed.ctx, [(0, 0)])
        with pytest.raises(ConfigurationError):
            sigma_matrix([(0, 0), (0, 0)], infl, observed.ctx)


class TestRankInterval:
    """Multiplier bootstrap rank intervals."""

    def test_contains_estimated_rank(self, observed):
        interval = rank_ci(
            7,
            0,
            observed.estimate,
            observed.ctx,
            b_draws=BOOTSTRAP_DRAWS,
            alpha=0.05,
            seed=1,
        )
        assert 1 <= interval.lower <= interval.upper <= OBSERVED_N
        assert interval.contains(interval.estimated_rank)
        assert interval.c_quantile > 0

    def test_deterministic(self, observed):
        first = rank_ci(
            4, 1, observed.estimate, observed.ctx, BOOTSTRAP_DRAWS, 0.1, 9
        )
        again = rank_ci(
            4, 1, observed.estimate, observed.ctx, BOOTSTRAP_DRAWS, 0.1, 9
        )
        assert first == again

    def test_wider_at_smaller_alpha(self, observed):
        narrow = rank_ci(
            4, 1, observed.estimate, observed.ctx, BOOTSTRAP_DRAWS, 0.2, 9
        )
        wide = rank_ci(
            4, 1, observed.estimate, observed.ctx, BOOTSTRAP_DRAWS, 0.01, 9
        )
        assert wide.c_quantile >= narrow.c_quantile
        assert wide.lower <= narrow.lower
        assert wide.upper >= narrow.upper

    def test_profile(self, observed):
        intervals = rank_ci_profile(
            2, observed.estimate, observed.ctx, BOOTSTRAP_DRAWS, 0.05, 3
        )
        assert [i.community for i in intervals] == [0, 1]
        dicts = report_dicts(intervals)
        assert dicts[1]["node"] == 2

    def test_too_few_draws(self, observed):
        with pytest.raises(ConfigurationError):
            rank_ci(0, 0, observed.estimate, observed.ctx, b_draws=10)

    def test_needs_observed_context(self, observed):
        truth_ctx = InferenceContext.from_params(observed.params)
        with pytest.raises(ContextSourceError):
            rank_ci(0, 0, observed.estimate, truth_ctx, b_draws=50)

    @pytest.mark.parametrize("lower, upper", [(5, 3), (0, 3), (2, 11)])
    def test_invalid_interval(self, lower, upper):
        with pytest.raises(ValidationError):
            RankInterval(0, 0, lower, upper, 0.05, 1.0, 100, 4.0, 10)

    def test_interval_up_to_n(self):
        interval = RankInterval(0, 0, 1, 10, 0.05, 1.0, 100, 4.0, 10)
        assert interval.contains(10)
        assert interval.to_json_dict()["n"] == 10


def test_standardized_stat_zero_at_estimate(observed):
    infl = influence_matrices(observed.ctx, [(0, 0)])
    truth = float(observed.estimate.pi_hat[0, 0])
    assert standardized_stat(
        0, 0, observed.estimate, infl, observed.ctx, truth
    ) == 0.0


def test_standardized_stat_homogeneous(observed):
    infl = influence_matrices(observed.ctx, [(9, 1)])
    pi_hat = float(observed.estimate.pi_hat[9, 1])

    def statistic(influence, shift):
        return standardized_stat(
            9, 1, observed.estimate, influence, observed.ctx, pi_hat - shift
        )

    base = statistic(infl, 0.01)
    assert statistic(infl, 0.03) == pytest.approx(3 * base)
    doubled = replace(
        infl, cpi={key: 2.0 * m for key, m in infl.cpi.items()}
    )
    assert statistic(doubled, 0.01) == pytest.approx(base / 2)


THREE_COMMUNITY_PURE: int = 60
THREE_COMMUNITY_MIXED: int = 120


@pytest.fixture(scope="module")
def observed_three() -> ObservedFit:
    """A sampled three-community network with many pure nodes."""
    rng = np.random.default_rng(8)
    k = 3
    pure = np.repeat(np.eye(k), THREE_COMMUNITY_PURE, axis=0)
    mixed = rng.dirichlet(np.ones(k), THREE_COMMUNITY_MIXED)
    pi = np.vstack([pure, mixed / mixed.sum(axis=1, keepdims=True)])
    params = DcmmParams(
        theta=np.full(pi.shape[0], 0.9),
        pi=pi,
        p=0.1 + 0.8 * np.eye(k),
    )
    adjacency = sample_adjacency(params, seed=6)
    radius = ground_truth_quantities(params).pure_node_radius()
    fit = fit_mixed_score(adjacency, k, phi=radius)
    ctx = InferenceContext.from_fit(fit, adjacency)
    permutation = match_permutation(fit.estimate.pi_hat.T, params.pi.T)
    return ObservedFit(params, fit.estimate, ctx, permutation)


def relabel(fit: ObservedFit, order) -> ObservedFit:
    """The same fit with community ``j`` renamed from ``order[j]``."""
    order = list(order)
    ctx = fit.ctx
    relabelled = replace(
        ctx,
        vertices=ctx.vertices[order],
        vertex_sets=tuple(ctx.vertex_sets[k] for k in order),
        b_aug=ctx.b_aug[:, order],
        a=ctx.a[:, order],
        c=ctx.c[order],
    )
    estimate = replace(fit.estimate, pi_hat=fit.estimate.pi_hat[:, order])
    return ObservedFit(fit.params, estimate, relabelled, fit.permutation)


def closest_region(fit: ObservedFit, node: int, alpha: float):
    """Communities whose every standardised margin clears the cutoff."""
    k = fit.estimate.k
    pairs = [(node, community) for community in range(k)]
    infl = influence_matrices(fit.ctx, pairs)
    cutoff = norm.ppf(1 - alpha / (k - 1))
    row = fit.estimate.pi_hat[node]
    margins = []
    for community in range(k):
        margins.append(
            min(
                (row[community] - row[other])
                / np.sqrt(
                    variance_tr(
                        infl.pi(node, community).dense()
                        - infl.pi(node, other).dense(),
                        fit.ctx,
                    )
                )
                for other in range(k)
                if other != community
            )
        )
    region = [c for c in range(k) if margins[c] > cutoff]
    return region, margins


class TestClosestCommunityRegion:
    """Decisions match a direct evaluation of the rejection region."""

    @pytest.mark.parametrize("name", ["observed", "observed_three"])
    @pytest.mark.parametrize("alpha", [0.01, 0.1])
    def test_matches_region(self, request, name, alpha):
        fit = request.getfixturevalue(name)
        k = fit.estimate.k
        nodes = list(range(0, fit.estimate.n, 23))
        infl = influence_matrices(
            fit.ctx, [(node, c) for node in nodes for c in range(k)]
        )
        decided = 0
        for node in nodes:
            region, margins = closest_region(fit, node, alpha)
            assert len(region) <= 1
            report = closest_community_test(
                node, fit.estimate, infl, fit.ctx, alpha
            )
            assert report.rejected == (region[0] if region else None)
            expected = min(1.0, (k - 1) * norm.sf(max(margins)))
            assert report.p_value == pytest.approx(expected)
            assert report.details["standardised_margins"] == pytest.approx(
                margins
            )
            decided += bool(region)
        assert decided > 0

    def test_relabelled(self, observed_three):
        order = (2, 0, 1)
        relabelled = relabel(observed_three, order)
        for node in (0, THREE_COMMUNITY_PURE, 200):
            pairs = [(node, c) for c in range(3)]
            report = closest_community_test(
                node,
                observed_three.estimate,
                influence_matrices(observed_three.ctx, pairs),
                observed_three.ctx,
            )
            again = closest_community_test(
                node,
                relabelled.estimate,
                influence_matrices(relabelled.ctx, pairs),
                relabelled.ctx,
            )
            assert again.statistic == pytest.approx(report.statistic)
            if report.rejected is None:
                assert again.rejected is None
            else:
                assert again.rejected == order.index(report.rejected)


class TestTwoNodeThreeCommunities:
    """Chi-square test with two degrees of freedom."""

    def run(self, fit: ObservedFit, first: int, second: int):
        infl = influence_matrices(
            fit.ctx, [(node, c) for node in (first, second) for c in (0, 1)]
        )
        return two_node_test(first, second, fit.estimate, infl, fit.ctx)

    def test_pure_nodes_differ(self, observed_three):
        report = self.run(observed_three, 0, THREE_COMMUNITY_PURE)
        assert report.details["df"] == 2
        assert report.rejected is True
        assert report.p_value == pytest.approx(chi2.sf(report.statistic, 2))

    def test_equal_rows(self, observed_three):
        first, second = 190, 191
        pi_hat = observed_three.estimate.pi_hat.copy()
        pi_hat[second] = pi_hat[first]
        equal = observed_three._replace(
            estimate=replace(observed_three.estimate, pi_hat=pi_hat)
        )
        report = self.run(equal, first, second)
        assert report.statistic == 0.0
        assert report.p_value == 1.0
        assert report.rejected is False

    @pytest.mark.parametrize("order", [(2, 0, 1), (1, 2, 0), (0, 2, 1)])
    def test_label_permutation(self, observed_three, order):
        nodes = (200, 2 * THREE_COMMUNITY_PURE + 5)
        report = self.run(observed_three, *nodes)
        again = self.run(relabel(observed_three, order), *nodes)
        assert again.statistic == pytest.approx(report.statistic, rel=1e-8)
        assert again.p_value == pytest.approx(report.p_value, rel=1e-8)


class TestSigmaMonteCarlo:
    """``sigma_matrix`` against simulated traces under the true model."""

    PAIRS = [(0, 0), (5, 1), (12, 2), (30, 0)]

    def test_single_pair_variance(self, three_community_params):
        ctx = InferenceContext.from_params(three_community_params)
        infl = influence_matrices(ctx, [(5, 1)])
        sigma = sigma_matrix([(5, 1)], infl, ctx)
        assert sigma.shape == (1, 1)
        assert sigma[0, 0] == pytest.approx(variance_tr(infl.pi(5, 1), ctx))

    def test_matches_simulation(self, three_community_params):
        ctx = InferenceContext.from_params(three_community_params)
        infl = influence_matrices(ctx, self.PAIRS)
        sigma = sigma_matrix(self.PAIRS, infl, ctx)
        dense = [infl.pi(node, c).dense() for node, c in self.PAIRS]
        draws = 20000
        traces = bernoulli_traces(
            dense, build_h(three_community_params), draws, seed=3
        )
        centred = traces - traces.mean(axis=0)
        for row in range(len(self.PAIRS)):
            for column in range(len(self.PAIRS)):
                products = centred[:, row] * centred[:, column]
                error = abs(products.mean() - sigma[row, column])
                assert error <= 4 * products.std() / np.sqrt(draws)
