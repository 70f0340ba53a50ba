"""Basic configuration for adding fixtures for tests.

This adds a ``slow`` mark for long Monte Carlo runs, skipped unless
``--run-slow`` is passed.
"""

from typing import Callable

import numpy as np
import pytest
from click.testing import CliRunner

from dcmminfer.model import DcmmParams, SyntheticSetting, synthetic_config

SMALL_N: int = 60
THREE_COMMUNITY_N: int = 40
THREE_COMMUNITY_P: np.ndarray = np.array(
    [[1.0, 0.3, 0.2], [0.3, 0.9, 0.25], [0.2, 0.25, 0.8]]
)


def pytest_addoption(parser):
    """Add the ``--run-slow`` option."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run slow Monte Carlo acceptance tests.",
    )


def pytest_collection_modifyitems(config, items):
    """Skip ``slow`` tests unless ``--run-slow`` is passed."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_three_community_params(
    seed: int, n: int = THREE_COMMUNITY_N, pure_per_community: int = 2
) -> DcmmParams:
    """Random ``K = 3`` model with pure rows first, then Dirichlet rows."""
    rng = np.random.default_rng(seed)
    k = THREE_COMMUNITY_P.shape[0]
    pure = np.repeat(np.eye(k), pure_per_community, axis=0)
    mixed = rng.dirichlet(np.ones(k), n - pure.shape[0])
    pi = np.vstack([pure, mixed])
    pi /= pi.sum(axis=1, keepdims=True)
    pi[: pure.shape[0]] = pure
    theta = rng.uniform(0.5, 0.9, n)
    return DcmmParams(theta=theta, pi=pi, p=THREE_COMMUNITY_P)


def random_symmetric_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Gaussian matrix with a zero diagonal."""
    upper = np.triu(rng.standard_normal((n, n)), 1)
    return upper + upper.T


def bernoulli_traces(
    matrices, h: np.ndarray, draws: int, seed: int, chunk: int = 4000
) -> np.ndarray:
    """Monte Carlo ``Tr[M W]`` for each matrix, ``W = X - H``, no loops."""
    rows, cols = np.triu_indices(h.shape[0], k=1)
    p = h[rows, cols]
    symmetrised = np.array([(m + m.T)[rows, cols] for m in matrices])
    rng = np.random.default_rng(seed)
    traces = []
    for start in range(0, draws, chunk):
        size = min(chunk, draws - start)
        noise = (rng.random((size, p.size)) < p) - p
        traces.append(noise @ symmetrised.T)
    return np.vstack(traces)


@pytest.fixture
def cli_runner() -> CliRunner:
    """Fixture for adding CliRunners() to tests."""
    return CliRunner()


@pytest.fixture
def small_params() -> DcmmParams:
    """Two-community synthetic model with 60 nodes."""
    return synthetic_config(SyntheticSetting.ThetaConst09, SMALL_N, seed=7)


@pytest.fixture
def three_community_params() -> DcmmParams:
    """Random three-community model with 40 nodes."""
    return random_three_community_params(seed=11)


@pytest.fixture
def three_community_factory() -> Callable[[int], DcmmParams]:
    """Build a random three-community model per seed."""
    return random_three_community_params


@pytest.fixture
def path_graph_csv(tmp_path):
    """Three-node edge list ``0,1`` and ``1,2``."""
    path = tmp_path / "path.csv"
    path.write_text("0,1\n1,2\n")
    return path
