# -*- coding: utf-8 -*-

"""Console script for dcmminfer."""

from functools import wraps
from json import dumps
from logging import getLogger
from pathlib import Path
from sys import exit
from typing import Callable, List, Optional, Tuple, Union

import click
from dotenv import load_dotenv

from .dcmminfer import (
    DEFAULT_DESK_N,
    DEFAULT_DESK_REPLICATES,
    ExperimentConfig,
    ExperimentKind,
    fit_network,
    run_experiment,
    save_report,
    write_estimate,
)
from .inference import (
    closest_community_scan,
    rank_ci,
    rank_ci_profile,
    two_node_test,
)
from .influence import influence_matrices
from .model import (
    AdjacencyFormat,
    AdjacencyMatrix,
    DcmmParams,
    SyntheticSetting,
    load_adjacency,
    synthetic_config,
)
from .utils import (
    DEFAULT_ALPHA,
    DEFAULT_BOOTSTRAP_DRAWS,
    DEFAULT_ENV_PATH,
    DEFAULT_SEED,
    DEFAULT_WORKERS,
    ConfigurationError,
    NumericalDegeneracyError,
    ValidationError,
    json_serialise,
)

logger = getLogger(__name__)

VALIDATION_EXIT_CODE: int = 2
DEGENERACY_EXIT_CODE: int = 3
ALL: str = "all"
AUTO: str = "auto"

alpha_option = click.option(
    "--alpha",
    type=float,
    envvar="DCMM_ALPHA",
    default=DEFAULT_ALPHA,
    help="Significance level.",
)


class DcmmGroup(click.Group):
    """Click group mapping package errors onto exit codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except ValidationError as error:
            click.echo(f"Error: {error}", err=True)
            ctx.exit(VALIDATION_EXIT_CODE)
        except NumericalDegeneracyError as error:
            click.echo(f"Numerical degeneracy: {error}", err=True)
            ctx.exit(DEGENERACY_EXIT_CODE)


def parse_phi(
    ctx: click.Context, param: click.Parameter, value: str
) -> Optional[float]:
    """Return ``None`` for ``auto`` else a positive radius."""
    if value is None or value.lower() == AUTO:
        return None
    try:
        phi = float(value)
    except ValueError:
        raise click.BadParameter(f"'{value}' is neither '{AUTO}' nor a number")
    if phi <= 0:
        raise click.BadParameter(f"radius must be positive, got {phi}")
    return phi


def parse_index_or_all(
    ctx: click.Context, param: click.Parameter, value: str
) -> Optional[int]:
    """Return ``None`` for ``all`` else a non-negative index."""
    if value.lower() == ALL:
        return None
    try:
        index = int(value)
    except ValueError:
        raise click.BadParameter(f"'{value}' is neither '{ALL}' nor an index")
    if index < 0:
        raise click.BadParameter(f"index must be >= 0, got {index}")
    return index


def parse_node_pair(
    ctx: click.Context, param: click.Parameter, value: str
) -> Tuple[int, int]:
    """Parse ``I,J`` into two node indices."""
    try:
        node_i, node_j = (int(cell) for cell in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected 'I,J', got '{value}'")
    return node_i, node_j


def check_indices(
    adjacency: AdjacencyMatrix, k: int, nodes=(), communities=()
) -> None:
    """Raise ``ConfigurationError`` for out-of-range indices."""
    for node in nodes:
        if node is not None and not 0 <= node < adjacency.n:
            raise ConfigurationError(
                f"node {node} outside [0, {adjacency.n})."
            )
    for community in communities:
        if community is not None and not 0 <= community < k:
            raise ConfigurationError(
                f"community {community} outside [0, {k})."
            )


def network_options(command: Callable) -> Callable:
    """Options shared by every command fitting a user-supplied network."""

    @click.option(
        "--adjacency",
        "adjacency_path",
        type=click.Path(exists=True, dir_okay=False),
        required=True,
        help="Edge-list or dense adjacency CSV.",
    )
    @click.option(
        "--format",
        "adjacency_format",
        type=click.Choice([f.value for f in AdjacencyFormat]),
        default=AdjacencyFormat.EdgeListCsv.value,
        show_default=True,
    )
    @click.option("--k", "k", type=click.IntRange(min=1), required=True)
    @click.option(
        "--phi",
        type=str,
        default=AUTO,
        show_default=True,
        callback=parse_phi,
        help="Vertex-set radius, or 'auto'.",
    )
    @click.option(
        "--n",
        "n",
        type=click.IntRange(min=1),
        default=None,
        help="Node count of an edge list (default: largest index + 1).",
    )
    @click.option("--self-loop", is_flag=True, default=False)
    @wraps(command)
    def wrapper(
        *args,
        adjacency_path: str,
        adjacency_format: str,
        n: Optional[int],
        self_loop: bool,
        **kwargs,
    ):
        adjacency: AdjacencyMatrix = load_adjacency(
            adjacency_path, adjacency_format, n=n, self_loop=self_loop
        )
        return command(*args, adjacency=adjacency, **kwargs)

    return wrapper


def emit(
    ctx: click.Context, report, out: Optional[str]
) -> None:
    """Write ``report`` to ``out`` or echo it as json."""
    if out:
        save_report(out, report, indent=ctx.obj["indent"])
        click.echo(f"Report written to {out}")
    else:
        if isinstance(report, list):
            data = [item.to_json_dict() for item in report]
        else:
            data = report.to_json_dict()
        click.echo(dumps(json_serialise(data), indent=ctx.obj["indent"]))


@click.group(name="dcmminfer", cls=DcmmGroup)
@click.option(
    "--env-path",
    "-e",
    "env_path",
    type=click.Path(dir_okay=False, file_okay=True),
    envvar="DCMM_ENV_PATH",
    default=DEFAULT_ENV_PATH,
    nargs=1,
    help="Path to a .env file with DCMM_* defaults (default=.env)",
)
@click.option(
    "--indent",
    "-i",
    type=int,
    nargs=1,
    default=2,
    show_default=True,
    help="How many spaces to indent json reports.",
)
@click.pass_context
def dcmminfer(ctx: click.Context, indent: int, env_path: click.Path) -> int:
    """Estimate and test mixed memberships in DCMM networks."""
    ctx.ensure_object(dict)
    if env_path and Path(env_path).is_file():
        load_dotenv(dotenv_path=env_path, override=False)
    ctx.obj["indent"] = indent
    return 0


@dcmminfer.command("gen-config")
@click.option(
    "--setting",
    type=click.Choice([s.value for s in SyntheticSetting]),
    default=SyntheticSetting.ThetaConst09.value,
    show_default=True,
)
@click.option("--n", "n", type=int, default=DEFAULT_DESK_N, show_default=True)
@click.option("--seed", type=int, envvar="DCMM_SEED", default=DEFAULT_SEED)
@click.option(
    "--pure-per-community", type=click.IntRange(min=1), default=1
)
@click.option("--self-loop", is_flag=True, default=False)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def gen_config(
    ctx: click.Context,
    setting: str,
    n: int,
    seed: int,
    pure_per_community: int,
    self_loop: bool,
    out: str,
) -> None:
    """Write a synthetic two-community model as json."""
    params: DcmmParams = synthetic_config(
        setting, n, seed, pure_per_community, self_loop
    )
    params.save(out, indent=ctx.obj["indent"])
    click.echo(f"Model with n={params.n}, K={params.k} written to {out}")


@dcmminfer.command()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Model json from gen-config (default: synthetic --setting).",
)
@click.option(
    "--experiment",
    type=click.Choice([kind.value for kind in ExperimentKind]),
    default=ExperimentKind.Normality.value,
    show_default=True,
)
@click.option("--replicates", type=click.IntRange(min=1), default=None)
@click.option("--seed", type=int, envvar="DCMM_SEED", default=DEFAULT_SEED)
@click.option(
    "--workers",
    type=click.IntRange(min=1),
    envvar="DCMM_WORKERS",
    default=DEFAULT_WORKERS,
)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option(
    "--paper-scale",
    "--full-scale",
    "full_scale",
    is_flag=True,
    default=False,
    help="Use n=2000 and 500 replicates.",
)
@click.option(
    "--bootstrap",
    "bootstrap_draws",
    type=int,
    envvar="DCMM_BOOTSTRAP",
    default=DEFAULT_BOOTSTRAP_DRAWS,
)
@alpha_option
@click.option(
    "--setting",
    type=click.Choice([s.value for s in SyntheticSetting]),
    default=SyntheticSetting.ThetaConst09.value,
    show_default=True,
)
@click.option("--n", "n", type=int, default=None)
@click.option("--node", type=click.IntRange(min=0), default=0)
@click.option("--community", type=click.IntRange(min=0), default=0)
@click.option(
    "--alternative",
    is_flag=True,
    default=False,
    help="Two-node test between pure nodes of different communities.",
)
@click.option(
    "--noiseless", is_flag=True, default=False, help="Use X = H."
)
@click.option("--phi", type=str, default=AUTO, callback=parse_phi)
@click.pass_context
def simulate(
    ctx: click.Context,
    config_path: Optional[str],
    experiment: str,
    replicates: Optional[int],
    full_scale: bool,
    n: Optional[int],
    out: str,
    **kwargs,
) -> None:
    """Run a Monte Carlo experiment; writes stats.csv and summary.json."""
    settings = dict(kwargs, kind=experiment, output_dir=Path(out))
    if config_path:
        settings["params"] = DcmmParams.load(config_path)
    if n is not None:
        settings["n"] = n
    if replicates is not None:
        settings["replicates"] = replicates
    if full_scale:
        cfg = ExperimentConfig.full_scale(**settings)
    else:
        settings.setdefault("n", DEFAULT_DESK_N)
        settings.setdefault("replicates", DEFAULT_DESK_REPLICATES)
        cfg = ExperimentConfig(**settings)
    summary = run_experiment(cfg, indent=ctx.obj["indent"])
    click.echo(str(summary))


@dcmminfer.command()
@network_options
@click.option("--clip", is_flag=True, default=False)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.pass_context
def estimate(
    ctx: click.Context,
    adjacency: AdjacencyMatrix,
    k: int,
    phi: Optional[float],
    clip: bool,
    out: str,
) -> None:
    """Fit memberships; writes pi.csv, vertices.json and embedding.csv."""
    fit, _ = fit_network(adjacency, k, phi, clip=clip)
    paths = write_estimate(fit, out, indent=ctx.obj["indent"])
    for path in paths.values():
        click.echo(f"Wrote {path}")


@dcmminfer.command("rank-ci")
@network_options
@click.option("--node", type=click.IntRange(min=0), required=True)
@click.option(
    "--community",
    type=str,
    default="0",
    callback=parse_index_or_all,
    help="Community index or 'all'.",
)
@alpha_option
@click.option(
    "--bootstrap",
    "bootstrap_draws",
    type=int,
    envvar="DCMM_BOOTSTRAP",
    default=DEFAULT_BOOTSTRAP_DRAWS,
)
@click.option("--seed", type=int, envvar="DCMM_SEED", default=DEFAULT_SEED)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def rank_ci_command(
    ctx: click.Context,
    adjacency: AdjacencyMatrix,
    k: int,
    phi: Optional[float],
    node: int,
    community: Optional[int],
    alpha: float,
    bootstrap_draws: int,
    seed: int,
    out: Optional[str],
) -> None:
    """Bootstrap confidence interval for the rank of pi[node, community]."""
    check_indices(adjacency, k, [node], [community])
    fit, inference_ctx = fit_network(adjacency, k, phi)
    report: Union[List, object]
    if community is None:
        report = rank_ci_profile(
            node, fit.estimate, inference_ctx, bootstrap_draws, alpha, seed
        )
    else:
        report = rank_ci(
            node,
            community,
            fit.estimate,
            inference_ctx,
            bootstrap_draws,
            alpha,
            seed,
        )
    emit(ctx, report, out)


@dcmminfer.command("test-closest")
@network_options
@click.option(
    "--node",
    type=str,
    required=True,
    callback=parse_index_or_all,
    help="Node index or 'all'.",
)
@alpha_option
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def test_closest(
    ctx: click.Context,
    adjacency: AdjacencyMatrix,
    k: int,
    phi: Optional[float],
    node: Optional[int],
    alpha: float,
    out: Optional[str],
) -> None:
    """Test which community a node (or every node) is closest to."""
    check_indices(adjacency, k, [node])
    fit, inference_ctx = fit_network(adjacency, k, phi)
    nodes = None if node is None else [node]
    reports = closest_community_scan(fit.estimate, inference_ctx, alpha, nodes)
    emit(ctx, reports if node is None else reports[0], out)


@dcmminfer.command("test-pair")
@network_options
@click.option(
    "--nodes",
    type=str,
    required=True,
    callback=parse_node_pair,
    help="Two node indices 'I,J'.",
)
@alpha_option
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def test_pair(
    ctx: click.Context,
    adjacency: AdjacencyMatrix,
    k: int,
    phi: Optional[float],
    nodes: Tuple[int, int],
    alpha: float,
    out: Optional[str],
) -> None:
    """Test whether two nodes share the same membership vector."""
    check_indices(adjacency, k, nodes)
    fit, inference_ctx = fit_network(adjacency, k, phi)
    node_i, node_j = nodes
    infl = influence_matrices(
        inference_ctx,
        [(node, c) for node in nodes for c in range(max(k - 1, 0))],
    )
    report = two_node_test(
        node_i, node_j, fit.estimate, infl, inference_ctx, alpha
    )
    emit(ctx, report, out)


def main() -> None:
    """Console entry point."""
    exit(dcmminfer(obj={}))  # pragma: no cover


if __name__ == "__main__":
    main()  # pragma: no cover
