#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Tests for `dcmminfer` command line interface."""

import json
from typing import Final

import pandas as pd
import pytest

from dcmminfer import cli
from dcmminfer.cli import (
    DEGENERACY_EXIT_CODE,
    VALIDATION_EXIT_CODE,
    dcmminfer,
)
from dcmminfer.dcmminfer import (
    FULL_SCALE_N,
    FULL_SCALE_REPLICATES,
    STATS_FILE_NAME,
    SUMMARY_FILE_NAME,
)
from dcmminfer.model import (
    AdjacencyFormat,
    DcmmParams,
    sample_adjacency,
    save_adjacency,
    synthetic_config,
)
from dcmminfer.utils import EigenConvergenceError

NETWORK_N: Final[int] = 120

CORRECT_HELP = """\
Usage: dcmminfer [OPTIONS] COMMAND [ARGS]...

  Estimate and test mixed memberships in DCMM networks.
"""
COMMANDS: Final[tuple] = (
    "estimate",
    "gen-config",
    "rank-ci",
    "simulate",
    "test-closest",
    "test-pair",
)


@pytest.fixture
def network_params() -> DcmmParams:
    return synthetic_config("const09", NETWORK_N, 21, pure_per_community=2)


@pytest.fixture
def network_csv(tmp_path, network_params):
    """Edge list sampled from a two-community model."""
    path = tmp_path / "network.csv"
    save_adjacency(
        sample_adjacency(network_params, seed=4),
        path,
        AdjacencyFormat.EdgeListCsv,
    )
    return path


def network_args(path, *args) -> list:
    return [*args, "--adjacency", str(path), "--k", "2", "--n", str(NETWORK_N)]


class TestMainCommandLineInterface:
    """Test dcmminfer root command line interface."""

    def test_command_line_interface(self, cli_runner):
        """Test the CLI."""
        result = cli_runner.invoke(dcmminfer)
        assert result.exit_code == 0
        assert CORRECT_HELP in result.output
        help_result = cli_runner.invoke(dcmminfer, ["--help"])
        assert help_result.exit_code == 0
        for command in COMMANDS:
            assert command in help_result.output

    def test_rank_ci_help(self, cli_runner):
        result = cli_runner.invoke(dcmminfer, ["rank-ci", "--help"])
        assert result.exit_code == 0
        assert "Usage: dcmminfer rank-ci [OPTIONS]" in result.output
        assert "Bootstrap confidence interval for the rank" in result.output
        assert "--bootstrap" in result.output


class TestGenConfigAndSimulate:
    """Synthetic models and Monte Carlo runs."""

    def test_gen_config(self, cli_runner, tmp_path):
        out = tmp_path / "model.json"
        result = cli_runner.invoke(
            dcmminfer,
            ["gen-config", "--n", "50", "--seed", "3", "--out", str(out)],
        )
        assert result.exit_code == 0
        assert f"Model with n=50, K=2 written to {out}" in result.output
        params = DcmmParams.load(out)
        assert params.n == 50

    def test_simulate(self, cli_runner, tmp_path):
        out = tmp_path / "run"
        result = cli_runner.invoke(
            dcmminfer,
            [
                "simulate",
                "--n",
                "80",
                "--replicates",
                "2",
                "--seed",
                "5",
                "--out",
                str(out),
            ],
        )
        assert result.exit_code == 0
        assert result.output.startswith("normality: 2/2")
        assert len(pd.read_csv(out / STATS_FILE_NAME)) == 2
        summary = json.loads((out / SUMMARY_FILE_NAME).read_text())
        assert summary["config"]["n"] == 80

    def test_simulate_from_config(self, cli_runner, tmp_path):
        model = tmp_path / "model.json"
        synthetic_config("uniform", 70, 2).save(model)
        out = tmp_path / "run"
        result = cli_runner.invoke(
            dcmminfer,
            [
                "simulate",
                "--config",
                str(model),
                "--replicates",
                "1",
                "--out",
                str(out),
            ],
        )
        assert result.exit_code == 0
        summary = json.loads((out / SUMMARY_FILE_NAME).read_text())
        assert summary["config"]["n"] == 70
        assert summary["config"]["setting"] is None

    @pytest.mark.parametrize("flag", ["--paper-scale", "--full-scale"])
    def test_paper_scale(self, cli_runner, tmp_path, monkeypatch, flag):
        configs = []

        def record(cfg, indent=None):
            configs.append(cfg)
            return "recorded"

        monkeypatch.setattr(cli, "run_experiment", record)
        result = cli_runner.invoke(
            dcmminfer, ["simulate", flag, "--out", str(tmp_path / "run")]
        )
        assert result.exit_code == 0
        assert result.output == "recorded\n"
        assert configs[0].n == FULL_SCALE_N
        assert configs[0].replicates == FULL_SCALE_REPLICATES

    def test_paper_scale_keeps_explicit_n(
        self, cli_runner, tmp_path, monkeypatch
    ):
        configs = []
        monkeypatch.setattr(
            cli, "run_experiment", lambda cfg, indent=None: configs.append(cfg)
        )
        result = cli_runner.invoke(
            dcmminfer,
            [
                "simulate",
                "--paper-scale",
                "--n",
                "60",
                "--out",
                str(tmp_path / "run"),
            ],
        )
        assert result.exit_code == 0
        assert configs[0].n == 60
        assert configs[0].replicates == FULL_SCALE_REPLICATES

    def test_seed_from_env_file(self, cli_runner, tmp_path, monkeypatch):
        monkeypatch.setenv("DCMM_SEED", "0")
        monkeypatch.delenv("DCMM_SEED")
        env = tmp_path / "test.env"
        env.write_text("DCMM_SEED=17\n")
        out = tmp_path / "run"
        result = cli_runner.invoke(
            dcmminfer,
            [
                "--env-path",
                str(env),
                "simulate",
                "--n",
                "60",
                "--replicates",
                "1",
                "--out",
                str(out),
            ],
        )
        assert result.exit_code == 0
        summary = json.loads((out / SUMMARY_FILE_NAME).read_text())
        assert summary["seed"] == 17

    def test_invalid_config(self, cli_runner, tmp_path):
        result = cli_runner.invoke(
            dcmminfer,
            ["simulate", "--n", "3", "--out", str(tmp_path / "run")],
        )
        assert result.exit_code == VALIDATION_EXIT_CODE


class TestNetworkCommands:
    """Commands fitting a user-supplied network."""

    def test_estimate(self, cli_runner, tmp_path, network_csv):
        out = tmp_path / "fit"
        result = cli_runner.invoke(
            dcmminfer, network_args(network_csv, "estimate", "--out", str(out))
        )
        assert result.exit_code == 0
        frame = pd.read_csv(out / "pi.csv")
        assert len(frame) == NETWORK_N
        assert (out / "vertices.json").is_file()
        assert f"Wrote {out / 'embedding.csv'}" in result.output

    def test_rank_ci(self, cli_runner, network_csv):
        result = cli_runner.invoke(
            dcmminfer,
            network_args(
                network_csv, "rank-ci", "--node", "10", "--bootstrap", "100"
            ),
        )
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["node"] == 10
        assert 1 <= report["lower"] <= report["upper"] <= NETWORK_N

    def test_rank_ci_profile_to_file(self, cli_runner, tmp_path, network_csv):
        out = tmp_path / "profile.json"
        result = cli_runner.invoke(
            dcmminfer,
            network_args(
                network_csv,
                "rank-ci",
                "--node",
                "3",
                "--community",
                "all",
                "--bootstrap",
                "60",
                "--out",
                str(out),
            ),
        )
        assert result.exit_code == 0
        assert f"Report written to {out}" in result.output
        intervals = json.loads(out.read_text())
        assert [i["community"] for i in intervals] == [0, 1]

    def test_closest_all(self, cli_runner, network_csv):
        result = cli_runner.invoke(
            dcmminfer,
            network_args(network_csv, "test-closest", "--node", "all"),
        )
        assert result.exit_code == 0
        reports = json.loads(result.output)
        assert len(reports) == NETWORK_N
        assert all(0 <= r["p_value"] <= 1 for r in reports)

    def test_pair(self, cli_runner, network_csv, network_params):
        first, second = (
            int(members[0]) for members in network_params.pure_node_sets
        )
        result = cli_runner.invoke(
            dcmminfer,
            network_args(
                network_csv, "test-pair", "--nodes", f"{first},{second}"
            ),
        )
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["rejected"] is True

    @pytest.mark.parametrize(
        "args",
        [
            ["rank-ci", "--node", str(NETWORK_N)],
            ["rank-ci", "--node", "0", "--community", "2"],
            ["test-pair", "--nodes", f"0,{NETWORK_N}"],
        ],
    )
    def test_out_of_range(self, cli_runner, network_csv, args):
        result = cli_runner.invoke(dcmminfer, network_args(network_csv, *args))
        assert result.exit_code == VALIDATION_EXIT_CODE
        assert "outside" in result.output

    def test_bad_phi(self, cli_runner, network_csv):
        result = cli_runner.invoke(
            dcmminfer,
            network_args(network_csv, "test-closest", "--node", "0")
            + ["--phi", "-1"],
        )
        assert result.exit_code == 2
        assert "radius must be positive" in result.output

    def test_degeneracy_exit_code(self, cli_runner, network_csv, monkeypatch):
        def failing_fit(*args, **kwargs):
            raise EigenConvergenceError("no convergence")

        monkeypatch.setattr(cli, "fit_network", failing_fit)
        result = cli_runner.invoke(
            dcmminfer, network_args(network_csv, "test-closest", "--node", "0")
        )
        assert result.exit_code == DEGENERACY_EXIT_CODE
        assert "Numerical degeneracy: no convergence" in result.output
