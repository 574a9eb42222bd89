"""Tests for the experiment orchestration layer and its result files."""

import csv
import json

import pytest

from netsym.core.config import ConfigError, ExperimentConfig, config_from_dict
from netsym.core.experiment_core import (
    MANIFEST_JSON,
    RESULT_CSV,
    RESULT_JSON,
    ExperimentCore,
)
from netsym.core.symmetry import DEVIATION_COLUMNS
from netsym.core.training import TRAINING_COLUMNS

LINEAR = {"builder": "linear_net", "input_dim": 2, "output_dim": 2}


def _core(tmp_path, **data):
    data.setdefault("output", str(tmp_path / "run"))
    return ExperimentCore(config_from_dict(data))


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestSyntheticSymmetry:
    def test_exact_tensors_have_no_deviation(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="check-symmetry",
            architecture={
                "builder": "synthetic-gp",
                "kernel": [[1.0, 0.3], [0.3, 0.8]],
                "output_dim": 3,
            },
            group={"name": "SO", "dim": 3},
            orders=[1, 2, 3, 4],
            experiments=2,
            elements=10,
        )
        result = core.execute()
        assert [r["order"] for r in result.payload["reports"]] == [1, 2, 3, 4]
        assert all(r["mu_M"] < 1e-12 for r in result.payload["reports"])
        assert result.columns == DEVIATION_COLUMNS


class TestRun:
    def test_writes_result_files(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="check-symmetry",
            architecture=LINEAR,
            inputs=[[1.0, 0.5]],
            group={"name": "SO", "dim": 2},
            samples=1000,
            experiments=3,
            elements=5,
            seed=4,
        )
        out = core.run()
        assert out == tmp_path / "run"
        payload = json.loads((out / RESULT_JSON).read_text())
        assert payload["subcommand"] == "check-symmetry"
        assert payload["config_hash"] == core.config.config_hash()
        rows = _read_csv(out / RESULT_CSV)
        assert rows[0] == DEVIATION_COLUMNS
        assert len(rows) == 2
        manifest = json.loads((out / MANIFEST_JSON).read_text())
        assert manifest["seed"] == 4
        assert manifest["files"] == [RESULT_JSON, RESULT_CSV]
        assert set(manifest["versions"]) == {"netsym", "numpy", "scipy", "python"}

    def test_same_config_same_bytes(self, tmp_path):
        data = dict(
            subcommand="ward",
            architecture=LINEAR,
            inputs=[[1.0, 0.5]],
            orders=[1, 2],
            samples=500,
            workers=2,
        )
        a = _core(tmp_path, output=str(tmp_path / "a"), **data).run()
        b = _core(tmp_path, output=str(tmp_path / "b"), **data).run()
        result_a = json.loads((a / RESULT_JSON).read_text())["result"]
        result_b = json.loads((b / RESULT_JSON).read_text())["result"]
        assert json.dumps(result_a) == json.dumps(result_b)
        assert (a / RESULT_CSV).read_bytes() == (b / RESULT_CSV).read_bytes()

    def test_unknown_subcommand(self, tmp_path):
        core = _core(tmp_path, subcommand="train-grid")
        with pytest.raises(ValueError, match="unknown subcommand 'fly'"):
            core.execute("fly")

    def test_invalid_config_writes_nothing(self, tmp_path):
        config = ExperimentConfig("check-symmetry", output=str(tmp_path / "run"))
        with pytest.raises(ConfigError):
            ExperimentCore(config)
        assert not (tmp_path / "run").exists()

    def test_failure_writes_nothing(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="perturbative",
            architecture=LINEAR,
            inputs=[[1.0, 0.5]],
            samples=100,
        )
        with pytest.raises(ValueError, match="quartic_output_net"):
            core.run()
        assert not (tmp_path / "run").exists()


class TestSubcommands:
    def test_gp_limit(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="gp-limit",
            architecture={"builder": "relu_net", "input_dim": 2, "output_dim": 2},
            inputs=[[1.0, 0.5]],
            orders=[2],
            widths=[2, 8],
            samples=2000,
        )
        result = core.execute()
        assert [row[0] for row in result.rows] == [2, 8]
        assert "2" in result.payload["decreasing"]

    def test_ward(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="ward",
            architecture=LINEAR,
            inputs=[[1.0, 0.5]],
            orders=[2],
            samples=2000,
        )
        result = core.execute()
        assert result.columns == ["n", "generator", "mean_sigma", "max_sigma"]
        assert result.rows[0][:2] == [2, 0]

    def test_ward_generator_range(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="ward",
            architecture=LINEAR,
            inputs=[[1.0, 0.5]],
            generator=5,
            samples=100,
        )
        with pytest.raises(ValueError, match="generator index"):
            core.execute()

    def test_ntk(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="ntk",
            architecture=LINEAR,
            inputs=[[1.0, 0.5], [0.2, -0.3]],
            samples=10,
            elements=5,
        )
        result = core.execute()
        assert len(result.rows) == 4
        assert result.payload["offdiag_max_sigma"] == 0.0

    def test_translate_check(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="translate-check",
            architecture={"builder": "t_layer_net", "input_dim": 2, "output_dim": 2, "width": 4},
            inputs=[[0.1, 0.2]],
            group={"name": "translation", "dim": 2},
            samples=500,
            elements=2,
        )
        result = core.execute()
        assert result.payload["group"] == "translation"
        assert [row[:2] for row in result.rows] == [[2, 0], [2, 1]]

    def test_su_check(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="su-check",
            architecture={
                "builder": "complex_output_net",
                "input_dim": 2,
                "output_dim": 2,
                "width": 4,
            },
            inputs=[[0.1, 0.2], [0.3, 0.1]],
            samples=500,
            experiments=2,
            elements=3,
        )
        result = core.execute()
        assert [row[1] for row in result.rows] == [False, False, True]
        assert result.payload["invariance"]["order"] == 2

    def test_perturbative(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="perturbative",
            architecture={
                "builder": "quartic_output_net",
                "input_dim": 2,
                "output_dim": 1,
                "width": 3,
                "sigma": 0.5,
                "coupling": 0.01,
                "burn_in": 50,
            },
            inputs=[[1.0, 0.5]],
            samples=200,
        )
        result = core.execute()
        assert result.columns == ["a", "b", "predicted", "measured", "stderr", "sigma"]
        assert result.payload["width"] == 3
        assert result.payload["predicted"][0][0] < result.payload["gaussian"][0][0]

    @pytest.mark.slow
    def test_perturbative_matches_metropolis_ensemble(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="perturbative",
            architecture={
                "builder": "quartic_output_net",
                "input_dim": 2,
                "output_dim": 1,
                "width": 1,
                "sigma": 0.8,
                "coupling": 0.01,
                "burn_in": 500,
            },
            inputs=[[1.0, 0.5], [-0.2, 0.9]],
            samples=100_000,
            seed=3,
        )
        payload = core.execute().payload
        assert payload["max_sigma"] <= 4.0
        assert payload["measured"][0][0] < payload["gaussian"][0][0]

    def test_train_grid(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="train-grid",
            ks=[0, 1],
            mus=[0.5],
            seeds=[0],
            widths=[4],
            dataset_limit=50,
            training={"epochs": 1, "batch_size": 16},
        )
        out = core.run()
        rows = _read_csv(out / RESULT_CSV)
        assert rows[0] == TRAINING_COLUMNS
        assert len(rows) == 3
        summary = json.loads((out / RESULT_JSON).read_text())["result"]["summary"]
        assert [(s["k"], s["mu_W"]) for s in summary] == [(0, 0.5), (1, 0.5)]

    def test_train_onecold(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="train-onecold",
            mus=[0.0, 0.1],
            seeds=[0, 1],
            widths=[4],
            dataset_limit=50,
            training={"epochs": 1, "batch_size": 16},
        )
        result = core.execute()
        assert [row[0] for row in result.rows] == [0.0, 0.1]
        assert result.payload["predicted_peak"] > 0.0

    def test_flow_check(self, tmp_path):
        core = _core(
            tmp_path,
            subcommand="flow-check",
            architecture={"builder": "relu_net", "input_dim": 2, "output_dim": 2, "width": 4},
            steps=1,
            members=50,
            experiments=2,
            elements=3,
            dataset_limit=40,
        )
        result = core.execute()
        assert [row[:3] for row in result.rows] == [
            ["so-invariant", 1, 1],
            ["so-invariant", 1, 2],
            ["mse", 1, 1],
            ["mse", 1, 2],
        ]
