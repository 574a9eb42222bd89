"""Tests for the command-line front end."""

import json

import pytest

from netsym.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, build_parser, main
from netsym.core.config import SUBCOMMANDS
from netsym.core.experiment_core import MANIFEST_JSON, RESULT_CSV, RESULT_JSON


def _write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestParser:
    def test_subcommand_choices(self):
        parser = build_parser()
        for name in SUBCOMMANDS:
            assert parser.parse_args([name, "--config", "c.json"]).subcommand == name

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["fly", "--config", "c.json"])

    def test_config_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["ward"])

    def test_verbosity_exclusive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["ward", "--config", "c.json", "-v", "-q"])


class TestMain:
    def test_config_error(self, tmp_path, capsys):
        path = _write_config(tmp_path, {"workers": 0})
        out = tmp_path / "run"
        code = main(["check-symmetry", "--config", path, "--out", str(out), "-q"])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "config error: workers: must be a positive integer" in err
        assert "config error: architecture: required for check-symmetry" in err
        assert not out.exists()

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["ward", "--config", str(tmp_path / "absent.json"), "-q"])
        assert code == EXIT_CONFIG
        assert "cannot read" in capsys.readouterr().err

    def test_run_failure(self, tmp_path):
        data = {
            "architecture": {"builder": "linear_net", "input_dim": 2, "output_dim": 2},
            "inputs": [[1.0, 0.5]],
        }
        out = tmp_path / "run"
        path = _write_config(tmp_path, data)
        code = main(["perturbative", "--config", path, "--out", str(out), "--samples", "50", "-q"])
        assert code == EXIT_FAILURE
        assert not out.exists()

    def test_successful_run(self, tmp_path, capsys):
        data = {
            "ks": [0],
            "mus": [0.5],
            "seeds": [0],
            "widths": [4],
            "dataset_limit": 30,
            "training": {"epochs": 1, "batch_size": 8},
        }
        out = tmp_path / "run"
        path = _write_config(tmp_path, data)
        code = main(["train-grid", "--config", path, "--out", str(out), "--seed", "7", "-q"])
        assert code == EXIT_OK
        assert str(out) in capsys.readouterr().out
        assert (out / RESULT_JSON).exists()
        assert (out / RESULT_CSV).exists()
        manifest = json.loads((out / MANIFEST_JSON).read_text())
        assert manifest["seed"] == 7
