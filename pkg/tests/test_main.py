"""Tests for __main__ module (entry point, CLI)."""

import json
import os
from unittest.mock import patch

import pytest

from egolayers import __version__
from egolayers.__main__ import build_parser, main


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("EGOLAYERS_"):
            monkeypatch.delenv(key)


def _run(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    return exc_info.value.code


def _relaxed_config(tmp_path):
    path = tmp_path / "relaxed.conf"
    path.write_text("min_monthly_interactions=0\nmin_account_age=0\n")
    return path


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        for command in ("ingest", "layers", "diffusion", "all", "synth"):
            assert parser.parse_args([command]).command == command

    def test_flags_map_to_destinations(self):
        args = build_parser().parse_args(
            ["all", "--events", "e.csv", "--k-max", "7", "--fixed-k", "3", "--tie-rings", "--threads", "2"]
        )
        assert args.events == "e.csv"
        assert args.k_max == 7
        assert args.fixed_k == 3
        assert args.tie_rings is True
        assert args.threads == 2

    def test_clustering_flags(self):
        args = build_parser().parse_args(["layers", "--cluster-scale", "log", "--aic-model", "normal"])
        assert args.cluster_scale == "log"
        assert args.aic_model == "normal"
        with pytest.raises(SystemExit):
            build_parser().parse_args(["layers", "--aic-model", "cauchy"])

    def test_unset_flags_are_none(self):
        args = build_parser().parse_args(["layers"])
        assert args.tie_rings is None
        assert args.calibrate_m is None
        assert args.seed is None


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


class TestCLI:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc_info, patch("sys.argv", ["egolayers", "--version"]):
            main()
        assert exc_info.value.code == 0
        captured = capsys.readouterr()
        assert __version__ in captured.out

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc_info, patch("sys.argv", ["egolayers", "unknown"]):
            main()
        assert exc_info.value.code != 0

    def test_no_command_prints_help(self, capsys):
        with pytest.raises(SystemExit) as exc_info, patch("sys.argv", ["egolayers"]):
            main()
        assert exc_info.value.code == 1
        assert "usage" in capsys.readouterr().out

    def test_missing_input_reports_error(self, tmp_path, capsys):
        assert _run(["all", "-o", str(tmp_path)]) == 2
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["type"] == "ConfigError"
        assert "event_log is required" in record["error"]

    def test_unknown_config_key(self, tmp_path, capsys):
        conf = tmp_path / "bad.conf"
        conf.write_text("colour=blue\n")
        assert _run(["layers", "--config", str(conf)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_unexpected_exception_exits_one(self, tmp_path):
        events = tmp_path / "events.csv"
        events.write_text("source,target,kind,months_before_download\n")
        with patch("egolayers.__main__.run_pipeline", side_effect=RuntimeError("boom")):
            assert _run(["all", "--events", str(events)]) == 1

    def test_command_dispatch(self, tmp_path):
        events = tmp_path / "events.csv"
        events.write_text("source,target,kind,months_before_download\n")
        with patch("egolayers.__main__.run_pipeline", return_value=0) as mock_run:
            assert _run(["diffusion", "--events", str(events), "--rings", "4"]) == 0
        cfg, command = mock_run.call_args.args
        assert command == "diffusion"
        assert cfg.rings == 4
        assert cfg.event_log == events


# ---------------------------------------------------------------------------
# synth + analysis round trip
# ---------------------------------------------------------------------------


class TestSynthThenAnalyse:
    def test_synth_writes_event_log(self, tmp_path):
        out = tmp_path / "synthetic"
        assert _run(["synth", "--egos", "3", "--seed", "5", "-o", str(out)]) == 0
        assert (out / "events.csv").is_file()
        assert (out / "accounts.csv").is_file()

    def test_synth_windowed(self, tmp_path):
        out = tmp_path / "synthetic"
        assert _run(["synth", "--egos", "2", "--format", "windowed", "-o", str(out)]) == 0
        assert (out / "windows.csv").read_text().startswith("ego,alter,n1,n2,n3,n4")
        assert (out / "social.csv").is_file()

    def test_synth_bad_layer_spec(self, tmp_path, capsys):
        spec = tmp_path / "layers.spec"
        spec.write_text("ring1.size=-3\n")
        assert _run(["synth", "--layer-spec", str(spec), "-o", str(tmp_path / "out")]) == 2
        assert "SpecError" in capsys.readouterr().err

    def test_all_writes_reports(self, tmp_path):
        data = tmp_path / "synthetic"
        reports = tmp_path / "reports"
        assert _run(["synth", "--egos", "4", "--seed", "2", "-o", str(data)]) == 0
        status = _run(
            [
                "all",
                "--config",
                str(_relaxed_config(tmp_path)),
                "--events",
                str(data / "events.csv"),
                "--accounts",
                str(data / "accounts.csv"),
                "-o",
                str(reports),
            ]
        )
        assert status == 0
        for name in ("egos.csv", "kstar_density.csv", "circles.csv", "rings_diffusion.csv", "summary.json"):
            assert (reports / name).is_file(), name
        assert not (reports / "error.json").exists()
        summary = json.loads((reports / "summary.json").read_text())
        assert summary["command"] == "all"
        assert summary["eligible_egos"] == 4
