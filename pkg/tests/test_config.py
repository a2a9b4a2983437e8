"""Tests for configuration module."""

import logging
import os
from pathlib import Path

import pytest

from egolayers.config import Config, PipelineConfig, setup_logging
from egolayers.errors import ConfigError, ParseError


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    """Drop EGOLAYERS_* variables leaking in from the surrounding shell."""
    for key in list(os.environ):
        if key.startswith("EGOLAYERS_"):
            monkeypatch.delenv(key)


@pytest.fixture
def event_log(tmp_path):
    path = tmp_path / "events.csv"
    path.write_text("source,target,kind,months_before_download\n1,2,reply,1.0\n")
    return path


def test_default_values():
    config = Config()
    assert config.format == "events"
    assert config.output_dir == Path("reports")
    assert config.k_max == 20
    assert config.fixed_k is None
    assert config.rings == 5
    assert config.tie_rings is False
    assert config.threads == 1
    assert config.egos == 50
    assert config.classified_share == 0.3
    assert config.windows.w4 == 43.0
    assert config.eligibility.min_monthly_interactions == 10.0
    assert config.alter_rule.max_mention_ratio is None
    assert config.log_level == logging.INFO


def test_env_variables(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_K_MAX", "12")
    monkeypatch.setenv("EGOLAYERS_W1", "0.5")
    monkeypatch.setenv("EGOLAYERS_CALIBRATE_M", "yes")
    config = Config()
    assert config.k_max == 12
    assert config.windows.w1 == 0.5
    assert config.calibrate_m is True


def test_file_beats_env(monkeypatch, tmp_path):
    monkeypatch.setenv("EGOLAYERS_THREADS", "2")
    path = tmp_path / "run.conf"
    path.write_text("threads=4\nseed=9\n")
    config = Config(config_file=path)
    assert config.threads == 4
    assert config.seed == 9


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("threads=4\n")
    config = Config(config_file=path, overrides={"threads": 8, "seed": None})
    assert config.threads == 8
    assert config.seed == 0


def test_blank_file_value_is_unset(monkeypatch, tmp_path):
    monkeypatch.setenv("EGOLAYERS_RINGS", "3")
    path = tmp_path / "run.conf"
    path.write_text("rings=\n")
    assert Config(config_file=path).rings == 3


def test_unknown_file_key(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("colour=blue\n")
    with pytest.raises(ConfigError, match="colour"):
        Config(config_file=path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        Config(config_file=tmp_path / "nope.conf")


def test_format_follows_inputs(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_WINDOW_GRAPH", "windows.csv")
    assert Config().format == "windowed"


def test_bad_integer(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_SEED", "abc")
    with pytest.raises(ConfigError, match="seed"):
        Config()


def test_bad_bool(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_TIE_RINGS", "maybe")
    with pytest.raises(ConfigError, match="tie_rings"):
        Config()


def test_windows_must_increase(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_W2", "0.5")
    with pytest.raises(ConfigError):
        Config()


def test_log_level_warn_alias(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_LOG_LEVEL", "WARN")
    config = Config()
    assert config.log_level == 30  # logging.WARNING


def test_log_level_invalid(monkeypatch):
    monkeypatch.setenv("EGOLAYERS_LOG_LEVEL", "INVALID")
    config = Config()
    assert config.log_level == logging.INFO  # Falls back to INFO


def test_setup_logging():
    setup_logging(Config())
    assert logging.getLogger("numexpr").level == logging.WARNING


# ---------------------------------------------------------------------------
# PipelineConfig
# ---------------------------------------------------------------------------


def test_pipeline(event_log):
    cfg = Config(overrides={"event_log": str(event_log), "fixed_k": 3}).pipeline()
    assert cfg.format == "events"
    assert cfg.event_log == event_log
    assert cfg.k_fixed == 3


def test_fixed_k_defaults_per_format(event_log, tmp_path):
    windows = tmp_path / "windows.csv"
    windows.write_text("ego,alter,n1,n2,n3,n4\n")
    assert PipelineConfig(format="events", event_log=event_log).k_fixed == 5
    assert PipelineConfig(format="windowed", window_graph=windows).k_fixed == 4


def test_pipeline_requires_input():
    with pytest.raises(ConfigError, match="event_log is required"):
        Config().pipeline()


def test_pipeline_input_must_exist(tmp_path):
    with pytest.raises(ConfigError, match="file not found"):
        Config(overrides={"event_log": str(tmp_path / "gone.csv")}).pipeline()


def test_pipeline_rejects_unknown_format(event_log):
    with pytest.raises(ConfigError, match="format"):
        Config(overrides={"format": "xml", "event_log": str(event_log)}).pipeline()


def test_pipeline_rejects_zero_threads(event_log):
    with pytest.raises(ConfigError, match="threads"):
        Config(overrides={"event_log": str(event_log), "threads": 0}).pipeline()


def test_pipeline_loads_calibration(event_log, tmp_path):
    calibration = tmp_path / "calibration.txt"
    calibration.write_text("a4=0.5\nm1=0.2\n")
    cfg = Config(overrides={"event_log": str(event_log), "calibration": str(calibration)}).pipeline()
    assert cfg.calibration.a[4] == 0.5
    assert cfg.calibration.m[1] == 0.2


def test_pipeline_bad_calibration_file(event_log, tmp_path):
    calibration = tmp_path / "calibration.txt"
    calibration.write_text("b1=3\n")
    with pytest.raises((ConfigError, ParseError)):
        Config(overrides={"event_log": str(event_log), "calibration": str(calibration)}).pipeline()


def test_clustering_options(monkeypatch, event_log):
    monkeypatch.setenv("EGOLAYERS_CLUSTER_SCALE", "LOG")
    monkeypatch.setenv("EGOLAYERS_AIC_MODEL", "normal")
    cfg = Config(overrides={"event_log": str(event_log)}).pipeline()
    assert cfg.cluster_scale == "log"
    assert cfg.aic_model == "normal"


def test_clustering_option_defaults(event_log):
    cfg = Config(overrides={"event_log": str(event_log)}).pipeline()
    assert cfg.cluster_scale == "sqrt"
    assert cfg.aic_model == "lognormal"


def test_pipeline_rejects_unknown_clustering_options(event_log):
    with pytest.raises(ConfigError, match="cluster_scale"):
        PipelineConfig(format="events", event_log=event_log, cluster_scale="cube")
    with pytest.raises(ConfigError, match="aic_model"):
        Config(overrides={"event_log": str(event_log), "aic_model": "cauchy"}).pipeline()
