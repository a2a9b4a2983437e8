"""Configuration management for egolayers.

Settings are layered, lowest precedence first: built-in defaults, environment
variables prefixed ``EGOLAYERS_`` (a ``.env`` file is loaded into the
environment), a ``key=value`` file passed with ``--config``, and explicit
command-line flags.
"""

import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from egolayers.analysis.layering import AIC_MODELS, CLUSTER_SCALES, DEFAULT_AIC_MODEL, DEFAULT_SCALE
from egolayers.analysis.tie_strength import CalibrationConstants, load_calibration
from egolayers.data.ingest import AlterClassRule, EgoEligibilityRule
from egolayers.errors import ConfigError
from egolayers.model import WindowConfig

load_dotenv()

logger = logging.getLogger(__name__)

ENV_PREFIX = "EGOLAYERS_"
FORMATS = ("windowed", "events")
DEFAULT_FIXED_K = {"events": 5, "windowed": 4}

KNOWN_KEYS = frozenset(
    {
        "format",
        "window_graph",
        "social_graph",
        "event_log",
        "accounts",
        "calibration",
        "output_dir",
        "w1",
        "w2",
        "w3",
        "w4",
        "min_account_age",
        "min_monthly_interactions",
        "min_reply_ratio",
        "max_follow_ratio",
        "max_mention_ratio",
        "min_tweets",
        "k_max",
        "fixed_k",
        "cluster_scale",
        "aic_model",
        "rings",
        "tie_rings",
        "seed",
        "threads",
        "calibrate_m",
        "egos",
        "layer_spec",
        "diffusion_spec",
        "classified_share",
        "log_level",
    }
)

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one analysis run needs, validated."""

    format: str
    window_graph: Path | None = None
    social_graph: Path | None = None
    event_log: Path | None = None
    accounts: Path | None = None
    output_dir: Path = Path("reports")
    windows: WindowConfig = field(default_factory=WindowConfig)
    calibration: CalibrationConstants = field(default_factory=CalibrationConstants)
    calibrate_m: bool = False
    eligibility: EgoEligibilityRule = field(default_factory=EgoEligibilityRule)
    alter_rule: AlterClassRule = field(default_factory=AlterClassRule)
    k_max: int = 20
    fixed_k: int | None = None
    cluster_scale: str = DEFAULT_SCALE
    aic_model: str = DEFAULT_AIC_MODEL
    rings: int = 5
    tie_rings: bool = False
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}, got '{self.format}'")
        inputs = ("window_graph", "social_graph") if self.format == "windowed" else ("event_log",)
        required = inputs[0]
        if getattr(self, required) is None:
            raise ConfigError(f"{required} is required for {self.format} input")
        for name in (*inputs, "accounts"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name}: file not found: {path}")
        for name in ("k_max", "rings", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.fixed_k is not None and self.fixed_k < 1:
            raise ConfigError(f"fixed_k must be >= 1, got {self.fixed_k}")
        if self.cluster_scale not in CLUSTER_SCALES:
            raise ConfigError(f"cluster_scale must be one of {', '.join(CLUSTER_SCALES)}, got '{self.cluster_scale}'")
        if self.aic_model not in AIC_MODELS:
            raise ConfigError(f"aic_model must be one of {', '.join(AIC_MODELS)}, got '{self.aic_model}'")

    @property
    def k_fixed(self) -> int:
        """Fixed circle count, defaulting per input format."""
        return self.fixed_k if self.fixed_k is not None else DEFAULT_FIXED_K[self.format]


class Config:
    """Settings resolved from defaults, environment, config file and overrides."""

    def __init__(self, config_file: str | Path | None = None, overrides: Mapping[str, object] | None = None):
        """Resolve every setting; ``overrides`` holds explicit CLI values (None means unset)."""
        self._file: dict[str, str] = {}
        if config_file is not None:
            path = Path(config_file)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            self._file = {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
            unknown = sorted(set(self._file) - KNOWN_KEYS)
            if unknown:
                raise ConfigError(f"{path}: unknown config key(s): {', '.join(unknown)}")
        self._overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

        # =====================================================================
        # INPUT / OUTPUT
        # =====================================================================
        self.window_graph = self._get_path("window_graph")
        self.social_graph = self._get_path("social_graph")
        self.event_log = self._get_path("event_log")
        self.accounts = self._get_path("accounts")
        self.calibration_file = self._get_path("calibration")
        self.output_dir = self._get_path("output_dir") or Path("reports")

        # Format falls back to whichever input is configured.
        self.format = self._get("format")
        if self.format is None:
            self.format = "windowed" if self.window_graph and not self.event_log else "events"
        self.format = str(self.format).lower()

        # =====================================================================
        # WINDOWS
        # =====================================================================
        base = WindowConfig()
        self.windows = WindowConfig(
            w1=self._get_float("w1", base.w1),
            w2=self._get_float("w2", base.w2),
            w3=self._get_float("w3", base.w3),
            w4=self._get_float("w4", base.w4),
        )

        # =====================================================================
        # FILTERS
        # =====================================================================
        self.eligibility = EgoEligibilityRule(
            min_account_age=self._get_float("min_account_age", 6.0),
            min_monthly_interactions=self._get_float("min_monthly_interactions", 10.0),
        )
        self.alter_rule = AlterClassRule(
            min_reply_ratio=self._get_float("min_reply_ratio", 0.05),
            max_follow_ratio=self._get_float("max_follow_ratio", 10.0),
            max_mention_ratio=self._get_float("max_mention_ratio", None),
            min_tweets=self._get_int("min_tweets", None),
        )

        # =====================================================================
        # ANALYSIS
        # =====================================================================
        self.k_max = self._get_int("k_max", 20)
        self.fixed_k = self._get_int("fixed_k", None)
        self.cluster_scale = str(self._get("cluster_scale") or DEFAULT_SCALE).lower()
        self.aic_model = str(self._get("aic_model") or DEFAULT_AIC_MODEL).lower()
        self.rings = self._get_int("rings", 5)
        self.tie_rings = self._get_bool("tie_rings", False)
        self.calibrate_m = self._get_bool("calibrate_m", False)
        self.seed = self._get_int("seed", 0)
        self.threads = self._get_int("threads", 1)

        # =====================================================================
        # SYNTHETIC DATA
        # =====================================================================
        self.egos = self._get_int("egos", 50)
        self.layer_spec = self._get_path("layer_spec")
        self.diffusion_spec = self._get_path("diffusion_spec")
        self.classified_share = self._get_float("classified_share", 0.3)

        # =====================================================================
        # LOGGING
        # =====================================================================
        log_level = str(self._get("log_level") or "INFO").upper()
        if log_level == "WARN":
            log_level = "WARNING"
        self.log_level = getattr(logging, log_level, logging.INFO)

        logger.debug("Configuration loaded successfully")

    def _get(self, key: str) -> object | None:
        """Highest-precedence value of a setting, or None when unset everywhere."""
        if key in self._overrides:
            return self._overrides[key]
        if self._file.get(key, "") != "":
            return self._file[key]
        value = os.getenv(f"{ENV_PREFIX}{key.upper()}")
        return value if value else None

    def _get_path(self, key: str) -> Path | None:
        value = self._get(key)
        return Path(value) if value is not None else None

    def _get_int(self, key: str, default: int | None) -> int | None:
        value = self._get(key)
        if value is None:
            return default
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {value!r}") from None

    def _get_float(self, key: str, default: float | None) -> float | None:
        value = self._get(key)
        if value is None:
            return default
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {value!r}") from None

    def _get_bool(self, key: str, default: bool) -> bool:
        value = self._get(key)
        if value is None:
            return default
        if isinstance(value, bool):
            return value
        if str(value).lower() in _TRUE:
            return True
        if str(value).lower() in _FALSE:
            return False
        raise ConfigError(f"{key} must be true or false, got {value!r}")

    def pipeline(self) -> PipelineConfig:
        """Validated analysis settings; loads the calibration file if one is configured."""
        calibration = load_calibration(self.calibration_file) if self.calibration_file else CalibrationConstants()
        return PipelineConfig(
            format=self.format,
            window_graph=self.window_graph,
            social_graph=self.social_graph,
            event_log=self.event_log,
            accounts=self.accounts,
            output_dir=self.output_dir,
            windows=self.windows,
            calibration=calibration,
            calibrate_m=self.calibrate_m,
            eligibility=self.eligibility,
            alter_rule=self.alter_rule,
            k_max=self.k_max,
            fixed_k=self.fixed_k,
            cluster_scale=self.cluster_scale,
            aic_model=self.aic_model,
            rings=self.rings,
            tie_rings=self.tie_rings,
            seed=self.seed,
            threads=self.threads,
        )


def setup_logging(config: Config):
    """Configure logging for the application."""
    logging.basicConfig(
        level=config.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    # Reduce noise from third-party libraries
    logging.getLogger("numexpr").setLevel(logging.WARNING)
