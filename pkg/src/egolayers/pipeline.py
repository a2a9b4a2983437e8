"""Batch pipeline: ingest, layer, diffuse and write the report bundle.

Every report is a CSV with a header row; scalar results go to ``summary.json``.
Apart from the ``timings`` entry of the summary, the bundle depends only on
the inputs and the configuration, never on the worker count.
"""

import json
import logging
import math
import sys
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from egolayers import __version__
from egolayers.analysis import diffusion, layering
from egolayers.config import PipelineConfig
from egolayers.data import ingest
from egolayers.data.writers import write_table
from egolayers.errors import EgoLayersError, InsufficientDataError, NoEligibleEgosError
from egolayers.model import EgoNetwork, validate

logger = logging.getLogger(__name__)

COMMANDS = ("ingest", "layers", "diffusion", "all")
ERROR_FILE = "error.json"
SUMMARY_FILE = "summary.json"


@dataclass
class RunReport:
    """Files written by a run and the summary that went to ``summary.json``."""

    outputs: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _clean(value):
    """JSON-safe copy: NaN and infinities become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def _estimate(e) -> dict:
    return {"mean": e.mean, "ci95": e.ci95, "n": e.n}


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, stage: str, fn: Callable, *args, **kwargs):
        start = time.perf_counter()
        result = fn(*args, **kwargs)
        self.timings[stage] = round(time.perf_counter() - start, 6)
        logger.info(f"Stage '{stage}' finished in {self.timings[stage]:.3f}s")
        return result


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def load_networks(cfg: PipelineConfig, summary: dict) -> list[EgoNetwork]:
    """Parse the configured inputs into ego networks sorted by ego id."""
    accounts = ingest.parse_accounts(cfg.accounts) if cfg.accounts else None
    if cfg.format == "windowed":
        social = ingest.parse_social_graph(cfg.social_graph) if cfg.social_graph else None
        graph = ingest.parse_window_graph(cfg.window_graph, cfg.windows, social=social)
        nets, used = ingest.build_window_networks(
            graph,
            cfg.calibration,
            accounts=accounts,
            rule=cfg.alter_rule,
            fit_m=cfg.calibrate_m,
        )
        summary["links"] = len(graph.links)
        summary["discarded_links"] = graph.discarded
        summary["discarded_share"] = graph.discarded_share
        summary["calibration"] = {
            "a": {f"a{k}": v for k, v in sorted(used.a.items())},
            "m": {f"m{k}": v for k, v in sorted(used.m.items())},
            "floor": used.zero_count_floor,
        }
    else:
        events = ingest.parse_event_log(cfg.event_log, accounts=accounts)
        nets = ingest.build_event_networks(events, accounts, cfg.alter_rule)
    summary["egos_parsed"] = len(nets)
    return drop_invalid(nets, summary)


def drop_invalid(nets: list[EgoNetwork], summary: dict) -> list[EgoNetwork]:
    """Keep the networks that pass ``validate``; the others are logged and counted."""
    kept = []
    for net in nets:
        violations = validate(net)
        if violations:
            shown = "; ".join(str(v) for v in violations[:3])
            logger.warning(f"Dropping ego {net.ego} ({len(violations)} violation(s)): {shown}")
            continue
        kept.append(net)
    summary["invalid_egos"] = len(nets) - len(kept)
    return kept


def write_egos(nets: list[EgoNetwork], eligible: set, out: Path) -> Path:
    rows = [
        (net.ego, net.ego_lifespan, net.size, net.total_interactions, net.ego in eligible)
        for net in nets
    ]
    return write_table(
        rows,
        ("ego", "ego_lifespan", "active_ties", "total_interactions", "eligible"),
        out / "egos.csv",
        int_columns=("ego", "active_ties", "total_interactions"),
    )


def layering_reports(cfg: PipelineConfig, nets: list[EgoNetwork], out: Path, summary: dict) -> list[Path]:
    k_fixed = cfg.k_fixed
    result = layering.population_summary(
        nets,
        k_fixed,
        k_max=cfg.k_max,
        threads=cfg.threads,
        scale=cfg.cluster_scale,
        model=cfg.aic_model,
    )
    outputs = [
        write_table(
            [(k, d) for k, d in result.kstar_density.items()],
            ("k", "density"),
            out / "kstar_density.csv",
            int_columns=("k",),
        ),
        write_table(
            [(r.label, r.count, r.share, r.size.mean, r.size.ci95) for r in result.kstar_table],
            ("kstar", "count", "share", "mean_size", "ci95_size"),
            out / "kstar_table.csv",
        ),
    ]

    rows = []
    for row in result.circles:
        factor = row.scaling_factor
        rows.append(
            (
                row.circle,
                row.min_freq.mean,
                row.size.mean,
                factor.mean if factor else None,
                row.min_freq.ci95,
                row.size.ci95,
                factor.ci95 if factor else None,
            )
        )
    outputs.append(
        write_table(
            rows,
            (
                "circle",
                "min_freq",
                "mean_size",
                "scaling_factor",
                "ci95_min_freq",
                "ci95_mean_size",
                "ci95_scaling_factor",
            ),
            out / "circles.csv",
            int_columns=("circle",),
        )
    )

    reference = layering.OFFLINE_ACTIVE_NETWORK_SIZE if cfg.format == "windowed" else None
    mapping = layering.map_to_offline(
        [r.size.mean for r in result.circles],
        [r.min_freq.mean for r in result.circles],
        reference_size=reference,
    )
    columns = ("circle", "name", "min_freq", "size", "rescaled_size", "offline_size", "offline_min_freq")
    outputs.append(
        write_table(
            [tuple(r[c] for c in columns) for r in mapping.rows()],
            columns,
            out / "mapping.csv",
            int_columns=("circle",),
        )
    )

    frequencies = [layering.clustering_input(n)[0] for n in nets if n.size > 0]
    try:
        points = layering.aggregate_ccdf(np.concatenate(frequencies) if frequencies else [])
    except InsufficientDataError:
        points = []
    outputs.append(write_table(points, ("x", "ccdf"), out / "ccdf.csv"))

    summary["layering"] = {
        "egos": len(result.egos),
        "skipped": result.skipped,
        "layered_egos": result.layered_egos,
        "k_fixed": k_fixed,
        "k_max": cfg.k_max,
        "cluster_scale": cfg.cluster_scale,
        "aic_model": cfg.aic_model,
        "mapping": mapping.reason or "mapped",
        "rescale_factor": mapping.rescale_factor,
    }
    return outputs


def diffusion_reports(cfg: PipelineConfig, nets: list[EgoNetwork], out: Path, summary: dict) -> list[Path]:
    ring_columns = ("ring", "class", "n", "r", "beta", "alpha")
    volume_columns = ("ring", "mean_retweets_per_link", "mean_retweets_per_ego")
    class_volume_columns = ("ring", "class", "mean_retweets_per_link", "mean_retweets_per_ego")
    if cfg.format == "windowed":
        logger.info("Windowed input carries no retweets; diffusion reports are empty")
        summary["diffusion"] = {"skipped": "windowed input has no reply/retweet log"}
        return [
            write_table([], ring_columns, out / "rings_diffusion.csv"),
            write_table([], volume_columns, out / "ring_volumes.csv"),
            write_table([], class_volume_columns, out / "ring_volumes_by_class.csv"),
        ]

    options = {"threads": cfg.threads, "use_tie_rings": cfg.tie_rings, "scale": cfg.cluster_scale}
    report = diffusion.ring_diffusion_report(nets, cfg.rings, **options)
    rows = []
    for row in report.rows:
        fit = row.fit
        if fit is None:
            rows.append((row.ring, row.alter_class, row.n, None, None, None))
        else:
            rows.append((row.ring, row.alter_class, row.n, fit.r, fit.beta, fit.alpha))
    outputs = [write_table(rows, ring_columns, out / "rings_diffusion.csv", int_columns=("n",))]

    volumes = diffusion.ring_volume_report(nets, cfg.rings, **options)
    outputs.append(
        write_table(
            [(f"R{v.ring}", v.mean_retweets_per_link, v.mean_retweets_per_ego) for v in volumes.by_class("all")],
            volume_columns,
            out / "ring_volumes.csv",
        )
    )
    outputs.append(
        write_table(
            [(f"R{v.ring}", v.alter_class, v.mean_retweets_per_link, v.mean_retweets_per_ego) for v in volumes.rows],
            class_volume_columns,
            out / "ring_volumes_by_class.csv",
        )
    )

    try:
        activity = diffusion.activity_correlations(nets)
        correlations = {
            "r_activity_tweets": activity.r_activity_tweets,
            "r_log": activity.r_log,
            "r_activity_retweets_log": activity.r_activity_retweets_log,
            "r_popularity": activity.r_popularity,
        }
    except InsufficientDataError as e:
        logger.warning(f"Activity correlations skipped: {e}")
        correlations = None
    per_ego = diffusion.per_ego_fit_average(nets, threads=cfg.threads)
    summary["diffusion"] = {
        "egos": report.egos,
        "excluded": report.excluded,
        "ring_assigned_egos": volumes.egos,
        "rings": cfg.rings,
        "activity_correlations": correlations,
        "per_ego_fit": {
            "egos": per_ego.egos,
            "r": _estimate(per_ego.r),
            "beta": _estimate(per_ego.beta),
            "alpha": _estimate(per_ego.alpha),
        },
    }
    return outputs


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def execute(cfg: PipelineConfig, command: str = "all") -> RunReport:
    """Run the stages of ``command`` and write their reports; raises on failure."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command '{command}'")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / ERROR_FILE).unlink(missing_ok=True)
    timer = _Timer()
    report = RunReport()
    summary = report.summary
    summary.update({"version": __version__, "command": command, "format": cfg.format, "seed": cfg.seed})

    nets = timer.run("ingest", load_networks, cfg, summary)
    eligible = timer.run("eligibility", ingest.select_eligible_egos, nets, cfg.eligibility)
    summary["eligible_egos"] = len(eligible)
    report.outputs.append(write_egos(nets, {n.ego for n in eligible}, out))
    if not eligible:
        raise NoEligibleEgosError()

    if command in ("layers", "all"):
        report.outputs += timer.run("layers", layering_reports, cfg, eligible, out, summary)
    if command in ("diffusion", "all"):
        report.outputs += timer.run("diffusion", diffusion_reports, cfg, eligible, out, summary)

    summary["timings"] = timer.timings
    summary_path = out / SUMMARY_FILE
    summary_path.write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report.outputs.append(summary_path)
    logger.info(f"Wrote {len(report.outputs)} report file(s) to {out}")
    return report


def write_error(error: EgoLayersError, output_dir: Path | None) -> dict:
    """Print the error record on stderr and, when possible, save it as ``error.json``."""
    record = error.to_record()
    text = json.dumps(_clean(record), sort_keys=True)
    print(text, file=sys.stderr)
    if output_dir is not None:
        try:
            output_dir.mkdir(parents=True, exist_ok=True)
            (output_dir / ERROR_FILE).write_text(text + "\n", encoding="utf-8")
        except OSError as e:
            logger.warning(f"Could not write {ERROR_FILE}: {e}")
    return record


def run_pipeline(cfg: PipelineConfig, command: str = "all") -> int:
    """Run the pipeline and return the process exit status."""
    try:
        execute(cfg, command)
    except EgoLayersError as e:
        logger.error(f"Pipeline failed: {e}")
        write_error(e, Path(cfg.output_dir))
        return e.exit_code
    return 0
