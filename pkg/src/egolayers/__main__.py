"""
Entry point for egolayers.
Can be run as: python -m egolayers
"""

import argparse
import logging
import sys

from egolayers import __version__
from egolayers.analysis.layering import AIC_MODELS, CLUSTER_SCALES, DEFAULT_AIC_MODEL, DEFAULT_SCALE
from egolayers.config import Config, setup_logging
from egolayers.errors import EgoLayersError
from egolayers.pipeline import run_pipeline, write_error
from egolayers.synth.generator import (
    DiffusionSpec,
    LayerSpec,
    generate_population,
    load_diffusion_spec,
    load_layer_spec,
    write_population,
)

logger = logging.getLogger(__name__)

# argparse destination -> configuration key
_OVERRIDES = {
    "format": "format",
    "windows": "window_graph",
    "social": "social_graph",
    "events": "event_log",
    "accounts": "accounts",
    "calibration": "calibration",
    "output": "output_dir",
    "k_max": "k_max",
    "fixed_k": "fixed_k",
    "cluster_scale": "cluster_scale",
    "aic_model": "aic_model",
    "rings": "rings",
    "tie_rings": "tie_rings",
    "seed": "seed",
    "threads": "threads",
    "calibrate_m": "calibrate_m",
    "egos": "egos",
    "layer_spec": "layer_spec",
    "diffusion_spec": "diffusion_spec",
    "log_level": "log_level",
}


def _load_config(args) -> Config:
    overrides = {key: getattr(args, dest, None) for dest, key in _OVERRIDES.items()}
    config = Config(config_file=args.config, overrides=overrides)
    setup_logging(config)
    return config


def cmd_analyse(args) -> int:
    """Run the ingest, layers, diffusion or all stages."""
    try:
        config = _load_config(args)
        cfg = config.pipeline()
    except EgoLayersError as e:
        write_error(e, None)
        return e.exit_code
    logger.info(f"egolayers v{__version__}: running '{args.command}' on {cfg.format} input")
    return run_pipeline(cfg, args.command)


def cmd_synth(args) -> int:
    """Generate a synthetic population in one of the ingest formats."""
    try:
        config = _load_config(args)
        layer = load_layer_spec(config.layer_spec) if config.layer_spec else LayerSpec()
        diffusion = load_diffusion_spec(config.diffusion_spec) if config.diffusion_spec else DiffusionSpec()
        nets = generate_population(
            config.egos,
            layer,
            diffusion,
            config.seed,
            classified_share=config.classified_share,
            threads=config.threads,
        )
        paths = write_population(nets, config.output_dir, config.format, config.seed, cfg=config.windows)
    except EgoLayersError as e:
        logger.error(f"Synthetic generation failed: {e}")
        write_error(e, None)
        return e.exit_code
    for path in paths:
        logger.info(f"Wrote {path}")
    return 0


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--format", choices=("windowed", "events"), help="input format")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("-o", "--output", help="output directory")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")


def _add_inputs(parser: argparse.ArgumentParser):
    parser.add_argument("--windows", help="window graph CSV (ego,alter,n1,n2,n3,n4)")
    parser.add_argument("--social", help="social graph CSV (ego,alter)")
    parser.add_argument("--events", help="event log CSV")
    parser.add_argument("--accounts", help="account statistics CSV")
    parser.add_argument("--calibration", help="calibration constants file")
    parser.add_argument("--k-max", dest="k_max", type=int, help="largest cluster count tried (default 20)")
    parser.add_argument("--fixed-k", dest="fixed_k", type=int, help="circle count for the circle tables")
    parser.add_argument(
        "--cluster-scale",
        dest="cluster_scale",
        choices=CLUSTER_SCALES,
        help=f"scale k-means runs on (default {DEFAULT_SCALE})",
    )
    parser.add_argument(
        "--aic-model",
        dest="aic_model",
        choices=AIC_MODELS,
        help=f"likelihood behind the choice of k (default {DEFAULT_AIC_MODEL})",
    )
    parser.add_argument("--rings", type=int, help="rings for the diffusion analysis (default 5)")
    parser.add_argument(
        "--tie-rings",
        dest="tie_rings",
        action="store_true",
        default=None,
        help="use ring labels carried by the ties instead of clustering",
    )
    parser.add_argument(
        "--calibrate-m",
        dest="calibrate_m",
        action="store_true",
        default=None,
        help="fit the C1/C2 frequency corrections on the data",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egolayers",
        description="Layered ego-network structure and one-hop diffusion analysis.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    for name, help_text in (
        ("ingest", "Parse inputs and apply the eligibility filters"),
        ("layers", "Layer discovery and circle reports"),
        ("diffusion", "Per-ring diffusion reports"),
        ("all", "Run every analysis stage"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        _add_common(sub)
        _add_inputs(sub)
        sub.set_defaults(handler=cmd_analyse)

    synth = subparsers.add_parser("synth", help="Generate a synthetic population")
    _add_common(synth)
    synth.add_argument("--egos", type=int, help="number of egos (default 50)")
    synth.add_argument("--layer-spec", dest="layer_spec", help="key=value layer spec file")
    synth.add_argument("--diffusion-spec", dest="diffusion_spec", help="key=value diffusion spec file")
    synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: list[str] | None = None):
    """CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        sys.exit(1)

    try:
        status = args.handler(args)
    except Exception:
        logger.exception("Unexpected error")
        status = 1
    sys.exit(status)


if __name__ == "__main__":
    main()
