"""Synthetic ego networks with planted layers and planted diffusion laws.

Every ego draws from its own PCG64 stream seeded with (seed, ego id, stage),
so a population is identical whether it is generated serially or on many
threads, and identical on every platform numpy supports.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from dotenv import dotenv_values
from scipy.optimize import brentq
from scipy.stats import norm

from egolayers.data import writers
from egolayers.errors import SpecError
from egolayers.model import AccountId, AlterClass, EgoNetwork, TieRecord, WindowConfig, WindowCounts
from egolayers.parallel import map_ordered

logger = logging.getLogger(__name__)

# Planted circle sizes C1..C5 and per-ring mean contact frequencies.
CIRCLE_SIZES = (1.66, 5.06, 12.87, 32.66, 97.47)
BAND_MEANS = (20.55, 8.91, 3.98, 1.36, 0.18)
RING_SIZES = tuple(round(b - a, 2) for a, b in zip((0.0, *CIRCLE_SIZES), CIRCLE_SIZES, strict=False))

DIFFUSION_ALPHA = (0.03, 0.02, 0.03, 0.06, 0.09)
DIFFUSION_BETA = (0.74, 0.76, 0.80, 0.85, 0.99)
OTHER_ALPHA = (-0.01, 0.02, 0.02, 0.02, 0.03)
OTHER_BETA = (0.58, 0.59, 0.64, 0.72, 0.93)

CLASSIFIED_SHARE = 0.3
SOCIALLY_RELEVANT_SHARE = 0.278

# Stage tags mixed into the per-ego seed.
_NETWORK, _DIFFUSION, _TOTALS, _CLASSES, _EVENTS, _WINDOWS = range(6)


def ego_rng(seed: int, ego: int, stage: int = _NETWORK) -> np.random.Generator:
    """Independent PCG64 stream for one ego and generation stage."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(ego), stage]))


def _alter_id(ego: int, j: int) -> AccountId:
    return AccountId((int(ego) << 24) + j + 1)


def _follower_id(ego: int, j: int) -> AccountId:
    return AccountId((int(ego) << 24) + (1 << 23) + j + 1)


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """Per-ring expected size, mean contact frequency and log-normal dispersion."""

    sizes: tuple[float, ...] = RING_SIZES
    frequencies: tuple[float, ...] = BAND_MEANS
    sigmas: tuple[float, ...] = (0.3,) * 5
    ego_lifespan: tuple[float, float] = (12.0, 43.0)
    min_link_lifespan: float = 6.0

    def __post_init__(self):
        if not (len(self.sizes) == len(self.frequencies) == len(self.sigmas)) or not self.sizes:
            raise SpecError("sizes, frequencies and sigmas must have one entry per ring")
        if any(not s > 0 for s in self.sizes):
            raise SpecError(f"ring sizes must be positive, got {self.sizes}")
        if any(not f > 0 for f in self.frequencies):
            raise SpecError(f"band means must be positive, got {self.frequencies}")
        if any(b >= a for a, b in zip(self.frequencies, self.frequencies[1:], strict=False)):
            raise SpecError(f"band means must be strictly decreasing, got {self.frequencies}")
        if any(s < 0 for s in self.sigmas):
            raise SpecError(f"dispersions must be >= 0, got {self.sigmas}")
        lo, hi = self.ego_lifespan
        if not 0 < lo <= hi:
            raise SpecError(f"ego lifespan range must satisfy 0 < min <= max, got {self.ego_lifespan}")
        if not self.min_link_lifespan > 0:
            raise SpecError(f"minimum link lifespan must be positive, got {self.min_link_lifespan}")

    @property
    def rings(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class DiffusionSpec:
    """Planted law fret = alpha + beta * frep + Normal(0, sigma) per ring.

    ``other_alpha``/``other_beta`` give a second law for alters of class other;
    when unset every alter follows the first one. ``retweet_scale`` is the
    number of retweets per unit of normalised retweet frequency and month.
    """

    alpha: tuple[float, ...] = DIFFUSION_ALPHA
    beta: tuple[float, ...] = DIFFUSION_BETA
    sigma: float = 0.05
    other_alpha: tuple[float, ...] | None = None
    other_beta: tuple[float, ...] | None = None
    retweet_scale: float = 12.0
    post_share: float = 0.5
    popularity: float = 0.05

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise SpecError("alpha and beta must have one entry per ring")
        if (self.other_alpha is None) != (self.other_beta is None):
            raise SpecError("other_alpha and other_beta must be given together")
        if self.other_alpha is not None and not (len(self.other_alpha) == len(self.other_beta) == len(self.alpha)):
            raise SpecError("the other-class law must have one entry per ring")
        if self.sigma < 0:
            raise SpecError(f"sigma must be >= 0, got {self.sigma}")
        if not self.retweet_scale > 0:
            raise SpecError(f"retweet_scale must be positive, got {self.retweet_scale}")
        if self.post_share < 0 or self.popularity < 0:
            raise SpecError("post_share and popularity must be >= 0")

    def law(self, ring: int, alter_class: AlterClass) -> tuple[float, float]:
        i = ring - 1
        if alter_class == AlterClass.OTHER and self.other_alpha is not None:
            return self.other_alpha[i], self.other_beta[i]
        return self.alpha[i], self.beta[i]


def _read_spec_file(path: str | Path) -> dict[str, float]:
    path = Path(path)
    if not path.is_file():
        raise SpecError(f"spec file not found: {path}")
    values = {}
    for key, raw in dotenv_values(path).items():
        try:
            values[key] = float(raw)
        except (TypeError, ValueError):
            raise SpecError(f"{path}: {key} is not a number: {raw!r}") from None
    return values


def _ring_count(values: dict[str, float], prefix: str, default: int) -> int:
    keys = [k[len(prefix) :] for k in values if k.startswith(f"{prefix}ring")]
    try:
        return max([default] + [int(k.split(".")[0][4:]) for k in keys])
    except ValueError:
        raise SpecError(f"malformed ring key among {sorted(keys)}") from None


def _per_ring(
    values: dict[str, float], prefix: str, name: str, default: Sequence[float], rings: int
) -> tuple[float, ...]:
    out = []
    for i in range(1, rings + 1):
        key = f"{prefix}ring{i}.{name}"
        if key in values:
            out.append(values.pop(key))
        elif i <= len(default):
            out.append(default[i - 1])
        else:
            raise SpecError(f"missing {key}")
    return tuple(out)


def load_layer_spec(path: str | Path) -> LayerSpec:
    """Read ``ringN.size``/``ringN.freq``/``ringN.sigma`` and lifespan keys; unset keys keep defaults."""
    values = _read_spec_file(path)
    base = LayerSpec()
    rings = _ring_count(values, "", base.rings)
    try:
        spec = LayerSpec(
            sizes=_per_ring(values, "", "size", base.sizes, rings),
            frequencies=_per_ring(values, "", "freq", base.frequencies, rings),
            sigmas=_per_ring(values, "", "sigma", base.sigmas, rings),
            ego_lifespan=(
                values.pop("ego_lifespan.min", base.ego_lifespan[0]),
                values.pop("ego_lifespan.max", base.ego_lifespan[1]),
            ),
            min_link_lifespan=values.pop("link_lifespan.min", base.min_link_lifespan),
        )
    except ValueError as e:
        raise SpecError(f"{path}: {e}") from None
    if values:
        raise SpecError(f"{path}: unknown layer spec key(s): {', '.join(sorted(values))}")
    logger.info(f"Loaded layer spec with {spec.rings} rings from {path}")
    return spec


def load_diffusion_spec(path: str | Path) -> DiffusionSpec:
    """Read ``ringN.alpha``/``ringN.beta``, optional ``other.ringN.*`` and scalar keys."""
    values = _read_spec_file(path)
    base = DiffusionSpec()
    has_other = any(k.startswith("other.") for k in values)
    rings = max(_ring_count(values, "", len(base.alpha)), _ring_count(values, "other.", len(base.alpha)))
    try:
        spec = DiffusionSpec(
            alpha=_per_ring(values, "", "alpha", base.alpha, rings),
            beta=_per_ring(values, "", "beta", base.beta, rings),
            other_alpha=_per_ring(values, "other.", "alpha", OTHER_ALPHA, rings) if has_other else None,
            other_beta=_per_ring(values, "other.", "beta", OTHER_BETA, rings) if has_other else None,
            sigma=values.pop("sigma", base.sigma),
            retweet_scale=values.pop("retweet_scale", base.retweet_scale),
            post_share=values.pop("post_share", base.post_share),
            popularity=values.pop("popularity", base.popularity),
        )
    except ValueError as e:
        raise SpecError(f"{path}: {e}") from None
    if values:
        raise SpecError(f"{path}: unknown diffusion spec key(s): {', '.join(sorted(values))}")
    logger.info(f"Loaded diffusion spec from {path}")
    return spec


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def band_log_limits(frequencies: Sequence[float]) -> list[tuple[float, float]]:
    """Log-offsets (below, above) each band mean at which its frequencies are cut.

    A band reaches half the log gap to each neighbouring mean; the outermost
    bands mirror their single gap. A lone band is not cut.
    """
    logs = np.log(np.asarray(frequencies, dtype=float))
    gaps = (logs[:-1] - logs[1:]) / 2
    limits = []
    for i in range(logs.size):
        above = gaps[i - 1] if i > 0 else None
        below = gaps[i] if i < gaps.size else None
        if above is None and below is None:
            limits.append((-math.inf, math.inf))
            continue
        above = below if above is None else above
        below = above if below is None else below
        limits.append((-float(below), float(above)))
    return limits


def band_frequencies(
    rng: np.random.Generator, mean: float, sigma: float, limits: tuple[float, float], count: int
) -> np.ndarray:
    """Truncated log-normal draws mean * exp(sigma * Z) / E[exp(sigma * Z)], Z cut at ``limits / sigma``.

    The divisor is the exact mean of the truncated factor, so the band keeps its mean.
    """
    if sigma == 0:
        return np.full(count, float(mean))
    a, b = limits[0] / sigma, limits[1] / sigma
    lo, hi = norm.cdf(a), norm.cdf(b)
    z = norm.ppf(lo + rng.random(count) * (hi - lo)) if hi - lo < 1 else rng.standard_normal(count)
    factor = math.exp(sigma * sigma / 2) * (norm.cdf(b - sigma) - norm.cdf(a - sigma)) / (hi - lo)
    return mean * np.exp(sigma * z) / factor


def generate_ego_network(spec: LayerSpec, seed: int, *, ego: int = 1) -> EgoNetwork:
    """Star network with Poisson ring sizes (at least one alter per ring) and log-normal frequencies.

    Each band is log-normal around its mean, cut at half the log gap to the
    neighbouring bands and rescaled so the band keeps its mean. Every tie
    records the ring it was planted in.
    """
    rng = ego_rng(seed, ego, _NETWORK)
    lo, hi = spec.ego_lifespan
    ego_lifespan = float(rng.uniform(lo, hi)) if hi > lo else lo
    limits = band_log_limits(spec.frequencies)
    ties = []
    j = 0
    for ring, (size, mean, sigma) in enumerate(zip(spec.sizes, spec.frequencies, spec.sigmas, strict=True), 1):
        count = max(1, int(rng.poisson(size)))
        frequencies = band_frequencies(rng, mean, sigma, limits[ring - 1], count)
        lifespans = rng.uniform(min(spec.min_link_lifespan, ego_lifespan), ego_lifespan, count)
        for f, lifespan in zip(frequencies, lifespans, strict=True):
            ties.append(
                TieRecord(
                    ego=AccountId(ego),
                    alter=_alter_id(ego, j),
                    frequency=float(f),
                    link_lifespan=float(lifespan),
                    ring=ring,
                )
            )
            j += 1
    return EgoNetwork.assemble(AccountId(ego), ego_lifespan, ties)


# ---------------------------------------------------------------------------
# Diffusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantedDiffusion:
    """Latent quantities of one ego's planted diffusion, before retweets are rounded."""

    ego_lifespan: float
    replies: np.ndarray
    frep: np.ndarray
    fret: np.ndarray
    retweet_lifespans: np.ndarray = field(repr=False)


def plant_diffusion(net: EgoNetwork, spec: DiffusionSpec, seed: int) -> PlantedDiffusion:
    """Draw replies and the planted fret of every tie.

    The normalisation of fret by the ego's totals ties the ego lifespan to the
    drawn values: retweets summed over the ties must add up to the total, which
    holds when sum(fret * lret) equals the ego lifespan. The lifespan is solved
    for; if the solution is shorter than the longest link it is floored there and
    the retweet lifespans are stretched towards it instead, never past it, so no
    retweet predates the ego's account.
    """
    if any(t.ring is None for t in net.ties):
        raise SpecError(f"ego {net.ego}: diffusion needs a ring on every tie")
    rng = ego_rng(seed, net.ego, _DIFFUSION)
    lifespans = np.array([t.link_lifespan for t in net.ties], dtype=float)
    frequencies = np.array([t.frequency for t in net.ties], dtype=float)
    replies = np.floor(frequencies * lifespans + 0.5).astype(np.int64)
    laws = np.array([spec.law(t.ring, t.alter_class) for t in net.ties], dtype=float).reshape(-1, 2)
    noise = spec.sigma * rng.standard_normal(len(net.ties))
    total_replies = int(replies.sum())
    if total_replies == 0 or not net.ties:
        logger.debug(f"Ego {net.ego}: no replies drawn, nothing to diffuse")
        zeros = np.zeros(len(net.ties))
        return PlantedDiffusion(net.ego_lifespan, replies, zeros, zeros, lifespans)

    rate = replies / lifespans / total_replies

    def fret_at(lt: float) -> np.ndarray:
        return np.maximum(0.0, laws[:, 0] + laws[:, 1] * rate * lt + noise)

    def excess(lt: float) -> float:
        return math.fsum(fret_at(lt) * lifespans) - lt

    def shortfall(lt: float) -> float:
        return math.fsum(fret_at(lt)) - 1

    def root(f, lo: float) -> float | None:
        hi = 2 * lo
        for _ in range(200):
            if f(hi) >= 0:
                return brentq(f, lo, hi, xtol=1e-12)
            hi *= 2
        return None

    floor = float(lifespans.max())
    if excess(floor) > 0:
        lt = root(lambda x: -excess(x), floor)
        if lt is None:
            raise SpecError(f"ego {net.ego}: planted law admits no consistent ego lifespan")
    elif shortfall(floor) < 0:
        # retweet lifespans cannot exceed the ego's, so fret must sum to at least 1
        lt = root(shortfall, floor) or floor
    else:
        lt = floor

    fret = fret_at(lt)
    spread = math.fsum(fret * lifespans)
    reach = lt * math.fsum(fret) - spread
    # stretch every retweet lifespan towards the ego lifespan by the same share
    share = min(1.0, max(0.0, (lt - spread) / reach)) if reach > 0 else 0.0
    retweet_lifespans = lifespans + share * (lt - lifespans)
    return PlantedDiffusion(lt, replies, rate * lt, fret, retweet_lifespans)


def generate_diffusion(net: EgoNetwork, spec: DiffusionSpec, seed: int) -> EgoNetwork:
    """Fill reply and retweet counters so fret follows the planted per-ring law.

    The ego lifespan is replaced by the value that makes the normalisation
    consistent, and the ego's posting totals are drawn alongside.
    """
    planted = plant_diffusion(net, spec, seed)
    rng = ego_rng(seed, net.ego, _TOTALS)
    retweets = np.floor(planted.fret * planted.retweet_lifespans * spec.retweet_scale + 0.5).astype(np.int64)
    ties = []
    for tie, rep, ret, lret in zip(net.ties, planted.replies, retweets, planted.retweet_lifespans, strict=True):
        ties.append(
            replace(
                tie,
                reply_count=int(rep),
                retweet_count=int(ret),
                retweet_lifespan=float(lret) if ret > 0 else None,
            )
        )
    replies = int(planted.replies.sum())
    posts = int(rng.poisson(spec.post_share * replies))
    tweet_count = replies + len(ties) + posts
    retweets_made = int(retweets.sum())
    popularity = spec.popularity * float(rng.lognormal(0.0, 0.5)) if spec.popularity > 0 else 0.0
    return EgoNetwork.assemble(
        net.ego,
        planted.ego_lifespan,
        ties,
        total_interactions=tweet_count + retweets_made,
        tweet_count=tweet_count,
        retweets_made=retweets_made,
        retweets_received=int(rng.poisson(popularity * tweet_count)),
    )


# ---------------------------------------------------------------------------
# Windowed counts
# ---------------------------------------------------------------------------


def generate_window_counts(true_birth: float, rate: float, cfg: WindowConfig, seed: int) -> WindowCounts:
    """Poisson interactions in every window intersected with (0, true_birth), accumulated outwards."""
    if not 0 < true_birth <= cfg.w4:
        raise SpecError(f"birth must lie in (0, {cfg.w4}], got {true_birth}")
    if rate < 0:
        raise SpecError(f"rate must be >= 0, got {rate}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _WINDOWS]))
    edges = cfg.edges
    counts = []
    total = 0
    for k in range(1, 5):
        length = max(0.0, min(edges[k], true_birth) - edges[k - 1])
        total += int(rng.poisson(rate * length)) if length > 0 else 0
        counts.append(total)
    return WindowCounts(*counts)


# ---------------------------------------------------------------------------
# Populations
# ---------------------------------------------------------------------------


def _assign_classes(net: EgoNetwork, seed: int, classified_share: float) -> tuple[EgoNetwork, EgoNetwork]:
    """True class of every alter, and a copy with the classes of unclassified alters hidden."""
    rng = ego_rng(seed, net.ego, _CLASSES)
    relevant = rng.random(len(net.ties)) < SOCIALLY_RELEVANT_SHARE / CLASSIFIED_SHARE
    classified = rng.random(len(net.ties)) < classified_share
    truth = tuple(
        replace(t, alter_class=AlterClass.SOCIALLY_RELEVANT if r else AlterClass.OTHER)
        for t, r in zip(net.ties, relevant, strict=True)
    )
    return replace(net, ties=truth), replace(
        net,
        ties=tuple(t if c else replace(t, alter_class=AlterClass.UNKNOWN) for t, c in zip(truth, classified, strict=True)),
    )


def generate_population(
    n_egos: int,
    layer: LayerSpec | None = None,
    diffusion: DiffusionSpec | None = None,
    seed: int = 0,
    *,
    classified_share: float = CLASSIFIED_SHARE,
    threads: int = 1,
) -> list[EgoNetwork]:
    """Egos 1..n_egos; with a diffusion spec, counters are planted under the alters' true classes."""
    if n_egos < 0:
        raise SpecError(f"number of egos must be >= 0, got {n_egos}")
    if not 0 <= classified_share <= 1:
        raise SpecError(f"classified share must be in [0, 1], got {classified_share}")
    layer = layer or LayerSpec()

    def build(ego: int) -> EgoNetwork:
        net = generate_ego_network(layer, seed, ego=ego)
        truth, visible = _assign_classes(net, seed, classified_share)
        if diffusion is None:
            return visible
        planted = generate_diffusion(truth, diffusion, seed)
        classes = {t.alter: t.alter_class for t in visible.ties}
        return replace(planted, ties=tuple(replace(t, alter_class=classes[t.alter]) for t in planted.ties))

    nets = map_ordered(build, range(1, n_egos + 1), threads)
    logger.info(f"Generated {len(nets)} synthetic ego network(s), {sum(len(n.ties) for n in nets)} ties")
    return nets


def population_events(net: EgoNetwork, seed: int) -> list[tuple]:
    """Event rows (source, target, kind, months_before_download, original_author) reproducing ``net``."""
    rng = ego_rng(seed, net.ego, _EVENTS)
    rows = []
    for tie in net.ties:
        rows.append((net.ego, tie.alter, "mention", tie.link_lifespan, None))
        for t in rng.uniform(0, tie.link_lifespan, tie.reply_count):
            rows.append((net.ego, tie.alter, "reply", float(t), None))
        if tie.retweet_count > 0:
            lret = tie.effective_retweet_lifespan
            rows.append((net.ego, tie.alter, "retweet", lret, tie.alter))
            for t in rng.uniform(0, lret, tie.retweet_count - 1):
                rows.append((net.ego, tie.alter, "retweet", float(t), tie.alter))
    posts = net.tweet_count - len(net.ties) - net.total_replies
    for t in rng.uniform(0, net.ego_lifespan, max(0, posts)):
        rows.append((net.ego, None, "post", float(t), None))
    for j, t in enumerate(rng.uniform(0, net.ego_lifespan, net.retweets_received)):
        rows.append((_follower_id(net.ego, j), net.ego, "retweet", float(t), net.ego))
    return rows


def population_accounts(net: EgoNetwork) -> list[tuple]:
    """Account rows for the ego and its classified alters; unclassified alters get none."""
    tweets = max(net.tweet_count, 1)
    rows = [
        (
            net.ego,
            net.ego_lifespan,
            net.tweet_count,
            len(net.ties),
            len(net.ties),
            net.total_replies / tweets,
            len(net.ties) / tweets,
        )
    ]
    for tie in net.ties:
        if tie.alter_class == AlterClass.SOCIALLY_RELEVANT:
            rows.append((tie.alter, net.ego_lifespan, 500, 100, 100, 0.184, 0.3))
        elif tie.alter_class == AlterClass.OTHER:
            rows.append((tie.alter, net.ego_lifespan, 5000, 100, 5000, 0.01, 0.05))
    return rows


def population_windows(net: EgoNetwork, cfg: WindowConfig, seed: int) -> list[tuple]:
    """Window-count rows (ego, alter, n1..n4) with the link born at its lifespan."""
    rows = []
    for tie in net.ties:
        link_seed = int(np.random.SeedSequence([int(seed), int(net.ego), int(tie.alter)]).generate_state(1)[0])
        c = generate_window_counts(min(tie.link_lifespan, cfg.w4), tie.frequency, cfg, link_seed)
        rows.append((net.ego, tie.alter, *c.as_tuple()))
    return rows


def write_population(
    nets: Sequence[EgoNetwork],
    out_dir: str | Path,
    fmt: str = "events",
    seed: int = 0,
    *,
    cfg: WindowConfig | None = None,
) -> list[Path]:
    """Serialise a population in one of the ingest formats; returns the files written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "events":
        events = [row for net in nets for row in population_events(net, seed)]
        accounts = [row for net in nets for row in population_accounts(net)]
        paths = [
            writers.write_event_log(events, out_dir / "events.csv"),
            writers.write_accounts(accounts, out_dir / "accounts.csv"),
        ]
    elif fmt == "windowed":
        cfg = cfg or WindowConfig()
        windows = [row for net in nets for row in population_windows(net, cfg, seed)]
        paths = [
            writers.write_window_graph(windows, out_dir / "windows.csv"),
            writers.write_social_graph([row[:2] for row in windows], out_dir / "social.csv"),
        ]
    else:
        raise SpecError(f"unknown population format '{fmt}', expected 'events' or 'windowed'")
    logger.info(f"Wrote synthetic population of {len(nets)} ego(s) to {out_dir}")
    return paths
