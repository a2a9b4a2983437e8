"""One-hop diffusion against tie strength.

For every link the ego's reply rate to the alter (frep) and its retweet rate of
the alter's content (fret) are normalised by the ego's overall reply and
retweet rates. Links are stratified by ring and by alter class, and a linear
fit fret = α + β·frep is computed over all pairs of a stratum pooled across
egos.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from egolayers.analysis.layering import DEFAULT_SCALE, build_circles, ckmeans_1d, clustering_input, rescale
from egolayers.analysis.stats import MeanEstimate, PairMoments, mean_ci95, pearson
from egolayers.errors import (
    DegenerateEgoError,
    EgoExcludedError,
    InsufficientDataError,
    UndefinedCorrelationError,
)
from egolayers.model import AccountId, AlterClass, EgoNetwork, TieRecord
from egolayers.parallel import map_ordered

logger = logging.getLogger(__name__)

RINGS = 5
CLASS_COLUMNS = ("all", AlterClass.SOCIALLY_RELEVANT.value, AlterClass.OTHER.value)


@dataclass(frozen=True)
class DiffusionPair:
    frep: float
    fret: float
    ring: int | None
    alter_class: AlterClass


@dataclass(frozen=True)
class FitResult:
    """Pearson r (None when fret is constant) and the OLS line fret = alpha + beta * frep."""

    r: float | None
    alpha: float
    beta: float
    n: int


def frep(net: EgoNetwork, tie: TieRecord) -> float:
    """Reply frequency of the link relative to the ego's overall reply frequency."""
    if net.total_replies <= 0:
        raise EgoExcludedError(f"ego {net.ego} sent no replies")
    return (tie.reply_count / tie.link_lifespan) * (net.ego_lifespan / net.total_replies)


def fret(net: EgoNetwork, tie: TieRecord) -> float:
    """Retweet frequency of the alter's content relative to the ego's overall retweet frequency."""
    if net.total_retweets <= 0:
        raise EgoExcludedError(f"ego {net.ego} retweeted nothing from its alters")
    return (tie.retweet_count / tie.effective_retweet_lifespan) * (net.ego_lifespan / net.total_retweets)


def assign_rings(net: EgoNetwork, k: int = RINGS, *, scale: str = DEFAULT_SCALE) -> dict[AccountId, int]:
    """Ring 1..k of every active tie, from optimal k-means on the ego's frequencies at ``scale``."""
    normalized, raw = clustering_input(net)
    if raw.size < k:
        raise EgoExcludedError(f"ego {net.ego} has {raw.size} active ties, fewer than {k} rings")
    clustered = rescale(normalized, scale)
    if np.unique(clustered).size < k:
        raise EgoExcludedError(f"ego {net.ego} has fewer than {k} distinct frequencies")
    circles = build_circles(ckmeans_1d(clustered, k), raw)
    active = [t.alter for t in net.ties if t.is_active]
    return dict(zip(active, circles.ring_labels, strict=True))


def ring_map(
    net: EgoNetwork, rings: int = RINGS, *, use_tie_rings: bool = False, scale: str = DEFAULT_SCALE
) -> dict[AccountId, int] | None:
    """Ring of each active tie, or None when the ego cannot be split into ``rings`` rings."""
    if use_tie_rings:
        labels = {t.alter: t.ring for t in net.active_ties}
        return labels if all(r is not None for r in labels.values()) else None
    try:
        return assign_rings(net, rings, scale=scale)
    except (EgoExcludedError, DegenerateEgoError) as e:
        logger.debug(str(e))
        return None


def diffusion_pairs(
    net: EgoNetwork, rings: int = RINGS, *, use_tie_rings: bool = False, scale: str = DEFAULT_SCALE
) -> list[DiffusionPair]:
    """(frep, fret) of every active tie; ring is None when the ego is not ring-assignable."""
    if net.total_replies <= 0 or net.total_retweets <= 0:
        raise EgoExcludedError(f"ego {net.ego} lacks replies or retweets")
    labels = ring_map(net, rings, use_tie_rings=use_tie_rings, scale=scale) or {}
    return [
        DiffusionPair(frep(net, t), fret(net, t), labels.get(t.alter), t.alter_class)
        for t in net.ties
        if t.is_active
    ]


def fit_moments(moments: PairMoments) -> FitResult:
    if moments.n < 3:
        raise InsufficientDataError(f"fit needs at least 3 pairs, got {moments.n}")
    beta = moments.slope()
    alpha = moments.intercept()
    r = moments.pearson() if moments.dev_sq_y() > 0 else None
    return FitResult(r=r, alpha=alpha, beta=beta, n=moments.n)


def correlation_and_fit(pairs: Iterable[DiffusionPair]) -> FitResult:
    """Pearson r and OLS fit of fret on frep over pooled pairs."""
    pairs = list(pairs)
    x = np.array([p.frep for p in pairs], dtype=float)
    y = np.array([p.fret for p in pairs], dtype=float)
    return fit_moments(PairMoments.from_arrays(x, y))


def _try_fit(moments: PairMoments) -> FitResult | None:
    try:
        return fit_moments(moments)
    except (InsufficientDataError, UndefinedCorrelationError):
        return None


# ---------------------------------------------------------------------------
# Ring reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    ring: str
    alter_class: str
    n: int
    fit: FitResult | None


@dataclass(frozen=True)
class DiffusionReport:
    rows: tuple[ReportRow, ...]
    egos: int
    excluded: int

    def get(self, ring: str, alter_class: str = "all") -> ReportRow:
        for row in self.rows:
            if row.ring == ring and row.alter_class == alter_class:
                return row
        raise KeyError((ring, alter_class))


def _strata(pair: DiffusionPair, whole: str) -> list[tuple[str, str]]:
    rows = [whole] if pair.ring is None else [f"R{pair.ring}", whole]
    classes = ["all"]
    if pair.alter_class != AlterClass.UNKNOWN:
        classes.append(pair.alter_class.value)
    return [(row, cls) for row in rows for cls in classes]


def _ego_moments(pairs: Sequence[DiffusionPair], whole: str) -> dict[tuple[str, str], PairMoments]:
    grouped: dict[tuple[str, str], list[DiffusionPair]] = defaultdict(list)
    for pair in pairs:
        for key in _strata(pair, whole):
            grouped[key].append(pair)
    return {
        key: PairMoments.from_arrays([p.frep for p in group], [p.fret for p in group])
        for key, group in grouped.items()
    }


def ring_diffusion_report(
    nets: Iterable[EgoNetwork],
    rings: int = RINGS,
    *,
    threads: int = 1,
    use_tie_rings: bool = False,
    scale: str = DEFAULT_SCALE,
) -> DiffusionReport:
    """Fits per ring R1..Rk plus the whole network, for all / socially relevant / other alters."""
    whole = f"C{rings}"
    nets = list(nets)

    def work(net: EgoNetwork) -> dict[tuple[str, str], PairMoments] | None:
        try:
            return _ego_moments(diffusion_pairs(net, rings, use_tie_rings=use_tie_rings, scale=scale), whole)
        except EgoExcludedError:
            return None

    totals: dict[tuple[str, str], PairMoments] = defaultdict(PairMoments)
    excluded = 0
    for moments in map_ordered(work, nets, threads):
        if moments is None:
            excluded += 1
            continue
        for key, value in moments.items():
            totals[key] = totals[key] + value
    if excluded:
        logger.warning(f"{excluded} ego(s) excluded from diffusion analysis (no replies or retweets)")

    rows = []
    for ring in [f"R{i}" for i in range(1, rings + 1)] + [whole]:
        for cls in CLASS_COLUMNS:
            moments = totals.get((ring, cls), PairMoments())
            fit = _try_fit(moments)
            if fit is None and moments.n > 0:
                logger.warning(f"Fit undefined for {ring}/{cls} ({moments.n} pairs)")
            rows.append(ReportRow(ring=ring, alter_class=cls, n=moments.n, fit=fit))
    return DiffusionReport(rows=tuple(rows), egos=len(nets) - excluded, excluded=excluded)


@dataclass(frozen=True)
class VolumeRow:
    ring: int
    alter_class: str
    links: int
    mean_retweets_per_link: float
    mean_ring_size: float

    @property
    def mean_retweets_per_ego(self) -> float:
        return self.mean_retweets_per_link * self.mean_ring_size


@dataclass(frozen=True)
class VolumeReport:
    rows: tuple[VolumeRow, ...]
    egos: int

    def by_class(self, alter_class: str = "all") -> list[VolumeRow]:
        return [r for r in self.rows if r.alter_class == alter_class]


def ring_volume_report(
    nets: Iterable[EgoNetwork],
    rings: int = RINGS,
    *,
    threads: int = 1,
    use_tie_rings: bool = False,
    scale: str = DEFAULT_SCALE,
) -> VolumeReport:
    """Mean retweets per link in each ring, and per ego (per-link mean times mean ring size)."""
    nets = list(nets)

    def work(net: EgoNetwork) -> list[tuple[int, str, int]] | None:
        labels = ring_map(net, rings, use_tie_rings=use_tie_rings, scale=scale)
        if labels is None:
            return None
        return [(labels[t.alter], t.alter_class.value, t.retweet_count) for t in net.ties if t.is_active]

    retweets: dict[tuple[int, str], list[int]] = defaultdict(list)
    sizes: dict[tuple[int, str], list[int]] = defaultdict(list)
    egos = 0
    for ties in map_ordered(work, nets, threads):
        if ties is None:
            continue
        egos += 1
        per_ego: dict[tuple[int, str], int] = defaultdict(int)
        for ring, cls, count in ties:
            for key in ((ring, "all"), (ring, cls)):
                retweets[key].append(count)
                per_ego[key] += 1
        for ring in range(1, rings + 1):
            for cls in CLASS_COLUMNS:
                sizes[(ring, cls)].append(per_ego.get((ring, cls), 0))

    rows = []
    for cls in CLASS_COLUMNS:
        for ring in range(1, rings + 1):
            counts = retweets.get((ring, cls), [])
            per_link = math.fsum(counts) / len(counts) if counts else 0.0
            ring_sizes = sizes.get((ring, cls), [])
            mean_size = math.fsum(ring_sizes) / len(ring_sizes) if ring_sizes else 0.0
            rows.append(VolumeRow(ring, cls, len(counts), per_link, mean_size))
    logger.info(f"Retweet volumes computed over {egos} ring-assigned ego(s)")
    return VolumeReport(rows=tuple(rows), egos=egos)


# ---------------------------------------------------------------------------
# Ego-level activity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActivityCorrelations:
    r_activity_tweets: float | None
    r_log: float | None
    r_activity_retweets_log: float | None
    r_popularity: float | None
    n: int


def _safe_pearson(x, y) -> float | None:
    try:
        return pearson(x, y)
    except (InsufficientDataError, UndefinedCorrelationError):
        return None


def activity_correlations(nets: Iterable[EgoNetwork]) -> ActivityCorrelations:
    """Correlate ego activity (sum of tie frequencies) with tweeting, retweeting and popularity."""
    nets = list(nets)
    if len(nets) < 3:
        raise InsufficientDataError(f"activity correlations need at least 3 egos, got {len(nets)}")
    activity = np.array([n.activity for n in nets], dtype=float)
    tweets = np.array([n.tweet_count for n in nets], dtype=float)
    retweets = np.array([n.retweets_made for n in nets], dtype=float)
    received = np.array([n.retweets_received for n in nets], dtype=float)

    both = (activity > 0) & (tweets > 0)
    with_retweets = (activity > 0) & (retweets > 0)
    tweeting = tweets > 0
    popularity = received[tweeting] / tweets[tweeting]
    return ActivityCorrelations(
        r_activity_tweets=_safe_pearson(activity, tweets),
        r_log=_safe_pearson(np.log(activity[both]), np.log(tweets[both])),
        r_activity_retweets_log=_safe_pearson(np.log(activity[with_retweets]), np.log(retweets[with_retweets])),
        r_popularity=_safe_pearson(activity[tweeting], popularity),
        n=len(nets),
    )


@dataclass(frozen=True)
class PerEgoFit:
    egos: int
    r: MeanEstimate
    beta: MeanEstimate
    alpha: MeanEstimate


def per_ego_fit_average(nets: Iterable[EgoNetwork], *, threads: int = 1) -> PerEgoFit:
    """Average of the egos' own fits, as an alternative to pooling all links."""

    def work(net: EgoNetwork) -> FitResult | None:
        try:
            return correlation_and_fit(diffusion_pairs(net))
        except (EgoExcludedError, InsufficientDataError, UndefinedCorrelationError):
            return None

    fits = [f for f in map_ordered(work, list(nets), threads) if f is not None]
    return PerEgoFit(
        egos=len(fits),
        r=mean_ci95(f.r for f in fits if f.r is not None),
        beta=mean_ci95(f.beta for f in fits),
        alpha=mean_ci95(f.alpha for f in fits),
    )
