"""Contact-frequency estimation.

Windowed data only tells how many interactions a link had in the last 1, 6,
12 and 43 months. The equalities among those nested counts place the first
interaction in one of four windows (relationship classes C1..C4); the ratio of
the counts in the two innermost non-empty windows then positions it inside
that window, and the frequency is the total count over the estimated duration,
scaled by a per-class correction for recently born links.

Event-log data needs no estimation: the frequency is the number of replies
over the time since the first mention or reply between the pair.
"""

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from dotenv import dotenv_values
from scipy.optimize import brentq

from egolayers.errors import (
    CalibrationRangeError,
    ConfigError,
    DegenerateEgoError,
    InactiveLinkError,
    NoLinkError,
)
from egolayers.model import AccountId, EgoNetwork, InteractionEvent, InteractionKind, WindowConfig, WindowCounts

logger = logging.getLogger(__name__)

CLASSES = (1, 2, 3, 4)
DEFAULT_M = {1: 0.18, 2: 0.82, 3: 1.0, 4: 1.0}
ZERO_COUNT_FLOOR = 0.3

# One day, in months. Contacts at the download instant still get a positive lifespan.
MIN_LINK_LIFESPAN = 12 / 365.25


@dataclass(frozen=True)
class RelationshipClass:
    """Window in which a link's first interaction happened."""

    k: int
    window: tuple[float, float]


@dataclass(frozen=True)
class CalibrationConstants:
    """Per-class constants. Classes missing from ``a`` are calibrated on the data."""

    a: Mapping[int, float] = field(default_factory=dict)
    m: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_M))
    zero_count_floor: float = ZERO_COUNT_FLOOR
    targets: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, values in (("a", self.a), ("m", self.m), ("target", self.targets)):
            for k, value in values.items():
                if k not in CLASSES:
                    raise ConfigError(f"{name}{k}: class must be one of 1..4")
                if not (value > 0 and math.isfinite(value)):
                    raise ConfigError(f"{name}{k} must be positive, got {value}")
        if set(self.m) != set(CLASSES):
            raise ConfigError(f"m must define every class 1..4, got {sorted(self.m)}")
        if not self.zero_count_floor > 0:
            raise ConfigError(f"floor must be positive, got {self.zero_count_floor}")

    def target(self, k: int, cfg: WindowConfig) -> float:
        """Mean duration calibration aims for; the class window midpoint by default."""
        return self.targets.get(k, cfg.midpoint(k))


def load_calibration(path: str | Path) -> CalibrationConstants:
    """Read a key=value calibration file (a1..a4, m1..m4, floor, target1..target4)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"calibration file not found: {path}")
    a: dict[int, float] = {}
    m = dict(DEFAULT_M)
    targets: dict[int, float] = {}
    floor = ZERO_COUNT_FLOOR
    for key, raw in dotenv_values(path).items():
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: {key} is not a number: {raw!r}") from None
        if key == "floor":
            floor = value
        elif key[:-1] in ("a", "m") and key[-1:].isdigit():
            (a if key[0] == "a" else m)[int(key[-1])] = value
        elif key.startswith("target") and key[6:].isdigit():
            targets[int(key[6:])] = value
        else:
            raise ConfigError(f"{path}: unknown calibration key '{key}'")
    logger.info(f"Loaded calibration constants from {path}")
    return CalibrationConstants(a=a, m=m, zero_count_floor=floor, targets=targets)


# ---------------------------------------------------------------------------
# Relationship classes and interaction ratios (vectorised over links)
# ---------------------------------------------------------------------------


def classify_counts(counts) -> np.ndarray:
    """Relationship class per row of an (n, 4) count array; 0 marks inactive links."""
    n = np.asarray(counts).reshape(-1, 4)
    n1, n2, n3, n4 = n.T
    k = np.full(len(n), 4, dtype=np.int8)
    k[n3 == n4] = 3
    k[(n2 == n3) & (n3 == n4)] = 2
    k[(n1 == n2) & (n2 == n3) & (n3 == n4)] = 1
    k[n4 == 0] = 0
    return k


def interaction_ratios(counts, classes, floor: float = ZERO_COUNT_FLOOR) -> np.ndarray:
    """h per link: n_k / n_{k-1} - 1, with zero denominators replaced by ``floor``; 1 for C1."""
    n = np.asarray(counts, dtype=float).reshape(-1, 4)
    k = np.asarray(classes, dtype=np.int64)
    rows = np.arange(len(n))
    h = np.full(len(n), np.nan)
    inner = k >= 2
    numerator = n[rows[inner], k[inner] - 1]
    denominator = n[rows[inner], k[inner] - 2]
    denominator = np.where(denominator == 0, floor, denominator)
    h[inner] = numerator / denominator - 1.0
    h[k == 1] = 1.0
    return h


def _durations(h, lo: float, hi: float, a: float):
    h = np.asarray(h, dtype=float)
    return lo + (hi - lo) * h / (h + a)


def classify_relationship(c: WindowCounts, cfg: WindowConfig | None = None) -> RelationshipClass:
    """Class C1..C4 of an active link from the equalities among its counts."""
    if not c.is_active:
        raise InactiveLinkError(f"link is inactive (n4 = 0): {c.as_tuple()}")
    cfg = cfg or WindowConfig()
    k = int(classify_counts(c.as_tuple())[0])
    return RelationshipClass(k=k, window=cfg.window(k))


def interaction_ratio(c: WindowCounts, k: int, floor: float = ZERO_COUNT_FLOOR) -> float:
    return float(interaction_ratios(c.as_tuple(), [k], floor)[0])


def estimate_duration(h: float, k: int, cfg: WindowConfig, cal: CalibrationConstants) -> float:
    """Estimated months since the first interaction, inside the class window."""
    if k not in cal.a:
        raise CalibrationRangeError(f"no constant a{k}; calibrate it first")
    lo, hi = cfg.window(k)
    return float(_durations(h, lo, hi, cal.a[k]))


def calibrate_a(h_sample: Sequence[float], k: int, cfg: WindowConfig, target_mean_duration: float) -> float:
    """Find a_k so that the sample's mean estimated duration equals the target."""
    h = np.asarray(h_sample, dtype=float)
    lo, hi = cfg.window(k)
    if h.size == 0:
        raise CalibrationRangeError(f"cannot calibrate a{k} on an empty sample")
    if not lo < target_mean_duration < hi:
        raise CalibrationRangeError(f"target {target_mean_duration} outside the open window ({lo}, {hi}) of C{k}")
    if not np.any(h > 0):
        raise CalibrationRangeError(f"mean duration of C{k} does not depend on a when every h is 0")

    def excess(a: float) -> float:
        return math.fsum(_durations(h, lo, hi, a)) / h.size - target_mean_duration

    # mean duration decreases strictly in a, so widen until the target is bracketed
    a_lo = a_hi = 1.0
    for _ in range(2048):
        if excess(a_hi) <= 0:
            break
        a_hi *= 2
    else:
        raise CalibrationRangeError(f"target {target_mean_duration} unreachable for C{k}")
    for _ in range(2048):
        if excess(a_lo) >= 0:
            break
        a_lo /= 2
    else:
        raise CalibrationRangeError(f"target {target_mean_duration} unreachable for C{k}")

    if excess(a_lo) == 0:
        return a_lo
    if excess(a_hi) == 0:
        return a_hi
    a = brentq(excess, a_lo, a_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    logger.debug(f"Calibrated a{k} = {a:.6g} on {h.size} links (target {target_mean_duration})")
    return float(a)


def contact_frequency(c: WindowCounts, d_hat: float, k: int, cal: CalibrationConstants) -> float:
    """Total interactions over the estimated duration, times the class correction m_k."""
    if not d_hat > 0:
        raise ValueError(f"estimated duration must be positive, got {d_hat}")
    return c.n4 / d_hat * cal.m[k]


def calibrate_m(
    frequencies_by_class: Mapping[int, Sequence[float]],
    defaults: Mapping[int, float] | None = None,
) -> dict[int, float]:
    """Scale C1 and C2 so their mean frequency matches the mean of the stable classes C3 and C4."""
    m = dict(defaults or DEFAULT_M)
    stable = np.concatenate(
        [np.asarray(frequencies_by_class.get(k, ()), dtype=float) for k in (3, 4)]
    )
    if stable.size == 0:
        logger.warning("No C3/C4 links; keeping default m1, m2")
        return m
    stable_mean = math.fsum(stable) / stable.size
    for k in (1, 2):
        sample = np.asarray(frequencies_by_class.get(k, ()), dtype=float)
        if sample.size == 0 or math.fsum(sample) <= 0:
            logger.warning(f"No C{k} links; keeping default m{k} = {m[k]}")
            continue
        m[k] = stable_mean / (math.fsum(sample) / sample.size)
    m[3] = m[4] = 1.0
    return m


@dataclass(frozen=True)
class LinkEstimate:
    """Estimated tie strength of one windowed link (relationship 0 when inactive)."""

    relationship: int
    h: float
    duration: float
    frequency: float


def estimate_link_frequencies(
    links: Mapping,
    cfg: WindowConfig,
    cal: CalibrationConstants,
    *,
    fit_m: bool = False,
) -> tuple[dict, CalibrationConstants]:
    """Estimate every link's contact frequency, calibrating missing a_k per class first.

    Returns the per-link estimates keyed like ``links`` and the constants used.
    """
    keys = list(links)
    counts = np.array([links[key].as_tuple() for key in keys], dtype=float).reshape(-1, 4)
    classes = classify_counts(counts)
    h = interaction_ratios(counts, classes, cal.zero_count_floor)

    a = dict(cal.a)
    for k in CLASSES:
        mask = classes == k
        if k in a or not mask.any():
            continue
        a[k] = calibrate_a(h[mask], k, cfg, cal.target(k, cfg))
        logger.info(f"Calibrated a{k} = {a[k]:.6g} on {int(mask.sum())} C{k} links")
    for k in CLASSES:
        a.setdefault(k, 1.0)

    durations = np.full(len(keys), np.nan)
    for k in CLASSES:
        mask = classes == k
        lo, hi = cfg.window(k)
        durations[mask] = _durations(h[mask], lo, hi, a[k])

    active = classes > 0
    raw = np.zeros(len(keys))
    raw[active] = counts[active, 3] / durations[active]

    m = dict(cal.m)
    if fit_m:
        m = calibrate_m({k: raw[classes == k] for k in CLASSES}, m)
        logger.info(f"Calibrated m1 = {m[1]:.4g}, m2 = {m[2]:.4g}")
    scale = np.array([0.0, m[1], m[2], m[3], m[4]])
    frequency = raw * scale[classes]

    used = replace(cal, a=a, m=m)
    estimates = {
        key: LinkEstimate(int(classes[i]), float(h[i]), float(durations[i]), float(frequency[i]))
        for i, key in enumerate(keys)
    }
    logger.info(
        f"Estimated {len(keys)} link frequencies "
        f"(C1..C4: {', '.join(str(int((classes == k).sum())) for k in CLASSES)}; "
        f"inactive: {int((~active).sum())})"
    )
    return estimates, used


# ---------------------------------------------------------------------------
# Event-log tie strength
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkActivity:
    frequency: float
    link_lifespan: float
    reply_count: int


def link_activity(first_contact: float, replies: int, download_time: float = 0.0) -> LinkActivity:
    """Reply frequency of a link first contacted ``first_contact`` months before download."""
    lifespan = max(first_contact - download_time, MIN_LINK_LIFESPAN)
    return LinkActivity(frequency=replies / lifespan, link_lifespan=lifespan, reply_count=replies)


def reply_frequency(
    events: Iterable[InteractionEvent],
    ego: AccountId,
    alter: AccountId,
    download_time: float = 0.0,
) -> LinkActivity:
    """Replies from ego to alter per month since the pair's first mention or reply."""
    first_contact = -math.inf
    replies = 0
    pair = {ego, alter}
    for event in events:
        if event.kind not in (InteractionKind.REPLY, InteractionKind.MENTION):
            continue
        if {event.source, event.target} != pair:
            continue
        first_contact = max(first_contact, event.months_before_download)
        if event.kind == InteractionKind.REPLY and event.source == ego:
            replies += 1
    if first_contact == -math.inf:
        raise NoLinkError(f"no mention or reply between {ego} and {alter}")
    return link_activity(first_contact, replies, download_time)


def normalize_ego_frequencies(net: EgoNetwork) -> EgoNetwork:
    """Divide every frequency by the ego's maximum, so the strongest tie is 1.0."""
    top = max((t.frequency for t in net.ties), default=0.0)
    if not top > 0:
        raise DegenerateEgoError(f"ego {net.ego} has no tie with positive frequency")
    ties = tuple(replace(t, normalized_frequency=t.frequency / top) for t in net.ties)
    return replace(net, ties=ties)
