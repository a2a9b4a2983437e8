"""Layer discovery in ego networks.

Contact frequencies of one ego are clustered with exact one-dimensional
k-means (dynamic programming over sorted values), the number of clusters is
chosen by AIC, and clusters ordered by decreasing centroid are merged into
inclusive circles C1 ⊆ C2 ⊆ ... whose sizes and minimum frequencies are then
summarised over a population.

Two choices are configurable. ``scale`` is the increasing transform of the
normalised frequencies k-means runs on (``linear``, ``sqrt`` or ``log``); it
changes which partitions are optimal but never their contiguity. ``model`` is
the likelihood behind AIC: ``normal`` gives every cluster its own normal
density, ``lognormal`` treats clusters as log-normal bands sharing one
log-variance and weighted by their share of the ties.
"""

import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from egolayers.analysis.stats import MeanEstimate, mean_ci95
from egolayers.errors import ArityError, DegenerateEgoError, InsufficientDataError
from egolayers.model import AccountId, EgoNetwork
from egolayers.parallel import map_ordered

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
K_MAX = 20

CLUSTER_SCALES = ("linear", "sqrt", "log")
DEFAULT_SCALE = "sqrt"
AIC_MODELS = ("normal", "lognormal")
DEFAULT_AIC_MODEL = "lognormal"

CIRCLE_NAMES = (
    "super support clique",
    "support clique",
    "sympathy group",
    "affinity group",
    "active network",
)

# Offline reference circles: size and minimum contacts/month (None where unknown).
OFFLINE_REFERENCE = {
    "support clique": (4.6, 4.29),
    "sympathy group": (14.3, 1.00),
    "affinity group": (42.6, None),
    "active network": (132.5, 0.08),
}
OFFLINE_ACTIVE_NETWORK_SIZE = 132.5

# Upper bound on cost-matrix cells held in memory at once.
_CELL_BUDGET = 1 << 22


# ---------------------------------------------------------------------------
# Exact 1D k-means
# ---------------------------------------------------------------------------


def _ss(x: np.ndarray) -> float:
    """Sum of squared deviations from the mean; exactly 0 for constant input."""
    if x.size == 0 or x[0] == x[-1]:
        return 0.0
    mean = math.fsum(x) / x.size
    return math.fsum((x - mean) ** 2)


@dataclass(frozen=True, eq=False)
class ClusterSolution:
    """Optimal partition of values into k clusters contiguous in sorted order.

    Cluster 0 holds the smallest values. ``boundaries`` are the start indices of
    clusters 1..k-1 in the sorted array; ``order`` maps sorted positions back to
    input positions.
    """

    k: int
    values: np.ndarray
    order: np.ndarray
    boundaries: tuple[int, ...]
    sizes: tuple[int, ...]
    means: tuple[float, ...]
    within_ss: tuple[float, ...]
    total_within_ss: float
    ss_tot: float

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def degenerate(self) -> bool:
        """All values equal, so the total sum of squares is zero."""
        return self.ss_tot == 0

    @property
    def spans(self) -> list[tuple[int, int]]:
        starts = (0, *self.boundaries)
        ends = (*self.boundaries, self.n)
        return list(zip(starts, ends, strict=True))

    def labels(self) -> np.ndarray:
        """Cluster index of every input value, in input order."""
        sorted_labels = np.repeat(np.arange(self.k), self.sizes)
        labels = np.empty(self.n, dtype=np.int64)
        labels[self.order] = sorted_labels
        return labels


def _solution(values: np.ndarray, order: np.ndarray, boundaries: Sequence[int]) -> ClusterSolution:
    boundaries = tuple(int(b) for b in boundaries)
    starts = (0, *boundaries)
    ends = (*boundaries, values.size)
    clusters = [values[s:e] for s, e in zip(starts, ends, strict=True)]
    within = tuple(_ss(c) for c in clusters)
    values = values.copy()
    values.flags.writeable = False
    order = order.copy()
    order.flags.writeable = False
    return ClusterSolution(
        k=len(clusters),
        values=values,
        order=order,
        boundaries=boundaries,
        sizes=tuple(int(c.size) for c in clusters),
        means=tuple(math.fsum(c) / c.size for c in clusters),
        within_ss=within,
        total_within_ss=math.fsum(within),
        ss_tot=_ss(values),
    )


def _prepare(values) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ArityError("clustering needs a nonempty one-dimensional sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("clustering input contains non-finite values")
    order = np.argsort(x, kind="stable")
    return x[order], order


def _distinct(x_sorted: np.ndarray) -> int:
    return 1 + int(np.count_nonzero(x_sorted[1:] > x_sorted[:-1]))


def rescale(values, scale: str = DEFAULT_SCALE) -> np.ndarray:
    """Values on the scale k-means runs on."""
    x = np.asarray(values, dtype=float)
    if scale == "linear":
        return x
    if scale == "sqrt":
        if np.any(x < 0):
            raise ValueError("the sqrt scale needs values >= 0")
        return np.sqrt(x)
    if scale == "log":
        if np.any(x <= 0):
            raise ValueError("the log scale needs positive values")
        return np.log(x)
    raise ValueError(f"unknown clustering scale '{scale}', expected one of {', '.join(CLUSTER_SCALES)}")


class _Moments:
    """Centred prefix sums of a sorted sample, giving any segment's sum of squares in O(1)."""

    def __init__(self, y: np.ndarray):
        self.y = y
        centred = y - math.fsum(y) / y.size
        self.s1 = np.concatenate(([0.0], np.cumsum(centred)))
        self.s2 = np.concatenate(([0.0], np.cumsum(centred * centred)))

    def ss(self, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
        """Within sum of squares of y[starts[i]:ends[i]]; exactly 0 on constant segments."""
        seg = self.s1[ends] - self.s1[starts]
        out = np.maximum((self.s2[ends] - self.s2[starts]) - seg * seg / (ends - starts), 0.0)
        out[self.y[starts] == self.y[ends - 1]] = 0.0
        return out


class _KMeansTable:
    """Suffix DP: cost[m][a] = min within-SS of x[a:] split into m clusters.

    Split points are restricted to changes of value unless ``split_ties`` is set,
    so equal values always share a cluster.
    """

    def __init__(self, x_sorted: np.ndarray, k_max: int, split_ties: bool = False):
        n = x_sorted.size
        self.moments = _Moments(x_sorted)
        self._valid_end = np.ones(n + 1, dtype=bool)
        self._valid_end[0] = False
        if not split_ties:
            self._valid_end[1:n] = x_sorted[1:] > x_sorted[:-1]
        self._n = n
        s1, s2 = self.moments.s1, self.moments.s2
        scale = s2[-1] - s1[-1] ** 2 / n
        self._tol = 1e-12 * max(scale, 1e-300)

        rows = max(1, _CELL_BUDGET // (n + 1))
        self._chunks = [np.arange(lo, min(lo + rows, n + 1)) for lo in range(0, n + 1, rows)]
        self._cached = self._segment_cost(self._chunks[0]) if len(self._chunks) == 1 else None

        last = self._segment_cost(np.arange(n + 1))[:, n] if self._cached is None else self._cached[:, n]
        self.cost = [None, last]
        self.split = [None, np.full(n + 1, n, dtype=np.int64)]
        for _ in range(2, k_max + 1):
            self._extend()

    def _segment_cost(self, starts: np.ndarray) -> np.ndarray:
        s1, s2 = self.moments.s1, self.moments.s2
        count = np.arange(self._n + 1)[None, :] - starts[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            seg = s1[None, :] - s1[starts][:, None]
            cost = (s2[None, :] - s2[starts][:, None]) - seg * seg / count
        cost = np.maximum(cost, 0.0)
        cost[(count <= 0) | ~self._valid_end[None, :]] = np.inf
        return cost

    def _extend(self) -> None:
        previous = self.cost[-1]
        level = np.full(self._n + 1, np.inf)
        split = np.zeros(self._n + 1, dtype=np.int64)
        for rows in self._chunks:
            seg = self._cached if self._cached is not None else self._segment_cost(rows)
            total = seg + previous[None, :]
            best = total.min(axis=1)
            # first end within tolerance of the minimum: smallest leading cluster wins ties
            pick = np.argmax(total <= best[:, None] + self._tol, axis=1)
            split[rows] = pick
            level[rows] = total[np.arange(rows.size), pick]
        self.cost.append(level)
        self.split.append(split)

    def boundaries(self, k: int) -> list[int]:
        out = []
        start = 0
        for m in range(k, 1, -1):
            start = int(self.split[m][start])
            out.append(start)
        return out


def ckmeans_1d(values, k: int) -> ClusterSolution:
    """Globally optimal k-means partition of one-dimensional values."""
    x, order = _prepare(values)
    if not 1 <= k <= x.size:
        raise ArityError(f"k must be between 1 and {x.size}, got {k}")
    table = _KMeansTable(x, k, split_ties=k > _distinct(x))
    return _solution(x, order, table.boundaries(k))


def explained_variance(sol: ClusterSolution) -> float:
    """Share of the total sum of squares explained by the partition (1.0 for constant data)."""
    if sol.degenerate:
        logger.debug("Explained variance of constant data taken as 1.0")
        return 1.0
    return min(1.0, max(0.0, (sol.ss_tot - sol.total_within_ss) / sol.ss_tot))


# ---------------------------------------------------------------------------
# Model selection
# ---------------------------------------------------------------------------


def _normal_score(sizes: np.ndarray, ss: np.ndarray) -> float:
    variance = np.maximum(ss / sizes, VARIANCE_FLOOR)
    loglik = -0.5 * sizes * np.log(2 * math.pi * variance) - ss / (2 * variance)
    return -2 * math.fsum(loglik) + 4 * sizes.size


def _lognormal_score(sizes: np.ndarray, ss: np.ndarray, log_sum: float) -> float:
    n = float(sizes.sum())
    within = math.fsum(ss)
    variance = max(within / n, VARIANCE_FLOOR)
    loglik = (
        math.fsum(sizes * np.log(sizes / n))
        - 0.5 * n * math.log(2 * math.pi * variance)
        - within / (2 * variance)
        - log_sum
    )
    return -2 * loglik + 4 * sizes.size


def aic(sol: ClusterSolution) -> float:
    """Akaike criterion of the hard-assignment normal model of a partition.

    Every cluster has a normal density with its own mean and variance, the
    variance floored at VARIANCE_FLOOR, and q(k) = 2k.
    """
    return _normal_score(np.array(sol.sizes, dtype=float), np.array(sol.within_ss, dtype=float))


def lognormal_aic(sol: ClusterSolution) -> float:
    """Akaike criterion of log-normal clusters with one shared log-variance.

    Cluster j has its own log-mean and the mixing weight n_j/N; the common
    variance is floored at VARIANCE_FLOOR. Means, free weights and the variance
    make q(k) = 2k. Values must be positive.
    """
    if np.any(sol.values <= 0):
        raise ValueError("the log-normal model needs positive values")
    y = np.log(sol.values)
    ss = np.array([_ss(y[s:e]) for s, e in sol.spans], dtype=float)
    return _lognormal_score(np.array(sol.sizes, dtype=float), ss, math.fsum(y))


def _scores(table: _KMeansTable, x_sorted: np.ndarray, top: int, model: str) -> np.ndarray:
    """AIC for k = 1..top from the table's split points and prefix sums.

    Every segment of every candidate partition is scored in one pass. The
    normal model is evaluated on the values the table clustered, the log-normal
    model on the logarithms of ``x_sorted``.
    """
    if model == "normal":
        moments, log_sum = table.moments, None
    elif model == "lognormal":
        if x_sorted[0] <= 0:
            raise ValueError("the log-normal model needs positive values")
        y = np.log(x_sorted)
        moments, log_sum = _Moments(y), math.fsum(y)
    else:
        raise ValueError(f"unknown AIC model '{model}', expected one of {', '.join(AIC_MODELS)}")
    starts, ends = [], []
    for k in range(1, top + 1):
        bounds = table.boundaries(k)
        starts += [0, *bounds]
        ends += [*bounds, x_sorted.size]
    starts = np.array(starts, dtype=np.int64)
    ends = np.array(ends, dtype=np.int64)
    ks = np.arange(1, top + 1)
    group = np.repeat(ks - 1, ks)
    sizes = (ends - starts).astype(float)
    ss = moments.ss(starts, ends)

    if log_sum is None:
        variance = np.maximum(ss / sizes, VARIANCE_FLOOR)
        terms = -0.5 * sizes * np.log(2 * math.pi * variance) - ss / (2 * variance)
        loglik = np.bincount(group, weights=terms, minlength=top)
    else:
        n = float(x_sorted.size)
        within = np.bincount(group, weights=ss, minlength=top)
        variance = np.maximum(within / n, VARIANCE_FLOOR)
        mixing = np.bincount(group, weights=sizes * np.log(sizes / n), minlength=top)
        loglik = mixing - 0.5 * n * np.log(2 * math.pi * variance) - within / (2 * variance) - log_sum
    return -2 * loglik + 4 * ks


def _best_k(scores: Sequence[float]) -> int:
    """Index (from 1) of the lowest score; ties go to the smaller k."""
    best_k, best = 1, math.inf
    for k, score in enumerate(scores, 1):
        if score < best:
            best_k, best = k, score
    return best_k


def aic_profile(
    values,
    k_max: int = K_MAX,
    *,
    scale: str = DEFAULT_SCALE,
    model: str = DEFAULT_AIC_MODEL,
) -> list[tuple[int, float]]:
    """AIC of the optimal partition for every candidate k, from a single k-means table."""
    if k_max < 1:
        raise ArityError(f"k_max must be at least 1, got {k_max}")
    x, _ = _prepare(values)
    z = rescale(x, scale)
    top = min(k_max, _distinct(z))
    return [(k, float(score)) for k, score in enumerate(_scores(_KMeansTable(z, top), x, top, model), 1)]


def optimal_k(
    values,
    k_max: int = K_MAX,
    *,
    scale: str = DEFAULT_SCALE,
    model: str = DEFAULT_AIC_MODEL,
) -> int:
    """Number of clusters minimising AIC; ties go to the smaller k."""
    return _best_k([score for _, score in aic_profile(values, k_max, scale=scale, model=model)])


# ---------------------------------------------------------------------------
# Circles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    size: int
    min_frequency: float


@dataclass(frozen=True)
class CircleSet:
    """Inclusive circles C1 ⊆ ... ⊆ Ck and the ring (1..k) of every tie, in input order."""

    circles: tuple[Circle, ...]
    ring_labels: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.circles)

    @property
    def sizes(self) -> list[int]:
        return [c.size for c in self.circles]

    @property
    def min_frequencies(self) -> list[float]:
        return [c.min_frequency for c in self.circles]

    @property
    def ring_sizes(self) -> list[int]:
        sizes = self.sizes
        return [sizes[0]] + [b - a for a, b in zip(sizes, sizes[1:], strict=False)]

    def members(self, i: int) -> list[int]:
        """Input positions of the ties in circle C_i."""
        return [pos for pos, ring in enumerate(self.ring_labels) if ring <= i]


def build_circles(sol: ClusterSolution, raw_frequencies) -> CircleSet:
    """Merge clusters, strongest first, into inclusive circles with raw minimum frequencies."""
    raw = np.asarray(raw_frequencies, dtype=float)
    if raw.size != sol.n:
        raise ValueError(f"{raw.size} raw frequencies for {sol.n} clustered values")
    rings = sol.k - sol.labels()
    circles = []
    for i in range(1, sol.k + 1):
        members = raw[rings <= i]
        circles.append(Circle(size=int(members.size), min_frequency=float(members.min())))
    return CircleSet(circles=tuple(circles), ring_labels=tuple(int(r) for r in rings))


def scaling_factors(circles) -> list[float]:
    """Size ratio of every pair of adjacent circles."""
    sizes = circles.sizes if isinstance(circles, CircleSet) else list(circles)
    if len(sizes) < 2:
        return []
    return [b / a for a, b in zip(sizes, sizes[1:], strict=False)]


# ---------------------------------------------------------------------------
# Per-ego analysis and population summaries
# ---------------------------------------------------------------------------


def clustering_input(net: EgoNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Normalised and raw frequencies of the ego's active ties, in tie order."""
    raw = np.array([t.frequency for t in net.ties if t.is_active], dtype=float)
    if raw.size == 0:
        raise DegenerateEgoError(f"ego {net.ego} has no active tie")
    return raw / raw.max(), raw


@dataclass(frozen=True)
class EgoLayers:
    """Layering of one ego: optimal k and, when possible, circles at the fixed k."""

    ego: AccountId
    size: int
    kstar: int
    circles: CircleSet | None


def analyse_ego(
    net: EgoNetwork,
    k_fixed: int,
    k_max: int = K_MAX,
    *,
    scale: str = DEFAULT_SCALE,
    model: str = DEFAULT_AIC_MODEL,
) -> EgoLayers:
    """k* and fixed-k circles of one ego, both read off one k-means table."""
    normalized, raw = clustering_input(net)
    x, order = _prepare(normalized)
    z = rescale(x, scale)
    distinct = _distinct(z)
    top = min(k_max, distinct)
    table = _KMeansTable(z, min(distinct, max(top, k_fixed)))
    kstar = _best_k(_scores(table, x, top, model))
    circles = None
    if distinct >= k_fixed:
        circles = build_circles(_solution(z, order, table.boundaries(k_fixed)), raw)
    logger.debug(f"Ego {net.ego}: {raw.size} active ties, k* = {kstar}")
    return EgoLayers(ego=net.ego, size=int(raw.size), kstar=kstar, circles=circles)


@dataclass(frozen=True)
class CircleRow:
    circle: int
    min_freq: MeanEstimate
    size: MeanEstimate
    scaling_factor: MeanEstimate | None


@dataclass(frozen=True)
class KStarRow:
    label: str
    count: int
    share: float
    size: MeanEstimate


@dataclass(frozen=True)
class PopulationSummary:
    egos: tuple[EgoLayers, ...]
    k_fixed: int
    kstar_density: dict[int, float]
    kstar_table: tuple[KStarRow, ...]
    circles: tuple[CircleRow, ...]
    skipped: int

    @property
    def layered_egos(self) -> int:
        """Egos that entered the circle table."""
        return sum(1 for e in self.egos if e.circles is not None)


def kstar_table(egos: Sequence[EgoLayers], top: int = 5) -> tuple[KStarRow, ...]:
    """Share and mean active size of the egos per k*, lumping k* > top together."""
    total = len(egos)
    buckets: dict[str, list[EgoLayers]] = {str(k): [] for k in range(1, top + 1)}
    buckets[f">{top}"] = []
    for ego in egos:
        buckets[str(ego.kstar) if ego.kstar <= top else f">{top}"].append(ego)
    return tuple(
        KStarRow(
            label=label,
            count=len(members),
            share=len(members) / total if total else 0.0,
            size=mean_ci95(e.size for e in members),
        )
        for label, members in buckets.items()
    )


def population_summary(
    nets: Iterable[EgoNetwork],
    k_fixed: int,
    *,
    k_max: int = K_MAX,
    threads: int = 1,
    scale: str = DEFAULT_SCALE,
    model: str = DEFAULT_AIC_MODEL,
) -> PopulationSummary:
    """k* density over the population and the mean circle properties at ``k_fixed``."""
    if k_fixed < 1:
        raise ArityError(f"fixed k must be at least 1, got {k_fixed}")
    nets = list(nets)

    def work(net: EgoNetwork) -> EgoLayers | None:
        try:
            return analyse_ego(net, k_fixed, k_max, scale=scale, model=model)
        except DegenerateEgoError:
            return None

    results = map_ordered(work, nets, threads)
    egos = tuple(r for r in results if r is not None)
    skipped = len(results) - len(egos)
    if skipped:
        logger.warning(f"Skipped {skipped} ego(s) without active ties")

    counts = Counter(e.kstar for e in egos)
    density = {k: counts[k] / len(egos) for k in sorted(counts)}

    layered = [e.circles for e in egos if e.circles is not None]
    if len(layered) < len(egos):
        logger.info(f"{len(egos) - len(layered)} ego(s) have fewer than {k_fixed} distinct frequencies")
    rows = []
    for i in range(k_fixed):
        factor = None
        if i > 0:
            factor = mean_ci95(c.sizes[i] / c.sizes[i - 1] for c in layered)
        rows.append(
            CircleRow(
                circle=i + 1,
                min_freq=mean_ci95(c.min_frequencies[i] for c in layered),
                size=mean_ci95(c.sizes[i] for c in layered),
                scaling_factor=factor,
            )
        )
    logger.info(f"Layered {len(egos)} ego(s); {len(layered)} at k = {k_fixed}")
    return PopulationSummary(
        egos=egos,
        k_fixed=k_fixed,
        kstar_density=density,
        kstar_table=kstar_table(egos),
        circles=tuple(rows),
        skipped=skipped,
    )


def aggregate_ccdf(values) -> list[tuple[float, float]]:
    """Empirical P(X >= x) at every distinct sample value."""
    s = pd.Series(np.asarray(values, dtype=float))
    if s.empty:
        raise InsufficientDataError("CCDF of an empty sample")
    s = s.sort_values(ascending=True).reset_index(drop=True)
    n = len(s)
    s = s.drop_duplicates(keep="first")
    return [(float(x), (n - i) / n) for i, x in zip(s.index, s.values, strict=True)]


# ---------------------------------------------------------------------------
# Offline mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OfflineMapping:
    names: tuple[str, ...]
    sizes: tuple[float, ...]
    min_frequencies: tuple[float | None, ...]
    rescale_factor: float | None = None
    reason: str | None = None

    @property
    def mapped(self) -> bool:
        return self.reason is None

    def rows(self) -> list[dict]:
        if not self.mapped:
            return []
        rows = []
        for i, (name, size, min_freq) in enumerate(zip(self.names, self.sizes, self.min_frequencies, strict=True)):
            offline_size, offline_min_freq = OFFLINE_REFERENCE.get(name, (None, None))
            rows.append(
                {
                    "circle": i + 1,
                    "name": name,
                    "min_freq": min_freq,
                    "size": size,
                    "rescaled_size": size * self.rescale_factor if self.rescale_factor else None,
                    "offline_size": offline_size,
                    "offline_min_freq": offline_min_freq,
                }
            )
        return rows


def map_to_offline(
    sizes: Sequence[float],
    min_frequencies: Sequence[float | None] | None = None,
    *,
    reference_size: float | None = None,
) -> OfflineMapping:
    """Name circles after their offline counterparts, optionally rescaling to a reference size."""
    sizes = tuple(float(s) for s in sizes)
    min_frequencies = tuple(min_frequencies) if min_frequencies is not None else (None,) * len(sizes)
    if len(sizes) not in (4, 5):
        return OfflineMapping(
            names=(),
            sizes=sizes,
            min_frequencies=min_frequencies,
            reason=f"expected 4 or 5 circles, got {len(sizes)}",
        )
    names = CIRCLE_NAMES[-len(sizes) :]
    factor = None
    if reference_size is not None and sizes[-1] > 0:
        factor = reference_size / sizes[-1]
    return OfflineMapping(names=names, sizes=sizes, min_frequencies=min_frequencies, rescale_factor=factor)
