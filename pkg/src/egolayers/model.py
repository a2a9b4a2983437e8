"""Shared data model: interaction events, window counts, ties and ego networks.

All records are frozen dataclasses so they can be shared read-only between
worker threads. Time is measured in months before the data download, which
is the zero point of both input styles.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import StrEnum
from typing import NewType

from egolayers.errors import ConfigError, NonMonotoneCountsError, ValidationError

logger = logging.getLogger(__name__)

AccountId = NewType("AccountId", int)


class InteractionKind(StrEnum):
    REPLY = "reply"
    MENTION = "mention"
    RETWEET = "retweet"
    POST = "post"
    COMMENT = "comment"


class AlterClass(StrEnum):
    SOCIALLY_RELEVANT = "socially_relevant"
    OTHER = "other"
    UNKNOWN = "unknown"


# ---------------------------------------------------------------------------
# Raw inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class InteractionEvent:
    """One directed, timestamped interaction between two accounts."""

    source: AccountId
    target: AccountId | None
    kind: InteractionKind
    months_before_download: float
    original_author: AccountId | None = None

    def __post_init__(self):
        if self.target is None and self.kind != InteractionKind.POST:
            raise ValidationError(f"{self.kind} event without a target")
        if self.source == self.target:
            raise ValidationError(f"event source and target are the same account ({self.source})")
        if not math.isfinite(self.months_before_download) or self.months_before_download < 0:
            raise ValidationError(f"negative or non-finite timestamp {self.months_before_download}")
        if self.kind == InteractionKind.RETWEET and self.original_author is None:
            raise ValidationError("retweet event without original_author")
        if self.kind != InteractionKind.RETWEET and self.original_author is not None:
            raise ValidationError(f"original_author is only valid on retweets, not on {self.kind}")


@dataclass(frozen=True, slots=True)
class WindowCounts:
    """Interaction counts of one link over the four nested windows, innermost first."""

    n1: int
    n2: int
    n3: int
    n4: int

    def __post_init__(self):
        counts = self.as_tuple()
        if any(n < 0 for n in counts):
            raise ValidationError(f"negative window count in {counts}")
        if not (self.n1 <= self.n2 <= self.n3 <= self.n4):
            raise NonMonotoneCountsError(f"window counts must satisfy n1 <= n2 <= n3 <= n4, got {counts}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n1, self.n2, self.n3, self.n4)

    def count(self, k: int) -> int:
        """Count for window k (1..4)."""
        return self.as_tuple()[k - 1]

    @property
    def is_active(self) -> bool:
        return self.n4 > 0


@dataclass(frozen=True, slots=True)
class WindowConfig:
    """Outer edges of the four nested windows, in months before download."""

    w1: float = 1.0
    w2: float = 6.0
    w3: float = 12.0
    w4: float = 43.0

    def __post_init__(self):
        if not (0 < self.w1 < self.w2 < self.w3 < self.w4):
            raise ConfigError(f"windows must satisfy 0 < w1 < w2 < w3 < w4, got {self.edges[1:]}")

    @property
    def edges(self) -> tuple[float, float, float, float, float]:
        return (0.0, self.w1, self.w2, self.w3, self.w4)

    def window(self, k: int) -> tuple[float, float]:
        """Open interval (w_{k-1}, w_k) of class k."""
        if k not in (1, 2, 3, 4):
            raise ValueError(f"window class must be 1..4, got {k}")
        edges = self.edges
        return (edges[k - 1], edges[k])

    def midpoint(self, k: int) -> float:
        lo, hi = self.window(k)
        return (lo + hi) / 2


# ---------------------------------------------------------------------------
# Ego networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TieRecord:
    """One ego-alter link with its tie strength and diffusion counters."""

    ego: AccountId
    alter: AccountId
    frequency: float = 0.0
    link_lifespan: float = 1.0
    reply_count: int = 0
    retweet_count: int = 0
    retweet_lifespan: float | None = None
    alter_class: AlterClass = AlterClass.UNKNOWN
    normalized_frequency: float | None = None
    ring: int | None = None

    @property
    def is_active(self) -> bool:
        return self.frequency > 0

    @property
    def effective_retweet_lifespan(self) -> float:
        """Retweet lifespan under the max rule; the link lifespan when no retweet happened."""
        if self.retweet_lifespan is None:
            return self.link_lifespan
        return max(self.link_lifespan, self.retweet_lifespan)


@dataclass(frozen=True, slots=True)
class EgoNetwork:
    """An ego with its ties and the per-ego totals the diffusion measures normalise by."""

    ego: AccountId
    ego_lifespan: float
    ties: tuple[TieRecord, ...] = field(default_factory=tuple)
    total_replies: int = 0
    total_retweets: int = 0
    total_interactions: int = 0
    tweet_count: int = 0
    retweets_made: int = 0
    retweets_received: int = 0

    @classmethod
    def assemble(cls, ego: AccountId, ego_lifespan: float, ties, **stats) -> "EgoNetwork":
        """Build a network whose reply/retweet totals are summed from its ties."""
        ties = tuple(sorted(ties, key=lambda t: t.alter))
        return cls(
            ego=ego,
            ego_lifespan=ego_lifespan,
            ties=ties,
            total_replies=sum(t.reply_count for t in ties),
            total_retweets=sum(t.retweet_count for t in ties),
            **stats,
        )

    @property
    def active_ties(self) -> tuple[TieRecord, ...]:
        return tuple(t for t in self.ties if t.is_active)

    @property
    def size(self) -> int:
        """Number of active ties."""
        return sum(1 for t in self.ties if t.is_active)

    @property
    def activity(self) -> float:
        """Sum of the contact frequencies of all ties."""
        return math.fsum(t.frequency for t in self.ties)


@dataclass(frozen=True, slots=True)
class Violation:
    """One broken invariant, naming the field and the tie (alter) it concerns."""

    field: str
    message: str
    alter: AccountId | None = None

    def __str__(self) -> str:
        where = f"alter {self.alter}: " if self.alter is not None else ""
        return f"{where}{self.field}: {self.message}"


def validate(net: EgoNetwork) -> list[Violation]:
    """Check every invariant of an ego network. Never raises."""
    violations: list[Violation] = []

    lifespan_ok = net.ego_lifespan > 0 and math.isfinite(net.ego_lifespan)
    if not lifespan_ok:
        violations.append(Violation("ego_lifespan", f"must be positive, got {net.ego_lifespan}"))

    alter_counts = Counter(t.alter for t in net.ties)
    for alter, count in sorted(alter_counts.items()):
        if count > 1:
            violations.append(Violation("alter", f"appears in {count} ties", alter))

    max_frequency = max((t.frequency for t in net.ties), default=0.0)
    for tie in net.ties:
        if tie.ego != net.ego:
            violations.append(Violation("ego", f"tie belongs to ego {tie.ego}, not {net.ego}", tie.alter))
        if tie.alter == net.ego:
            violations.append(Violation("alter", "tie points back to the ego", tie.alter))
        if not (math.isfinite(tie.frequency) and tie.frequency >= 0):
            violations.append(Violation("frequency", f"must be finite and >= 0, got {tie.frequency}", tie.alter))
        if not (math.isfinite(tie.link_lifespan) and tie.link_lifespan > 0):
            violations.append(Violation("link_lifespan", f"must be positive, got {tie.link_lifespan}", tie.alter))
        elif lifespan_ok and tie.is_active and tie.link_lifespan > net.ego_lifespan:
            violations.append(
                Violation(
                    "link_lifespan",
                    f"{tie.link_lifespan} exceeds ego lifespan {net.ego_lifespan}",
                    tie.alter,
                )
            )
        if tie.reply_count < 0:
            violations.append(Violation("reply_count", f"must be >= 0, got {tie.reply_count}", tie.alter))
        if tie.retweet_count < 0:
            violations.append(Violation("retweet_count", f"must be >= 0, got {tie.retweet_count}", tie.alter))
        if tie.retweet_lifespan is not None and tie.retweet_lifespan < tie.link_lifespan:
            violations.append(
                Violation(
                    "retweet_lifespan",
                    f"{tie.retweet_lifespan} is shorter than link lifespan {tie.link_lifespan}",
                    tie.alter,
                )
            )
        if tie.normalized_frequency is not None:
            expected = tie.frequency / max_frequency if max_frequency > 0 else math.nan
            if not (0.0 <= tie.normalized_frequency <= 1.0) or not math.isclose(
                tie.normalized_frequency, expected, rel_tol=1e-12, abs_tol=1e-15
            ):
                violations.append(
                    Violation(
                        "normalized_frequency",
                        f"expected frequency / max = {expected}, got {tie.normalized_frequency}",
                        tie.alter,
                    )
                )

    reply_sum = sum(t.reply_count for t in net.ties)
    if net.total_replies != reply_sum:
        violations.append(Violation("total_replies", f"{net.total_replies} != sum of reply counts {reply_sum}"))
    retweet_sum = sum(t.retweet_count for t in net.ties)
    if net.total_retweets != retweet_sum:
        violations.append(Violation("total_retweets", f"{net.total_retweets} != sum of retweet counts {retweet_sum}"))

    if violations:
        logger.debug(f"Ego {net.ego}: {len(violations)} violation(s)")
    return violations
