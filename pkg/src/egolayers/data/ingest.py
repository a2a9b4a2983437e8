"""Input parsing, ego-network assembly and the ego/alter filters.

Three CSV inputs are understood:

- window graph ``ego,alter,n1,n2,n3,n4``: nested interaction counts per
  undirected link, optionally pruned against a social graph ``ego,alter``;
- event log ``source,target,kind,months_before_download[,original_author]``;
- accounts ``id,created_months_before_download,tweets,following,followers,
  reply_ratio,mention_ratio``, all fields but ``id`` optional.

Errors point at the offending file and 1-based line (the header is line 1).
"""

import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from egolayers.analysis.tie_strength import (
    CalibrationConstants,
    estimate_link_frequencies,
    link_activity,
)
from egolayers.data.writers import ACCOUNT_COLUMNS, EVENT_LOG_COLUMNS, SOCIAL_GRAPH_COLUMNS, WINDOW_GRAPH_COLUMNS
from egolayers.errors import ConfigError, NonMonotoneCountsError, ParseError, UnknownKindError, ValidationError
from egolayers.model import (
    AccountId,
    AlterClass,
    EgoNetwork,
    InteractionEvent,
    InteractionKind,
    TieRecord,
    WindowConfig,
    WindowCounts,
)

logger = logging.getLogger(__name__)

CHUNK_ROWS = 200_000

Link = tuple[AccountId, AccountId]


def _link(a: int, b: int) -> Link:
    return (AccountId(min(a, b)), AccountId(max(a, b)))


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _read(path: str | Path, required: Iterable[str], chunksize: int | None = None):
    path = Path(path)
    if not path.is_file():
        raise ParseError("input file not found", path=path)
    try:
        reader = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            encoding="utf-8",
            chunksize=chunksize,
        )
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty, a header row is required", path=path, line=1) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"unreadable CSV: {e}", path=path) from None

    def check(frame: pd.DataFrame) -> pd.DataFrame:
        frame.columns = [c.strip() for c in frame.columns]
        # short rows leave trailing fields missing
        frame = frame.fillna("")
        missing = [c for c in required if c not in frame.columns]
        if missing:
            raise ParseError(f"missing required column(s): {', '.join(missing)}", path=path, line=1)
        return frame

    if chunksize is None:
        return check(reader)
    return (check(chunk) for chunk in reader)


def _lines(frame: pd.DataFrame) -> np.ndarray:
    # data rows start on line 2
    return frame.index.to_numpy() + 2


def _integers(frame: pd.DataFrame, column: str, path: Path, *, optional: bool = False) -> np.ndarray:
    """Column as int64; blanks become -1 when ``optional``."""
    raw = frame[column].str.strip()
    blank = raw == ""
    values = pd.to_numeric(raw.where(~blank, "0"), errors="coerce")
    bad = values.isna() | (values != np.floor(values.fillna(0)))
    if not optional:
        bad |= blank
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(
            f"{column} must be an integer, got {frame[column].iloc[row]!r}", path=path, line=int(_lines(frame)[row])
        )
    out = values.to_numpy(dtype=np.int64)
    if optional:
        out[blank.to_numpy()] = -1
    return out


def _reals(frame: pd.DataFrame, column: str, path: Path, *, optional: bool = False) -> np.ndarray:
    """Column as float64; blanks become NaN when ``optional``."""
    raw = frame[column].str.strip()
    blank = raw == ""
    values = pd.to_numeric(raw.where(~blank, "0"), errors="coerce").to_numpy(dtype=float)
    bad = np.isnan(values) | np.isinf(values)
    if not optional:
        bad |= blank.to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"{column} must be a number, got {frame[column].iloc[row]!r}", path=path, line=int(_lines(frame)[row])
        )
    if optional:
        values[blank.to_numpy()] = np.nan
    return values


# ---------------------------------------------------------------------------
# Window graph and social graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowGraph:
    """Window counts per undirected link (smaller id first) and the links pruned on load."""

    links: dict[Link, WindowCounts]
    discarded: int = 0
    cfg: WindowConfig = field(default_factory=WindowConfig)

    @property
    def discarded_share(self) -> float:
        total = len(self.links) + self.discarded
        return self.discarded / total if total else 0.0


def parse_social_graph(path: str | Path) -> frozenset[Link]:
    """Undirected links of a social graph file ``ego,alter``."""
    path = Path(path)
    frame = _read(path, SOCIAL_GRAPH_COLUMNS)
    egos = _integers(frame, "ego", path)
    alters = _integers(frame, "alter", path)
    links = frozenset(_link(a, b) for a, b in zip(egos.tolist(), alters.tolist(), strict=True))
    logger.info(f"Parsed social graph {path}: {len(links)} link(s)")
    return links


def parse_window_graph(
    path: str | Path,
    cfg: WindowConfig | None = None,
    *,
    social: frozenset[Link] | None = None,
) -> WindowGraph:
    """Read nested window counts; links missing from ``social`` (when given) are discarded."""
    path = Path(path)
    cfg = cfg or WindowConfig()
    frame = _read(path, WINDOW_GRAPH_COLUMNS)
    lines = _lines(frame)
    egos = _integers(frame, "ego", path)
    alters = _integers(frame, "alter", path)
    counts = np.column_stack([_integers(frame, c, path) for c in ("n1", "n2", "n3", "n4")]).reshape(-1, 4)

    negative = (counts < 0).any(axis=1)
    if negative.any():
        row = int(np.flatnonzero(negative)[0])
        raise ValidationError(f"negative window count {counts[row].tolist()}", path=path, line=int(lines[row]))
    nonmonotone = (np.diff(counts, axis=1) < 0).any(axis=1)
    if nonmonotone.any():
        row = int(np.flatnonzero(nonmonotone)[0])
        raise NonMonotoneCountsError(
            f"window counts must satisfy n1 <= n2 <= n3 <= n4, got {counts[row].tolist()}",
            path=path,
            line=int(lines[row]),
        )
    loops = egos == alters
    if loops.any():
        row = int(np.flatnonzero(loops)[0])
        raise ValidationError(f"self-loop on account {egos[row]}", path=path, line=int(lines[row]))

    links: dict[Link, WindowCounts] = {}
    seen: set[Link] = set()
    discarded = 0
    for i, (a, b) in enumerate(zip(egos.tolist(), alters.tolist(), strict=True)):
        key = _link(a, b)
        if key in seen:
            raise ParseError(f"duplicate link {key[0]}-{key[1]}", path=path, line=int(lines[i]))
        seen.add(key)
        if social is not None and key not in social:
            discarded += 1
            continue
        links[key] = WindowCounts(*(int(n) for n in counts[i]))
    if social is not None:
        logger.info(f"Discarded {discarded} link(s) absent from the social graph")
    logger.info(f"Parsed window graph {path}: {len(links)} link(s)")
    return WindowGraph(links=links, discarded=discarded, cfg=cfg)


# ---------------------------------------------------------------------------
# Accounts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccountStats:
    """Per-account statistics; any field may be unknown."""

    created_months_before_download: float | None = None
    tweets: int | None = None
    following: int | None = None
    followers: int | None = None
    reply_ratio: float | None = None
    mention_ratio: float | None = None

    @property
    def follow_ratio(self) -> float | None:
        """followers / following; infinite for accounts that follow nobody."""
        if self.followers is None or self.following is None:
            return None
        if self.following == 0:
            return math.inf if self.followers > 0 else 0.0
        return self.followers / self.following


def parse_accounts(path: str | Path) -> dict[AccountId, AccountStats]:
    path = Path(path)
    frame = _read(path, ACCOUNT_COLUMNS[:1])
    for column in ACCOUNT_COLUMNS[1:]:
        if column not in frame.columns:
            frame[column] = ""
    ids = _integers(frame, "id", path)
    ints = {c: _integers(frame, c, path, optional=True) for c in ("tweets", "following", "followers")}
    reals = {
        c: _reals(frame, c, path, optional=True)
        for c in ("created_months_before_download", "reply_ratio", "mention_ratio")
    }
    for column, values in [*ints.items(), *reals.items()]:
        negative = (values < 0) & (frame[column].str.strip() != "").to_numpy()
        if negative.any():
            row = int(np.flatnonzero(negative)[0])
            raise ValidationError(f"{column} must be >= 0", path=path, line=int(_lines(frame)[row]))

    accounts: dict[AccountId, AccountStats] = {}
    for i, account in enumerate(ids.tolist()):
        if AccountId(account) in accounts:
            raise ParseError(f"duplicate account {account}", path=path, line=int(_lines(frame)[i]))

        def get_int(c: str) -> int | None:
            return int(ints[c][i]) if ints[c][i] >= 0 else None

        def get_real(c: str) -> float | None:
            return None if np.isnan(reals[c][i]) else float(reals[c][i])

        accounts[AccountId(account)] = AccountStats(
            created_months_before_download=get_real("created_months_before_download"),
            tweets=get_int("tweets"),
            following=get_int("following"),
            followers=get_int("followers"),
            reply_ratio=get_real("reply_ratio"),
            mention_ratio=get_real("mention_ratio"),
        )
    logger.info(f"Parsed {len(accounts)} account(s) from {path}")
    return accounts


# ---------------------------------------------------------------------------
# Event log
# ---------------------------------------------------------------------------


_KINDS = {kind.value: kind for kind in InteractionKind}


def _created(accounts: Mapping[AccountId, AccountStats] | None) -> dict[int, float]:
    if not accounts:
        return {}
    return {
        int(account): stats.created_months_before_download
        for account, stats in accounts.items()
        if stats.created_months_before_download is not None
    }


def _check_creation(
    created: Mapping[int, float], ids: np.ndarray, times: np.ndarray, lines: np.ndarray, path: Path
) -> None:
    """Reject events older than an account they involve."""
    if not created:
        return
    limit = pd.Series(ids).map(created).to_numpy(dtype=float)
    early = times > limit
    if early.any():
        row = int(np.flatnonzero(early)[0])
        raise ValidationError(
            f"event {times[row]} months before download predates account {ids[row]}, "
            f"created {limit[row]} months before download",
            path=path,
            line=int(lines[row]),
        )


def parse_event_log(
    path: str | Path,
    *,
    accounts: Mapping[AccountId, AccountStats] | None = None,
    chunksize: int = CHUNK_ROWS,
) -> Iterator[InteractionEvent]:
    """Stream validated events from an event log, in file order.

    With ``accounts``, an event older than the creation of its source or target
    account is rejected.
    """
    path = Path(path)
    created = _created(accounts)
    total = 0
    for chunk in _read(path, EVENT_LOG_COLUMNS[:4], chunksize=chunksize):
        lines = _lines(chunk)
        sources = _integers(chunk, "source", path)
        targets = _integers(chunk, "target", path, optional=True)
        times = _reals(chunk, "months_before_download", path)
        if "original_author" in chunk.columns:
            authors = _integers(chunk, "original_author", path, optional=True)
        else:
            authors = np.full(len(chunk), -1, dtype=np.int64)
        names = chunk["kind"].str.strip().str.lower()
        kinds = names.map(_KINDS)
        unknown = kinds.isna().to_numpy()
        if unknown.any():
            row = int(np.flatnonzero(unknown)[0])
            raise UnknownKindError(f"unknown interaction kind '{names.iloc[row]}'", path=path, line=int(lines[row]))
        _check_creation(created, sources, times, lines, path)
        _check_creation(created, targets, times, lines, path)

        for i, (source, target, kind, when, author) in enumerate(
            zip(sources.tolist(), targets.tolist(), kinds.tolist(), times.tolist(), authors.tolist(), strict=True)
        ):
            try:
                yield InteractionEvent(
                    source=AccountId(source),
                    target=AccountId(target) if target >= 0 else None,
                    kind=kind,
                    months_before_download=when,
                    original_author=AccountId(author) if author >= 0 else None,
                )
            except ValidationError as e:
                raise ValidationError(str(e), path=path, line=int(lines[i])) from None
        total += len(chunk)
    logger.info(f"Parsed event log {path}: {total} event(s)")


# ---------------------------------------------------------------------------
# Ego and alter filters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EgoEligibilityRule:
    """Minimum account age (months) and minimum average interactions per month, both inclusive."""

    min_account_age: float = 6.0
    min_monthly_interactions: float = 10.0

    def __post_init__(self):
        if not (self.min_account_age >= 0 and self.min_monthly_interactions >= 0):
            raise ConfigError(
                f"eligibility thresholds must be >= 0, got {self.min_account_age}, {self.min_monthly_interactions}"
            )

    def admits(self, net: EgoNetwork) -> bool:
        if net.ego_lifespan < self.min_account_age or net.ego_lifespan <= 0:
            return False
        return net.total_interactions / net.ego_lifespan >= self.min_monthly_interactions


def select_eligible_egos(nets: Iterable[EgoNetwork], rule: EgoEligibilityRule | None = None) -> list[EgoNetwork]:
    rule = rule or EgoEligibilityRule()
    nets = list(nets)
    kept = [net for net in nets if rule.admits(net)]
    logger.info(f"{len(kept)} of {len(nets)} ego(s) eligible")
    return kept


@dataclass(frozen=True)
class AlterClassRule:
    """Threshold rule for telling socially relevant accounts from the rest.

    An account is ``other`` when its reply ratio is below ``min_reply_ratio``
    and its followers/following ratio exceeds ``max_follow_ratio``, or when one
    of the optional predicates fails. Accounts without the statistics the rule
    reads are ``unknown``.
    """

    min_reply_ratio: float = 0.05
    max_follow_ratio: float = 10.0
    max_mention_ratio: float | None = None
    min_tweets: int | None = None

    def __post_init__(self):
        if self.min_reply_ratio < 0 or self.max_follow_ratio < 0:
            raise ConfigError("alter class thresholds must be >= 0")


def classify_alter(stats: AccountStats | None, rule: AlterClassRule | None = None) -> AlterClass:
    rule = rule or AlterClassRule()
    if stats is None or stats.reply_ratio is None or stats.follow_ratio is None:
        return AlterClass.UNKNOWN
    if stats.reply_ratio < rule.min_reply_ratio and stats.follow_ratio > rule.max_follow_ratio:
        return AlterClass.OTHER
    if rule.max_mention_ratio is not None and stats.mention_ratio is not None:
        if stats.mention_ratio > rule.max_mention_ratio:
            return AlterClass.OTHER
    if rule.min_tweets is not None and stats.tweets is not None and stats.tweets < rule.min_tweets:
        return AlterClass.OTHER
    return AlterClass.SOCIALLY_RELEVANT


# ---------------------------------------------------------------------------
# Ego network assembly
# ---------------------------------------------------------------------------


def _classes(
    accounts: Mapping[AccountId, AccountStats] | None, rule: AlterClassRule | None
) -> dict[AccountId, AlterClass]:
    if not accounts:
        return {}
    return {account: classify_alter(stats, rule) for account, stats in accounts.items()}


def build_window_networks(
    graph: WindowGraph,
    cal: CalibrationConstants | None = None,
    *,
    accounts: Mapping[AccountId, AccountStats] | None = None,
    rule: AlterClassRule | None = None,
    fit_m: bool = False,
) -> tuple[list[EgoNetwork], CalibrationConstants]:
    """Estimate link frequencies and put every link in both end points' networks.

    The ego lifespan is the longest estimated link duration (the time since the
    ego's first interaction); the interaction total is the sum of n4.
    """
    cfg = graph.cfg
    estimates, used = estimate_link_frequencies(graph.links, cfg, cal or CalibrationConstants(), fit_m=fit_m)
    classes = _classes(accounts, rule)

    ties: dict[AccountId, list[TieRecord]] = defaultdict(list)
    for (a, b), counts in graph.links.items():
        estimate = estimates[(a, b)]
        lifespan = estimate.duration if estimate.relationship > 0 else cfg.w4
        for ego, alter in ((a, b), (b, a)):
            ties[ego].append(
                TieRecord(
                    ego=ego,
                    alter=alter,
                    frequency=estimate.frequency,
                    link_lifespan=lifespan,
                    reply_count=counts.n4,
                    alter_class=classes.get(alter, AlterClass.UNKNOWN),
                )
            )

    nets = []
    for ego in sorted(ties):
        active = [t.link_lifespan for t in ties[ego] if t.is_active]
        nets.append(
            EgoNetwork.assemble(
                ego,
                max(active) if active else cfg.w4,
                ties[ego],
                total_interactions=sum(t.reply_count for t in ties[ego]),
            )
        )
    logger.info(f"Assembled {len(nets)} ego network(s) from {len(graph.links)} windowed link(s)")
    return nets, used


@dataclass
class _Tally:
    last_contact: float = -math.inf
    replies: int = 0
    retweets: int = 0
    first_retweet: float = -math.inf


def build_event_networks(
    events: Iterable[InteractionEvent],
    accounts: Mapping[AccountId, AccountStats] | None = None,
    rule: AlterClassRule | None = None,
    *,
    download_time: float = 0.0,
) -> list[EgoNetwork]:
    """Assemble ego networks from an event stream in one pass.

    Egos are the accounts that sent at least one reply or mention; their ties
    are all accounts they exchanged a reply or mention with, in either
    direction. Retweets count towards the tie with the original author.

    The ego lifespan is the account age from ``accounts``; without one it is
    the age of the oldest event the ego took part in, and never shorter than
    its longest link.
    """
    accounts = accounts or {}
    contact: dict[Link, float] = {}
    pairs: dict[tuple[AccountId, AccountId], _Tally] = defaultdict(_Tally)
    initiators: set[AccountId] = set()
    sent: dict[AccountId, int] = defaultdict(int)
    originals: dict[AccountId, int] = defaultdict(int)
    retweets_made: dict[AccountId, int] = defaultdict(int)
    retweets_received: dict[AccountId, int] = defaultdict(int)
    earliest: dict[AccountId, float] = defaultdict(lambda: -math.inf)

    for event in events:
        when = event.months_before_download
        sent[event.source] += 1
        for account in (event.source, event.target):
            if account is not None:
                earliest[account] = max(earliest[account], when)
        if event.kind in (InteractionKind.REPLY, InteractionKind.MENTION):
            key = _link(event.source, event.target)
            contact[key] = max(contact.get(key, -math.inf), when)
            initiators.add(event.source)
            if event.kind == InteractionKind.REPLY:
                pairs[(event.source, event.target)].replies += 1
        if event.kind == InteractionKind.RETWEET:
            retweets_made[event.source] += 1
            retweets_received[event.original_author] += 1
            tally = pairs[(event.source, event.original_author)]
            tally.retweets += 1
            tally.first_retweet = max(tally.first_retweet, when)
        else:
            originals[event.source] += 1

    neighbours: dict[AccountId, list[AccountId]] = defaultdict(list)
    for a, b in contact:
        neighbours[a].append(b)
        neighbours[b].append(a)
    classes = _classes(accounts, rule)

    nets = []
    for ego in sorted(initiators):
        ties = []
        for alter in neighbours[ego]:
            tally = pairs.get((ego, alter), _Tally())
            activity = link_activity(contact[_link(ego, alter)], tally.replies, download_time)
            retweet_lifespan = None
            if tally.retweets:
                retweet_lifespan = max(activity.link_lifespan, tally.first_retweet - download_time)
            ties.append(
                TieRecord(
                    ego=ego,
                    alter=alter,
                    frequency=activity.frequency,
                    link_lifespan=activity.link_lifespan,
                    reply_count=activity.reply_count,
                    retweet_count=tally.retweets,
                    retweet_lifespan=retweet_lifespan,
                    alter_class=classes.get(alter, AlterClass.UNKNOWN),
                )
            )
        stats = accounts.get(ego)
        if stats is not None and stats.created_months_before_download is not None:
            lifespan = stats.created_months_before_download - download_time
        else:
            lifespan = max(earliest[ego] - download_time, *(t.link_lifespan for t in ties))
        tweet_count = stats.tweets if stats is not None and stats.tweets is not None else originals[ego]
        nets.append(
            EgoNetwork.assemble(
                ego,
                lifespan,
                ties,
                total_interactions=sent[ego],
                tweet_count=tweet_count,
                retweets_made=retweets_made[ego],
                retweets_received=retweets_received[ego],
            )
        )
    logger.info(f"Assembled {len(nets)} ego network(s) from the event log")
    return nets
