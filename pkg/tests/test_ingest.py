"""Tests for CSV parsing, the ego/alter filters and ego-network assembly."""

import math

import pytest

from egolayers.analysis.tie_strength import CalibrationConstants
from egolayers.data.ingest import (
    AccountStats,
    AlterClassRule,
    EgoEligibilityRule,
    build_event_networks,
    build_window_networks,
    classify_alter,
    parse_accounts,
    parse_event_log,
    parse_social_graph,
    parse_window_graph,
    select_eligible_egos,
)
from egolayers.data.writers import write_accounts, write_window_graph
from egolayers.errors import ConfigError, NonMonotoneCountsError, ParseError, UnknownKindError, ValidationError
from egolayers.model import AccountId, AlterClass, EgoNetwork, InteractionEvent, InteractionKind, WindowCounts, validate

WINDOW_HEADER = "ego,alter,n1,n2,n3,n4\n"
EVENT_HEADER = "source,target,kind,months_before_download,original_author\n"
ACCOUNT_HEADER = "id,created_months_before_download,tweets,following,followers,reply_ratio,mention_ratio\n"


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def _make_net(ego, lifespan, interactions):
    return EgoNetwork.assemble(AccountId(ego), lifespan, [], total_interactions=interactions)


def _event(source, target, kind, when, author=None):
    return InteractionEvent(AccountId(source), target, InteractionKind(kind), when, author)


# ---------------------------------------------------------------------------
# Window graph / social graph
# ---------------------------------------------------------------------------


class TestParseWindowGraph:
    def test_row(self, tmp_path):
        graph = parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "7,9,2,5,5,6\n"))
        assert graph.links == {(7, 9): WindowCounts(2, 5, 5, 6)}
        assert graph.discarded == 0

    def test_link_is_undirected(self, tmp_path):
        graph = parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "9,7,0,0,1,1\n"))
        assert list(graph.links) == [(7, 9)]

    def test_nonmonotone_row(self, tmp_path):
        path = _write(tmp_path, "w.csv", WINDOW_HEADER + "7,9,2,5,5,6\n1,2,5,2,5,6\n")
        with pytest.raises(NonMonotoneCountsError) as exc:
            parse_window_graph(path)
        assert exc.value.line == 3

    def test_negative_count(self, tmp_path):
        with pytest.raises(ValidationError, match="negative"):
            parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "1,2,-1,0,0,0\n"))

    def test_self_loop(self, tmp_path):
        with pytest.raises(ValidationError, match="self-loop"):
            parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "3,3,0,0,0,1\n"))

    def test_duplicate_link(self, tmp_path):
        with pytest.raises(ParseError, match="duplicate"):
            parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "1,2,0,0,0,1\n2,1,0,0,1,1\n"))

    def test_not_an_integer(self, tmp_path):
        with pytest.raises(ParseError, match="n3 must be an integer") as exc:
            parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "1,2,0,0,x,1\n"))
        assert exc.value.line == 2

    def test_write_parse_write_is_stable(self, tmp_path):
        rows = [(1, 2, 0, 0, 1, 3), (1, 5, 2, 2, 2, 2), (4, 9, 0, 1, 1, 7)]
        first = write_window_graph(rows, tmp_path / "a.csv")
        graph = parse_window_graph(first)
        again = write_window_graph([(a, b, *c.as_tuple()) for (a, b), c in graph.links.items()], tmp_path / "b.csv")
        assert again.read_bytes() == first.read_bytes()
        assert parse_window_graph(again).links == graph.links

    def test_missing_column(self, tmp_path):
        with pytest.raises(ParseError, match="n4") as exc:
            parse_window_graph(_write(tmp_path, "w.csv", "ego,alter,n1,n2,n3\n1,2,0,0,0\n"))
        assert exc.value.line == 1

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError, match="empty"):
            parse_window_graph(_write(tmp_path, "w.csv", ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="not found"):
            parse_window_graph(tmp_path / "nope.csv")

    def test_social_graph_prunes_links(self, tmp_path):
        social = parse_social_graph(_write(tmp_path, "s.csv", "ego,alter\n2,1\n"))
        path = _write(tmp_path, "w.csv", WINDOW_HEADER + "1,2,0,0,0,1\n1,3,0,0,1,1\n4,5,0,0,0,0\n")
        graph = parse_window_graph(path, social=social)
        assert list(graph.links) == [(1, 2)]
        assert graph.discarded == 2
        assert graph.discarded_share == pytest.approx(2 / 3)


class TestBuildWindowNetworks:
    def test_link_in_both_networks(self, tmp_path):
        graph = parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "1,2,0,0,3,6\n1,3,0,0,0,0\n"))
        cal = CalibrationConstants(a={1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0})
        nets, used = build_window_networks(graph, cal)
        assert [n.ego for n in nets] == [1, 2, 3]
        one = nets[0]
        assert [t.alter for t in one.ties] == [2, 3]
        assert one.ties[0].frequency == nets[1].ties[0].frequency
        # C4 link with h = 6/3 - 1 = 1 lasts 12 + 31/2 months
        assert one.ties[0].link_lifespan == pytest.approx(27.5)
        assert one.ego_lifespan == pytest.approx(27.5)
        assert one.total_interactions == 6
        assert one.ties[1].link_lifespan == 43.0
        assert nets[2].ego_lifespan == 43.0
        assert used.a[4] == 1.0

    def test_alter_classes(self, tmp_path):
        graph = parse_window_graph(_write(tmp_path, "w.csv", WINDOW_HEADER + "1,2,0,0,3,6\n"))
        accounts = {AccountId(2): AccountStats(reply_ratio=0.01, following=10, followers=1000)}
        nets, _ = build_window_networks(graph, CalibrationConstants(a={4: 1.0}), accounts=accounts)
        assert nets[0].ties[0].alter_class == AlterClass.OTHER
        assert nets[1].ties[0].alter_class == AlterClass.UNKNOWN


# ---------------------------------------------------------------------------
# Event log
# ---------------------------------------------------------------------------


class TestParseEventLog:
    def test_rows(self, tmp_path):
        path = _write(
            tmp_path,
            "e.csv",
            EVENT_HEADER + "1,2,reply,3.5,\n1,,post,2.0,\n1,2,retweet,1.0,2\n2,1,MENTION,0.5,\n",
        )
        events = list(parse_event_log(path))
        assert [e.kind for e in events] == ["reply", "post", "retweet", "mention"]
        assert events[1].target is None
        assert events[2].original_author == 2

    def test_without_author_column(self, tmp_path):
        path = _write(tmp_path, "e.csv", "source,target,kind,months_before_download\n1,2,reply,3.5\n")
        assert len(list(parse_event_log(path))) == 1

    def test_unknown_kind(self, tmp_path):
        path = _write(tmp_path, "e.csv", EVENT_HEADER + "1,2,reply,3.5,\n1,2,poke,1.0,\n")
        with pytest.raises(UnknownKindError, match="poke") as exc:
            list(parse_event_log(path))
        assert exc.value.line == 3

    def test_invalid_row_points_at_line(self, tmp_path):
        path = _write(tmp_path, "e.csv", EVENT_HEADER + "1,2,reply,3.5,\n1,2,retweet,1.0,\n")
        with pytest.raises(ValidationError, match="original_author") as exc:
            list(parse_event_log(path))
        assert exc.value.line == 3
        assert exc.value.to_record()["line"] == 3

    def test_chunks_keep_line_numbers(self, tmp_path):
        rows = "".join(f"1,2,reply,{i}.0,\n" for i in range(5))
        path = _write(tmp_path, "e.csv", EVENT_HEADER + rows + "1,1,reply,1.0,\n")
        with pytest.raises(ValidationError) as exc:
            list(parse_event_log(path, chunksize=2))
        assert exc.value.line == 7

    def test_event_before_account_creation(self, tmp_path):
        path = _write(tmp_path, "e.csv", EVENT_HEADER + "1,2,reply,3.5,\n1,2,reply,30.0,\n")
        accounts = {AccountId(1): AccountStats(created_months_before_download=24.0)}
        with pytest.raises(ValidationError, match="predates account 1") as exc:
            list(parse_event_log(path, accounts=accounts))
        assert exc.value.line == 3

    def test_event_before_target_creation(self, tmp_path):
        path = _write(tmp_path, "e.csv", EVENT_HEADER + "1,2,mention,12.0,\n")
        accounts = {AccountId(2): AccountStats(created_months_before_download=10.0)}
        with pytest.raises(ValidationError, match="predates account 2"):
            list(parse_event_log(path, accounts=accounts))

    def test_accounts_without_creation_time_accept_any_event(self, tmp_path):
        path = _write(tmp_path, "e.csv", EVENT_HEADER + "1,2,reply,30.0,\n1,,post,40.0,\n")
        accounts = {
            AccountId(1): AccountStats(tweets=3),
            AccountId(2): AccountStats(created_months_before_download=31.0),
        }
        assert len(list(parse_event_log(path, accounts=accounts))) == 2


class TestBuildEventNetworks:
    def test_ties_and_totals(self):
        events = [
            _event(1, 2, "mention", 10.0),
            _event(1, 2, "reply", 4.0),
            _event(1, 2, "reply", 2.0),
            _event(3, 1, "reply", 6.0),
            _event(1, 2, "retweet", 12.0, 2),
            _event(1, None, "post", 8.0),
            _event(9, 1, "retweet", 1.0, 1),
        ]
        nets = build_event_networks(events)
        assert [n.ego for n in nets] == [1, 3]
        one = nets[0]
        assert [t.alter for t in one.ties] == [2, 3]
        to_two, to_three = one.ties
        assert to_two.link_lifespan == 10.0
        assert to_two.reply_count == 2
        assert to_two.frequency == pytest.approx(0.2)
        assert to_two.retweet_count == 1
        assert to_two.effective_retweet_lifespan == 12.0
        # ego 1 never replied to 3, but 3 replied to it
        assert to_three.frequency == 0.0
        assert to_three.link_lifespan == 6.0
        assert one.ego_lifespan == 12.0
        assert one.total_interactions == 5
        assert one.tweet_count == 4
        assert one.retweets_made == 1
        assert one.retweets_received == 1

    def test_account_stats_take_precedence(self):
        events = [_event(1, 2, "reply", 3.0)]
        accounts = {
            AccountId(1): AccountStats(created_months_before_download=30.0, tweets=900),
            AccountId(2): AccountStats(reply_ratio=0.2, following=50, followers=60),
        }
        net = build_event_networks(events, accounts)[0]
        assert net.ego_lifespan == 30.0
        assert net.tweet_count == 900
        assert net.ties[0].alter_class == AlterClass.SOCIALLY_RELEVANT

    def test_download_time_shifts_origin(self):
        net = build_event_networks([_event(1, 2, "reply", 5.0)], download_time=1.0)[0]
        assert net.ties[0].link_lifespan == 4.0
        assert net.ego_lifespan == 4.0

    def test_fallback_lifespan_covers_received_contact(self):
        events = [_event(2, 1, "reply", 9.0), _event(1, 2, "reply", 3.0)]
        one = build_event_networks(events)[0]
        assert one.ego == 1
        assert one.ties[0].link_lifespan == 9.0
        assert one.ego_lifespan == 9.0
        assert validate(one) == []


# ---------------------------------------------------------------------------
# Accounts and filters
# ---------------------------------------------------------------------------


class TestParseAccounts:
    def test_optional_fields(self, tmp_path):
        path = _write(tmp_path, "a.csv", ACCOUNT_HEADER + "1,24.0,500,10,20,0.3,0.1\n2,,,,,,\n")
        accounts = parse_accounts(path)
        assert accounts[1].tweets == 500
        assert accounts[1].follow_ratio == 2.0
        assert accounts[2] == AccountStats()

    def test_id_only_file(self, tmp_path):
        accounts = parse_accounts(_write(tmp_path, "a.csv", "id\n5\n"))
        assert accounts[5].reply_ratio is None

    def test_negative_value(self, tmp_path):
        with pytest.raises(ValidationError, match="followers") as exc:
            parse_accounts(_write(tmp_path, "a.csv", ACCOUNT_HEADER + "1,24.0,500,10,-2,0.3,0.1\n"))
        assert exc.value.line == 2

    def test_duplicate_account(self, tmp_path):
        with pytest.raises(ParseError, match="duplicate"):
            parse_accounts(_write(tmp_path, "a.csv", "id\n5\n5\n"))

    def test_write_parse_write_is_stable(self, tmp_path):
        rows = [(1, 24.0, 500, 10, 20, 0.3, 0.125), (2, None, None, None, None, None, None), (7, 6.5, 0, 0, 3, 0.0, None)]
        first = write_accounts(rows, tmp_path / "a.csv")
        accounts = parse_accounts(first)
        again = write_accounts(
            [
                (
                    account,
                    s.created_months_before_download,
                    s.tweets,
                    s.following,
                    s.followers,
                    s.reply_ratio,
                    s.mention_ratio,
                )
                for account, s in accounts.items()
            ],
            tmp_path / "b.csv",
        )
        assert again.read_bytes() == first.read_bytes()
        assert parse_accounts(again) == accounts

    def test_follows_nobody(self):
        assert AccountStats(following=0, followers=3).follow_ratio == math.inf
        assert AccountStats(following=0, followers=0).follow_ratio == 0.0


class TestEligibility:
    @pytest.mark.parametrize(
        ("lifespan", "interactions", "kept"),
        [
            (7.0, 80, True),
            (5.0, 200, False),
            (10.0, 100, True),
            (10.0, 99, False),
            (6.0, 60, True),
        ],
    )
    def test_boundaries(self, lifespan, interactions, kept):
        assert EgoEligibilityRule().admits(_make_net(1, lifespan, interactions)) is kept

    def test_select_keeps_order(self):
        nets = [_make_net(3, 12.0, 500), _make_net(1, 2.0, 500), _make_net(2, 12.0, 500)]
        assert [n.ego for n in select_eligible_egos(nets)] == [3, 2]

    def test_negative_threshold(self):
        with pytest.raises(ConfigError):
            EgoEligibilityRule(min_account_age=-1.0)

    def test_stricter_rule_keeps_a_subset(self):
        grid = [(lifespan, interactions) for lifespan in (2.0, 6.0, 9.0, 24.0, 43.0) for interactions in (0, 50, 240, 900)]
        nets = [_make_net(i, lifespan, interactions) for i, (lifespan, interactions) in enumerate(grid)]
        rules = [EgoEligibilityRule(age, rate) for age in (0.0, 6.0, 12.0) for rate in (0.0, 5.0, 10.0, 40.0)]
        for loose in rules:
            for strict in rules:
                if strict.min_account_age >= loose.min_account_age and (
                    strict.min_monthly_interactions >= loose.min_monthly_interactions
                ):
                    kept = {n.ego for n in select_eligible_egos(nets, strict)}
                    assert kept <= {n.ego for n in select_eligible_egos(nets, loose)}


class TestClassifyAlter:
    def test_broadcaster_is_other(self):
        stats = AccountStats(reply_ratio=0.01, following=10, followers=1000)
        assert classify_alter(stats) == AlterClass.OTHER

    def test_conversational_account(self):
        stats = AccountStats(reply_ratio=0.3, following=100, followers=100)
        assert classify_alter(stats) == AlterClass.SOCIALLY_RELEVANT

    def test_low_replies_alone_is_not_enough(self):
        stats = AccountStats(reply_ratio=0.01, following=100, followers=200)
        assert classify_alter(stats) == AlterClass.SOCIALLY_RELEVANT

    def test_missing_statistics(self):
        assert classify_alter(None) == AlterClass.UNKNOWN
        assert classify_alter(AccountStats(reply_ratio=0.3)) == AlterClass.UNKNOWN

    def test_optional_predicates(self):
        stats = AccountStats(reply_ratio=0.3, following=100, followers=100, mention_ratio=0.9, tweets=5)
        assert classify_alter(stats, AlterClassRule(max_mention_ratio=0.5)) == AlterClass.OTHER
        assert classify_alter(stats, AlterClassRule(min_tweets=10)) == AlterClass.OTHER
        assert classify_alter(stats, AlterClassRule(max_mention_ratio=0.95, min_tweets=5)) == AlterClass.SOCIALLY_RELEVANT
