"""
Unit tests for PacketSniper timing, filters and policy execution.
"""
import random
import unittest
import sys
import os

# Add the project root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from hypothesis import given, strategies as st
from pydantic import ValidationError

from model.packet import LINK_SETUP_VOCABULARY, SUPPORTED_RATES, Packet
from sniper.filters import (
    TRUE_FILTER, AttrCmp, HeaderMatch, JammingFilter, MatchResult, decision_time, match_filter,
    parse_filter, print_filter,
)
from sniper.sniper import JamAction, JammingPolicy, PolicyEntry, SniperConfig, new_state, on_packet, run_policy
from sniper.timing import LatencyModel, airtime
from utils.errors import FilterSyntaxError

V = LINK_SETUP_VOCABULARY
REQ = V.make("AUTH_REQ", 0, 1)
ACK = V.make("CLIENT_ACK", 1, 0)
REQ_FILTER = parse_filter("header == 0B:00:01:00:00 && length >= 30 && length <= 30")

header_bytes = st.one_of(st.none(), st.integers(min_value=0, max_value=255))
predicates = st.one_of(
    st.builds(AttrCmp, st.sampled_from(["length", "rate"]), st.sampled_from(["<=", ">="]),
              st.integers(min_value=0, max_value=2000)),
    st.builds(HeaderMatch, st.lists(header_bytes, min_size=1, max_size=10).map(tuple)),
)
filters = st.lists(predicates, max_size=4).map(lambda ps: JammingFilter(tuple(ps)))
packets = st.builds(
    Packet,
    ptype=st.just("X"),
    src=st.integers(0, 3),
    dest=st.integers(0, 3),
    seq=st.integers(0, 3),
    retry=st.booleans(),
    length=st.integers(min_value=1, max_value=1500),
    rate=st.sampled_from(SUPPORTED_RATES),
    code=st.integers(0, 255),
)


class TestTiming(unittest.TestCase):

    def test_airtime(self):
        self.assertEqual(airtime(ACK), 44.0)
        self.assertEqual(airtime(REQ), 64.0)
        with self.assertRaises(ValueError):
            airtime(Packet("X", 0, 1, length=14, rate=7))

    def test_latency_defaults(self):
        latency = LatencyModel()
        self.assertEqual(latency.t_short_preamble, 7.17)
        self.assertEqual(latency.t_signal_field, 25.61)
        self.assertAlmostEqual(latency.per_byte(6), 32 / 24)
        self.assertAlmostEqual(latency.header_time(6, 1), 37.08)
        self.assertAlmostEqual(latency.header_time(6, 5), 37.08 + 4 * 32 / 24)

    def test_latency_must_be_ordered(self):
        with self.assertRaises(ValidationError):
            LatencyModel(t_signal_field=5.0)

    def test_decision_times(self):
        latency = LatencyModel()
        self.assertEqual(decision_time(TRUE_FILTER, REQ, latency), 7.17)
        self.assertEqual(decision_time(parse_filter("length >= 30"), REQ, latency), 25.61)
        self.assertAlmostEqual(decision_time(REQ_FILTER, REQ, latency), 37.08 + 4 * 32 / 24)
        self.assertEqual(decision_time(REQ_FILTER, REQ, latency, armed=True), 7.17)

    @given(st.integers(min_value=0, max_value=2000), st.sampled_from(SUPPORTED_RATES))
    def test_airtime_is_monotonic(self, length, rate):
        shorter = Packet("X", 0, 1, length=length, rate=rate)
        longer = Packet("X", 0, 1, length=length + 1, rate=rate)
        self.assertLessEqual(airtime(shorter), airtime(longer))

    @given(st.integers(min_value=1, max_value=9), st.sampled_from(SUPPORTED_RATES))
    def test_decision_time_grows_with_header_prefix(self, n, rate):
        latency = LatencyModel()
        pkt = Packet("X", 0, 1, length=100, rate=rate)
        fewer = JammingFilter((HeaderMatch((1,) * n),))
        more = JammingFilter((HeaderMatch((1,) * (n + 1)),))
        self.assertLess(decision_time(fewer, pkt, latency), decision_time(more, pkt, latency))


class TestFilters(unittest.TestCase):

    def test_parse_and_print(self):
        text = "length >= 30 && header == 0B:??:01"
        flt = parse_filter(text)
        self.assertEqual(print_filter(flt), text)
        self.assertEqual(flt.header_bytes_needed, 3)
        self.assertIs(parse_filter(" true "), TRUE_FILTER)
        self.assertEqual(print_filter(TRUE_FILTER), "true")

    def test_syntax_errors(self):
        for bad in ("size >= 3", "length = 3", "header == ZZ", "", "length >= 3 &&"):
            with self.assertRaises(FilterSyntaxError, msg=bad):
                parse_filter(bad)
        with self.assertRaises(FilterSyntaxError):
            parse_filter("header == 00:00:00", max_header_bytes=2)
        with self.assertRaises(FilterSyntaxError) as ctx:
            parse_filter("size >= 3")
        self.assertIn("unknown attribute", str(ctx.exception))

    def test_three_valued_match(self):
        self.assertIs(match_filter(REQ_FILTER, REQ, 10), MatchResult.MATCH)
        self.assertIs(match_filter(REQ_FILTER, REQ, 2), MatchResult.UNDECIDED)
        self.assertIs(match_filter(REQ_FILTER, ACK, 0), MatchResult.NO_MATCH)
        self.assertIs(match_filter(REQ_FILTER, V.make("AUTH_REQ", 0, 1, seq=1), 10), MatchResult.NO_MATCH)

    @given(filters)
    def test_print_parse_round_trip(self, flt):
        if not flt.conjuncts:
            self.assertIs(parse_filter(print_filter(flt)), TRUE_FILTER)
        else:
            self.assertEqual(parse_filter(print_filter(flt)), flt)


class TestSniper(unittest.TestCase):

    def policy(self, *entries):
        return JammingPolicy(tuple(PolicyEntry(f, tuple(a)) for f, a in entries), target="test")

    def test_jam_lands_before_packet_end(self):
        jammed, state = run_policy(self.policy((REQ_FILTER, [JamAction.JAM])), [REQ])
        self.assertEqual(jammed, (True,))
        self.assertEqual(state.jam_log[0].action, JamAction.JAM)

    def test_actions_are_consumed_in_order(self):
        policy = self.policy((REQ_FILTER, [JamAction.PASS, JamAction.JAM]))
        jammed, state = run_policy(policy, [REQ, REQ, REQ])
        self.assertEqual(jammed, (False, True, False))
        self.assertEqual(state.cursors, (2,))

    def test_jam_next_takes_the_following_ack(self):
        jammed, state = run_policy(self.policy((REQ_FILTER, [JamAction.JAM_NEXT])), [REQ, ACK])
        self.assertEqual(jammed, (False, True))
        self.assertFalse(state.armed_jam_next)
        self.assertEqual(state.jam_log[1].decision_time, 7.17)

    def test_late_decision_cannot_jam(self):
        full_header = parse_filter("header == D4:01:00:00:00:00:00:00:00:00")
        jammed, state = run_policy(self.policy((full_header, [JamAction.JAM])), [ACK])
        self.assertEqual(jammed, (False,))
        self.assertGreater(state.jam_log[0].decision_time, airtime(ACK))

    def test_decode_miss_and_jam_failure(self):
        policy = self.policy((REQ_FILTER, [JamAction.JAM]))
        jammed, _ = run_policy(policy, [REQ], SniperConfig(decode_miss_prob=1.0))
        self.assertEqual(jammed, (False,))
        jammed, state = run_policy(policy, [REQ], SniperConfig(jam_success_prob=0.0))
        self.assertEqual(jammed, (False,))
        self.assertEqual(state.cursors, (1,))

    def test_bad_airtime(self):
        with self.assertRaises(ValueError):
            on_packet(new_state(JammingPolicy()), REQ, 0.0)

    def test_empty_entry_rejected(self):
        with self.assertRaises(ValueError):
            PolicyEntry(REQ_FILTER, ())

    @given(filters, packets, st.sampled_from(list(JamAction)))
    def test_jam_implies_in_time(self, flt, pkt, action):
        policy = self.policy((flt, [action, JamAction.JAM]))
        state = new_state(policy)
        rng = random.Random(0)
        for _ in range(3):
            jammed, state = on_packet(state, pkt, airtime(pkt), SniperConfig(), rng)
            record = state.jam_log[-1]
            if jammed:
                self.assertIsNotNone(record.decision_time)
                self.assertLess(record.decision_time, airtime(pkt))


if __name__ == '__main__':
    unittest.main()
