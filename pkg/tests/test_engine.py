"""
Unit tests for the executor and the protocol analyzer.
"""
import json
import unittest
import sys
import os

# Add the project root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from hypothesis import given, settings, strategies as st

from engine.analyzer import (
    LossSchedule, ScheduleEntry, compile_policy, dump_table, format_system_state, jamming_policy,
    packet_filter, parse_system_state, policy_table, reachable_states, table_from_dict, table_to_dict,
)
from engine.executor import (
    Move, Step, air_packet, apply_move, enabled_moves, first_choice, format_run, initial_state, replay,
    run_schedule, system_state, SYNC,
)
from model.packet import LINK_SETUP_VOCABULARY
from model.parser import parse_model
from sniper.sniper import JamAction
from tests.oracles import brute_force_reachable
from utils.errors import ContractViolation, PolicyCompileError, ScheduleError, StateSpaceExceeded

MODEL_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'models')


def load(name):
    with open(os.path.join(MODEL_DIR, name), encoding='utf-8') as f:
        return parse_model(f.read())


AUTH = load("auth_stage.model")


def replay_reaches(model, target, schedule):
    run = run_schedule(model, list(schedule.decisions),
                       stop=lambda s: system_state(model, s) == target)
    return system_state(model, run.final) == target


class TestExecutor(unittest.TestCase):

    def test_initial_state(self):
        state = initial_state(AUTH)
        self.assertEqual(system_state(AUTH, state), ("s0", "t1"))
        moves = enabled_moves(AUTH, state)
        self.assertEqual(len(moves), 1)
        self.assertEqual(moves[0].kind, SYNC)
        self.assertEqual(AUTH.automata[moves[0].emitter.automaton].name, "Client")

    def test_disabled_move_is_rejected(self):
        state = initial_state(AUTH)
        ap = AUTH.index_of("AP")
        bogus = Move(SYNC, Step(ap, 0))
        with self.assertRaises(ContractViolation):
            apply_move(AUTH, state, bogus)

    def test_lossless_run_completes_handshake(self):
        run = run_schedule(AUTH, first_choice)
        self.assertEqual(system_state(AUTH, run.final), ("s4", "t4"))
        self.assertEqual([t.packet.ptype for t in run.transmitted],
                         ["AUTH_REQ", "CLIENT_ACK", "AUTH_RESP", "AP_ACK"])
        self.assertTrue(all(not t.medium_loss and t.sniffer_loss is False for t in run.transmitted))
        self.assertEqual(enabled_moves(AUTH, run.final), [])

    def losing(self, ptype, first_only):
        done = []

        def resolver(state, moves):
            if not (first_only and done):
                for i, move in enumerate(moves):
                    if move.medium_loss is True and \
                            air_packet(AUTH, apply_move(AUTH, state, move)).ptype == ptype:
                        done.append(i)
                        return i
            return first_choice(state, moves)

        return resolver

    def test_transmitter_gives_up_after_retry_limit(self):
        run = run_schedule(AUTH, self.losing("AUTH_REQ", first_only=False))
        sent = [t.packet for t in run.transmitted]
        self.assertEqual([p.ptype for p in sent], ["AUTH_REQ"] * AUTH.retry_limit)
        self.assertEqual([p.retry for p in sent], [False, True, True])
        self.assertEqual(len({p.seq for p in sent}), 1)
        self.assertTrue(all(t.medium_loss for t in run.transmitted))
        self.assertEqual(system_state(AUTH, run.final), ("s12", "t1"))
        self.assertEqual(enabled_moves(AUTH, run.final), [])

    def test_receiver_acks_duplicate_but_delivers_once(self):
        run = run_schedule(AUTH, self.losing("CLIENT_ACK", first_only=True))
        kinds = [(t.packet.ptype, t.packet.retry) for t in run.transmitted]
        self.assertEqual(kinds[:4], [("AUTH_REQ", False), ("CLIENT_ACK", False),
                                     ("AUTH_REQ", True), ("CLIENT_ACK", False)])
        r1 = AUTH.index_of("R1")
        states = run.states
        deliveries = sum(1 for before, after in zip(states, states[1:])
                         if before.locations[r1] != "deliver" and after.locations[r1] == "deliver")
        self.assertEqual(deliveries, 1)
        self.assertEqual(system_state(AUTH, run.final), ("s4", "t4"))

    def test_resolver_exhaustion(self):
        with self.assertRaises(ScheduleError):
            run_schedule(AUTH, [])
        with self.assertRaises(ScheduleError):
            run_schedule(AUTH, lambda state, moves: len(moves))

    def test_format_run(self):
        text = format_run(AUTH, run_schedule(AUTH, first_choice))
        lines = text.splitlines()
        self.assertTrue(lines[0].startswith("initial "))
        self.assertIn("medium_loss=false", text)
        self.assertIn("packet AUTH_REQ(0->1 #0) lost=false sniffed=true", text)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(min_value=0, max_value=7), max_size=60))
    def test_replay_is_pure(self, choices):
        picks = iter(choices)

        def resolver(state, moves):
            return next(picks, 0) % len(moves)

        run = run_schedule(AUTH, resolver)
        again = replay(AUTH, run.initial, run.moves)
        self.assertEqual(again.final, run.final)
        self.assertEqual(again.transmitted, run.transmitted)


class TestAnalyzer(unittest.TestCase):

    def test_reachable_states_match_brute_force(self):
        self.assertEqual(reachable_states(AUTH), brute_force_reachable(AUTH))

    def test_policy_table_consistency(self):
        table = policy_table(AUTH)
        self.assertEqual(table.total, 6 * 5)
        self.assertEqual(set(table.reachable), reachable_states(AUTH))
        self.assertTrue(table.valid)
        self.assertGreater(table.loss_requiring_count, 0)
        self.assertIsNone(table.entries[("s0", "t3")])

    def test_schedule_for_unconfirmed_client(self):
        schedule = jamming_policy(AUTH, ("s1", "t3"))
        self.assertEqual([(e.packet.ptype, e.lost) for e in schedule.entries],
                         [("AUTH_REQ", False), ("CLIENT_ACK", True)])
        self.assertTrue(schedule.requires_loss)
        self.assertTrue(replay_reaches(AUTH, ("s1", "t3"), schedule))

    def test_schedules_replay_to_their_targets(self):
        for model in (AUTH, load("link_setup.model")):
            table = policy_table(model)
            for target in table.reachable:
                self.assertTrue(replay_reaches(model, target, table.entries[target]),
                                f"{model.name}: {target}")

    def test_unreachable_and_invalid_targets(self):
        self.assertIsNone(jamming_policy(AUTH, ("s0", "t3")))
        with self.assertRaises(ContractViolation):
            jamming_policy(AUTH, ("s0",))
        with self.assertRaises(ContractViolation):
            jamming_policy(AUTH, ("s0", "t99"))

    def test_budget_exhaustion_keeps_partial_table(self):
        with self.assertRaises(StateSpaceExceeded) as ctx:
            policy_table(AUTH, budget=10)
        partial = ctx.exception.partial
        self.assertFalse(partial.valid)
        self.assertIn(("s0", "t1"), partial.reachable)

    def test_table_serialization(self):
        table = policy_table(AUTH)
        text = dump_table(table, vocabulary=AUTH.vocabulary)
        self.assertEqual(text, dump_table(policy_table(AUTH), vocabulary=AUTH.vocabulary))
        data = json.loads(text)
        self.assertEqual(data["totals"]["reachable"], table.reachable_count)
        restored = table_from_dict(AUTH, data)
        self.assertEqual(restored.entries, table.entries)

    def test_system_state_text(self):
        self.assertEqual(format_system_state(AUTH, ("s1", "t3")), "<Client.s1, AP.t3>")
        self.assertEqual(parse_system_state(AUTH, "<Client.s1, AP.t3>"), ("s1", "t3"))
        self.assertEqual(parse_system_state(AUTH, "s1,t3"), ("s1", "t3"))


class TestCompilePolicy(unittest.TestCase):

    def setUp(self):
        v = LINK_SETUP_VOCABULARY
        self.req = v.make("AUTH_REQ", 0, 1)
        self.ack = v.make("CLIENT_ACK", 1, 0)
        self.resp = v.make("AUTH_RESP", 1, 0)

    def test_lost_ack_becomes_jam_next(self):
        schedule = LossSchedule((ScheduleEntry(self.req, False), ScheduleEntry(self.ack, True)))
        policy = compile_policy(schedule, vocabulary=LINK_SETUP_VOCABULARY)
        self.assertEqual(len(policy.entries), 1)
        self.assertEqual(policy.entries[0].actions, (JamAction.JAM_NEXT,))

    def test_identical_filters_are_grouped(self):
        schedule = LossSchedule((ScheduleEntry(self.req, True), ScheduleEntry(self.resp, False),
                                 ScheduleEntry(self.req, False)))
        policy = compile_policy(schedule)
        self.assertEqual([e.actions for e in policy.entries],
                         [(JamAction.JAM, JamAction.PASS), (JamAction.PASS,)])

    def test_leading_short_packet_is_passed_with_warning(self):
        schedule = LossSchedule((ScheduleEntry(self.ack, True),))
        with self.assertLogs("verifi.analyzer", level="WARNING"):
            policy = compile_policy(schedule)
        self.assertEqual(policy.entries, ())

    def test_empty_schedule(self):
        with self.assertRaises(ContractViolation):
            compile_policy(LossSchedule())

    def test_unexpressible_field(self):
        with self.assertRaises(PolicyCompileError) as ctx:
            packet_filter(self.req, max_header_bytes=3)
        self.assertEqual(ctx.exception.field, "retry")
        with self.assertRaises(PolicyCompileError) as ctx:
            packet_filter(LINK_SETUP_VOCABULARY.make("AUTH_REQ", 0, 300))
        self.assertEqual(ctx.exception.field, "dest")


if __name__ == '__main__':
    unittest.main()
