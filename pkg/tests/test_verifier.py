"""
Unit tests for sniffer-trace verification and coverage reports.
"""
import random
import unittest
import sys
import os

# Add the project root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from engine.analyzer import policy_table
from engine.executor import air_packet, apply_move, first_choice, replay, run_schedule
from harness.campaign import CampaignConfig, campaign
from harness.config import FaultFlag, SessionConfig
from harness.session import SnifferRecord, run_session
from model.packet import LINK_SETUP_VOCABULARY, Packet
from model.parser import parse_model
from sniper.filters import parse_filter
from sniper.sniper import JamAction, JammingPolicy, PolicyEntry
from tests.oracles import brute_force_min_losses, naive_accepts
from utils.errors import ContractViolation, StateSpaceExceeded
from verifier.report import (
    NO_VIOLATION, TraceVerification, coverage_report, format_report, verdict_label, verify_campaign,
)
from verifier.verifier import ACCEPTED, INCONCLUSIVE, REJECTED, VerifyConfig, minimal_k, search, verify_trace

MODEL_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'models')


def load(name):
    with open(os.path.join(MODEL_DIR, name), encoding='utf-8') as f:
        return parse_model(f.read())


AUTH = load("auth_stage.model")


def observed(run):
    return [t.packet for t in run.transmitted if t.sniffer_loss is False]


def lossless_trace():
    return [t.packet for t in run_schedule(AUTH, first_choice).transmitted]


def lose_first(ptype):
    """Resolver that drops the first ``ptype`` on the medium and never misses at the sniffer."""
    state = {"done": False}

    def resolver(current, moves):
        if not state["done"]:
            for i, move in enumerate(moves):
                if move.medium_loss is True and air_packet(AUTH, apply_move(AUTH, current, move)).ptype == ptype:
                    state["done"] = True
                    return i
        return first_choice(current, moves)

    return resolver


def random_resolver(seed, sniffer_loss=0.3, medium_loss=0.2):
    rng = random.Random(seed)

    def resolver(current, moves):
        switch = [m for m in moves if m.medium_loss is not None or m.sniffer_loss is not None]
        if switch and len(switch) == len(moves):
            p = medium_loss if moves[0].medium_loss is not None else sniffer_loss
            want_loss = rng.random() < p
            for i, move in enumerate(moves):
                if (move.medium_loss if move.medium_loss is not None else move.sniffer_loss) == want_loss:
                    return i
        return rng.randrange(len(moves))

    return resolver


class TestVerifyTrace(unittest.TestCase):

    def test_ack_missed_by_client_but_seen_by_sniffer(self):
        run = run_schedule(AUTH, lose_first("CLIENT_ACK"))
        trace = observed(run)
        kinds = [(p.ptype, p.retry) for p in trace]
        self.assertEqual(kinds[:3], [("AUTH_REQ", False), ("CLIENT_ACK", False), ("AUTH_REQ", True)])
        verdict = verify_trace(AUTH, trace, VerifyConfig(k=0))
        self.assertEqual(verdict.status, ACCEPTED)
        self.assertEqual(verdict.sniffer_losses_used, 0)
        self.assertFalse(naive_accepts(AUTH, trace))
        self.assertTrue(naive_accepts(AUTH, lossless_trace()))

    def test_witness_replays_and_matches_trace(self):
        trace = observed(run_schedule(AUTH, lose_first("CLIENT_ACK")))
        verdict = verify_trace(AUTH, trace)
        again = replay(AUTH, verdict.witness.initial, verdict.witness.moves)
        self.assertEqual([p.pattern for p in observed(again)], [p.pattern for p in trace])
        self.assertTrue(any(t.medium_loss for t in again.transmitted))

    def test_deleted_first_packet_needs_one_loss(self):
        trace = lossless_trace()[1:]
        self.assertEqual(verify_trace(AUTH, trace, VerifyConfig(k=0)).status, REJECTED)
        verdict = verify_trace(AUTH, trace, VerifyConfig(k=1))
        self.assertTrue(verdict.accepted)
        self.assertEqual(verdict.sniffer_losses_used, 1)
        self.assertEqual(minimal_k(AUTH, trace, 5), 1)
        self.assertEqual(minimal_k(AUTH, lossless_trace(), 5), 0)

    def test_strict_and_lenient_endpoints(self):
        truncated = lossless_trace()[:-1]
        self.assertEqual(verify_trace(AUTH, truncated, VerifyConfig(k=0)).status, REJECTED)
        self.assertTrue(verify_trace(AUTH, truncated, VerifyConfig(k=0, strict=False)).accepted)

    def test_declared_final_with_self_loop_is_accepted(self):
        looping = parse_model("model looping\nautomaton A() protocol\n  locations a, b\n  initial b\n"
                              "  final b\n  a -> b { }\n  b -> b { }\nend\n")
        self.assertEqual(verify_trace(looping, [], VerifyConfig(k=0)).status, ACCEPTED)
        busy = parse_model("model busy\nautomaton A() protocol\n  locations a, b\n  initial a\n"
                           "  final b\n  a -> a { }\nend\n")
        self.assertEqual(verify_trace(busy, [], VerifyConfig(k=0)).status, REJECTED)
        self.assertTrue(verify_trace(busy, [], VerifyConfig(k=0, strict=False)).accepted)

    def test_target_reach(self):
        trace = lossless_trace()
        reached = verify_trace(AUTH, trace, VerifyConfig(target=("s4", "t4")))
        self.assertTrue(reached.accepted)
        self.assertTrue(reached.reached_target)
        missed = verify_trace(AUTH, trace, VerifyConfig(target=("s12", "t1")))
        self.assertTrue(missed.accepted)
        self.assertFalse(missed.reached_target)
        self.assertIsNone(verify_trace(AUTH, trace).reached_target)

    def test_budget_exhaustion_is_inconclusive(self):
        trace = lossless_trace()
        self.assertEqual(verify_trace(AUTH, trace, VerifyConfig(k=0, budget=5)).status, INCONCLUSIVE)
        with self.assertRaises(StateSpaceExceeded):
            minimal_k(AUTH, trace, 3, budget=5)

    def test_foreign_packet_type(self):
        with self.assertRaises(ContractViolation):
            verify_trace(AUTH, [Packet("BEACON", 1, 0)])
        with self.assertRaises(ContractViolation):
            search(AUTH, lossless_trace(), -1)

    def test_agrees_with_brute_force(self):
        for seed in range(12):
            run = run_schedule(AUTH, random_resolver(seed))
            trace = observed(run)
            result = search(AUTH, trace, 2)
            self.assertEqual(result.accept_k, brute_force_min_losses(AUTH, trace, 2), f"seed {seed}")
            truth = sum(1 for t in run.transmitted if t.sniffer_loss)
            if truth <= 2:
                self.assertIsNotNone(result.accept_k)
                self.assertLessEqual(result.accept_k, truth)

    def test_acceptance_is_monotonic_in_k(self):
        for seed in range(8):
            trace = observed(run_schedule(AUTH, random_resolver(seed, sniffer_loss=0.5)))
            result = search(AUTH, trace, 4)
            accepted = [result.verdict(k).accepted for k in range(5)]
            self.assertEqual(accepted, sorted(accepted), f"seed {seed}")


class TestSessionTraces(unittest.TestCase):

    def test_faithful_sessions_need_at_most_their_losses(self):
        for seed in range(10):
            result = run_session(SessionConfig(stage="auth", seed=seed, sniffer_loss_prob=0.3))
            m = result.sniffer_losses
            found = minimal_k(AUTH, result.trace, m)
            self.assertIsNotNone(found, f"seed {seed}")
            self.assertLessEqual(found, m)


class TestViolations(unittest.TestCase):
    """Each injected fault under its triggering policy, verified at kmax."""

    KMAX = 10

    @classmethod
    def setUpClass(cls):
        cls.model = load("link_setup.model")

    def policy(self, header, *actions):
        return JammingPolicy((PolicyEntry(parse_filter(f"header == {header}"), actions),))

    def status(self, result):
        return verify_trace(self.model, result.trace, VerifyConfig(k=self.KMAX)).status

    def check(self, fault, base):
        correct = run_session(SessionConfig(**base))
        faulty = run_session(SessionConfig(faults={fault}, **base))
        self.assertEqual(self.status(correct), ACCEPTED)
        self.assertEqual(self.status(faulty), REJECTED)
        return faulty

    def test_assoc_without_auth(self):
        # the client's ACKs of AUTH_RESP and both retransmissions
        policy = self.policy("D5:00:01:00:00", JamAction.JAM, JamAction.JAM, JamAction.JAM)
        faulty = self.check(FaultFlag.ASSOC_WITHOUT_AUTH, dict(policy=policy, processing_us=(1000.0, 1000.0)))
        self.assertTrue(any(r.jammed for r in faulty.trace))

    def test_dot1x_deadlock(self):
        # the first client ACK passes, then ASSOC_RESP's ACKs are jammed
        policy = self.policy("D5:00:01:00:00", JamAction.PASS, JamAction.JAM, JamAction.JAM, JamAction.JAM)
        faulty = self.check(FaultFlag.DOT1X_DEADLOCK, dict(policy=policy))
        self.assertEqual(faulty.final_state, ("s8", "t9"))

    def test_double_association(self):
        policy = self.policy("D4:01:00:00:00", JamAction.PASS, JamAction.JAM, JamAction.JAM, JamAction.JAM)
        for seed in range(10):
            base = dict(policy=policy, seed=seed, processing_us=(10.0, 10.0))
            faulty = run_session(SessionConfig(faults={FaultFlag.DOUBLE_ASSOCIATION}, **base))
            fresh = [r for r in faulty.ground_truth if r.packet.ptype == "ASSOC_REQ" and not r.packet.retry]
            if len(fresh) > 1:
                self.check(FaultFlag.DOUBLE_ASSOCIATION, base)
                return
        self.fail("no session manifested the double association")

    def test_faults_stay_hidden_without_jamming(self):
        faults = set(FaultFlag)
        for seed in range(3):
            result = run_session(SessionConfig(seed=seed, faults=faults))
            self.assertEqual(self.status(result), ACCEPTED)
            self.assertEqual(verify_trace(self.model, result.trace, VerifyConfig(k=0)).status, ACCEPTED)

    def test_jam_log_pins_medium_loss(self):
        policy = self.policy("D5:00:01:00:00", JamAction.JAM, JamAction.JAM, JamAction.JAM)
        result = run_session(SessionConfig(policy=policy, processing_us=(1000.0, 1000.0),
                                           faults={FaultFlag.ASSOC_WITHOUT_AUTH}))
        unflagged = [SnifferRecord(r.index, r.packet, r.t_us) for r in result.trace]
        # without the jam verdicts the run reads as an ordinary association
        self.assertEqual(verify_trace(self.model, unflagged, VerifyConfig(k=0)).status, ACCEPTED)
        self.assertEqual(verify_trace(self.model, result.trace, VerifyConfig(k=0)).status, REJECTED)


class TestReport(unittest.TestCase):

    def verified(self):
        full = lossless_trace()
        traces = {
            "clean": full,
            "one_missed": full[1:],
            "two_missed": full[1:2] + full[3:],
            "foreign": full + [LINK_SETUP_VOCABULARY.make("AUTH_REQ", 1, 0)],
        }
        return [TraceVerification(name, ("s4", "t4"), "<Client.s4, AP.t4>", search(AUTH, t, 4, ("s4", "t4")))
                for name, t in traces.items()]

    def test_counts_per_k(self):
        report = coverage_report(self.verified(), [0, 1, 2, 4])
        accepted = [report.row(k)["accepted"] for k in report.k_list]
        self.assertEqual(accepted, sorted(accepted))
        self.assertEqual(report.row(0)["accepted"], 1)
        self.assertEqual(report.row(0)["rejected"], 3)
        self.assertEqual(report.row(2)["accepted"], 3)
        self.assertEqual(report.row(4)["rejected"], 1)
        self.assertEqual(report.row(4)["reached"], 3)
        self.assertEqual(report.reach_matrix["<Client.s4, AP.t4>"], {0: 1, 1: 2, 2: 3, 4: 3})

    def test_rejected_ranking(self):
        report = coverage_report(self.verified(), [0, 4])
        self.assertEqual(report.rejected, [("foreign", None), ("two_missed", 2), ("one_missed", 1)])

    def test_wording(self):
        report = coverage_report(self.verified(), [0, 4])
        text = format_report(report)
        self.assertIn(NO_VIOLATION, text)
        for column in ("Accepted", "Rejected", "Reached", "k=0", "k=4"):
            self.assertIn(column, text)
        self.assertEqual(verdict_label(ACCEPTED), "no violation observed")
        self.assertEqual(verdict_label(REJECTED), "violation")
        self.assertEqual(report.to_dict()["accepted_label"], NO_VIOLATION)

    def test_verify_guided_campaign(self):
        result = campaign(AUTH, policy_table(AUTH), 1)
        verified = verify_campaign(AUTH, result, 2, workers=2)
        self.assertEqual(len(verified), len(result.outcomes))
        self.assertTrue(all(tv.name.endswith("#0") for tv in verified))
        report = coverage_report(verified, [0, 2])
        self.assertLessEqual(report.row(2)["reached"], report.row(2)["accepted"])
        self.assertGreater(report.row(0)["accepted"], 0)

    def test_lossy_sniffer_trend(self):
        lossy = campaign(AUTH, policy_table(AUTH), 2, CampaignConfig(seed=1, sniffer_loss_prob=0.3))
        report = coverage_report(verify_campaign(AUTH, lossy, 4), [0, 2, 4])
        rejected = [report.row(k)["rejected"] for k in report.k_list]
        accepted = [report.row(k)["accepted"] for k in report.k_list]
        self.assertEqual(rejected, sorted(rejected, reverse=True))
        self.assertEqual(accepted, sorted(accepted))
        self.assertGreater(rejected[0], rejected[-1])

    def test_all_clean_campaign(self):
        clean = [TraceVerification(f"t{i}", None, "baseline", search(AUTH, lossless_trace(), 0)) for i in range(3)]
        report = coverage_report(clean, [0])
        self.assertEqual(report.row(0)["rejected"], 0)
        self.assertEqual(report.rejected, [])


if __name__ == '__main__':
    unittest.main()
