"""
One simulated link-setup session: client and AP on a shared medium with the
PacketSniper (or a random-loss medium) in line and an independent sniffer.
"""
import logging
import random
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Tuple

import simpy

from harness.config import SessionConfig
from harness.devices import AP_FINALS, CLIENT_FINALS, AccessPoint, Channel, Client
from harness.steering import Steering
from model.packet import Packet
from sniper.sniper import JamRecord, new_state, on_packet
from utils.errors import SessionError

logger = logging.getLogger("verifi.harness.session")

SystemState = Tuple[str, ...]


@dataclass(frozen=True)
class TraceRecord:
    """A transmitted packet with the ground-truth flags only the harness knows."""

    index: int
    packet: Packet
    t_us: float
    observed: bool = True
    received: bool = True
    jammed: bool = False


@dataclass(frozen=True)
class SnifferRecord:
    """A packet in the PacketSniper's log, with its own jam verdict."""

    index: int
    packet: Packet
    t_us: float
    jammed: bool = False


@dataclass(frozen=True)
class SessionResult:
    ground_truth: Tuple[TraceRecord, ...]
    trace: Tuple[SnifferRecord, ...]
    final_state: SystemState
    visited: FrozenSet[SystemState]
    deadlock: bool
    events: int
    jam_log: Tuple[JamRecord, ...] = ()

    @property
    def sniffer_losses(self) -> int:
        return sum(1 for r in self.ground_truth if not r.observed)


class Session:
    def __init__(self, config: SessionConfig):
        self.config = config
        self.env = simpy.Environment()
        seed = config.seed
        # independent streams so one probability does not shift another's draws
        self.backoff_rng = random.Random(f"{seed}/backoff")
        self.processing_rng = random.Random(f"{seed}/processing")
        self.sniffer_rng = random.Random(f"{seed}/sniffer")
        self.medium_rng = random.Random(f"{seed}/medium")
        self.sniper_rng = random.Random(f"{seed}/sniper")
        self.sniper_state = new_state(config.policy) if config.policy is not None else None
        self.steering = Steering(config.order)
        self.channel = Channel(self.env, self)
        self.client = Client(self)
        self.ap = AccessPoint(self)
        self.stations = {self.client.device_id: self.client, self.ap.device_id: self.ap}
        self.records: List[TraceRecord] = []
        self.visited = {self.system_state()}

    def system_state(self) -> SystemState:
        return (self.client.location, self.ap.location)

    def note_state(self) -> None:
        self.visited.add(self.system_state())

    def processing_delay(self) -> float:
        lo, hi = self.config.processing_us
        return self.processing_rng.uniform(lo, hi)

    def resolve_loss(self, packet: Packet, duration: float) -> Tuple[bool, bool]:
        """``(lost, jammed)`` for a packet starting now."""
        if self.sniper_state is not None:
            jammed, self.sniper_state = on_packet(self.sniper_state, packet, duration,
                                                  self.config.sniper, self.sniper_rng)
            return jammed, jammed
        if self.config.medium_loss_prob is not None:
            return self.medium_rng.random() < self.config.medium_loss_prob, False
        return False, False

    def record(self, packet: Packet, t_us: float, received: bool, jammed: bool) -> None:
        observed = True
        if self.config.sniffer_loss_prob > 0:
            observed = self.sniffer_rng.random() >= self.config.sniffer_loss_prob
        self.records.append(TraceRecord(len(self.records), packet, round(t_us, 2), observed, received, jammed))

    def is_final(self) -> bool:
        stage = self.config.stage
        return self.client.location in CLIENT_FINALS[stage] and self.ap.location in AP_FINALS[stage]

    def run(self) -> SessionResult:
        self.client.start()
        self.ap.start()
        events = 0
        while True:
            if self.env.peek() == simpy.core.Infinity:
                # nothing left but what the gate holds
                if not self.steering.open("devices stalled"):
                    break
                continue
            self.env.step()
            events += 1
            if events > self.config.max_events:
                raise SessionError(f"session exceeded {self.config.max_events} events "
                                   f"(seed {self.config.seed}, state {self.system_state()})")
        trace = []
        for record in self.records:
            if record.observed:
                trace.append(SnifferRecord(len(trace), record.packet, record.t_us, record.jammed))
        deadlock = not self.is_final()
        if deadlock:
            logger.info("Session (seed %d) quiesced in non-final state %s", self.config.seed, self.system_state())
        return SessionResult(
            ground_truth=tuple(self.records),
            trace=tuple(trace),
            final_state=self.system_state(),
            visited=frozenset(self.visited),
            deadlock=deadlock,
            events=events,
            jam_log=self.sniper_state.jam_log if self.sniper_state is not None else (),
        )


def run_session(config: SessionConfig) -> SessionResult:
    """Run one session to quiescence.

    Raises:
        SessionError: more than ``config.max_events`` simulation events
    """
    result = Session(config).run()
    logger.debug("Session seed=%d: %d packets, %d observed, final %s",
                 config.seed, len(result.ground_truth), len(result.trace), result.final_state)
    return result
