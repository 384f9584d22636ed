"""
Executable client and AP implementations on a simpy event loop.

These are written as event handlers, independently of the model automata, so
that injected faults are code-level deviations the verifier has to catch.
Location names follow the bundled model (client s0..s12, AP t1..t17).

Handlers return a Reaction (next location plus follow-up). Accepting a
packet, reporting a transmit outcome, delivering a received packet and
starting a data transmission all pass through the session's Steering gate.
"""
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Dict, Optional

import simpy

from harness.config import FaultFlag
from model.packet import Packet
from sniper.timing import airtime

if TYPE_CHECKING:
    from harness.session import Session

logger = logging.getLogger("verifi.harness.devices")

# 802.11a/g OFDM MAC timing, µs
SLOT_US = 9.0
SIFS_US = 16.0
DIFS_US = SIFS_US + 2 * SLOT_US
CW_SLOTS = 15
ACK_TIMEOUT_US = SIFS_US + 44.0 + SLOT_US
SEQ_MOD = 4

DATA_PRIORITY = 1
ACK_PRIORITY = 0

CLIENT_ID = 0
AP_ID = 1

CLIENT_FINALS = {"full": ("s11", "s12"), "auth": ("s4", "s12")}
AP_FINALS = {"full": ("t12", "t16", "t17"), "auth": ("t4", "t5")}
# AP locations at which no authentication has been confirmed
AP_UNAUTHENTICATED = ("t1", "t5")


@dataclass(frozen=True)
class Reaction:
    """Move to ``target`` (None: stay), then run ``then``."""

    target: Optional[str] = None
    then: Optional[Callable[[], None]] = None


class Channel:
    """The shared medium: carrier sense, in-line jammer or random loss, sniffer tap."""

    def __init__(self, env: simpy.Environment, session: "Session"):
        self.env = env
        self.session = session
        self.resource = simpy.PriorityResource(env, capacity=1)

    def transmit(self, packet: Packet):
        duration = airtime(packet)
        lost, jammed = self.session.resolve_loss(packet, duration)
        self.session.record(packet, self.env.now, received=not lost, jammed=jammed)
        yield self.env.timeout(duration)
        if not lost:
            # delivered while the sender still holds the medium, so an ACK
            # request is queued ahead of any waiting data
            self.session.stations[packet.dest].mac.on_receive(packet)


class MacLayer:
    """Stop-and-wait transmitter and ACKing, de-duplicating receiver of one device."""

    def __init__(self, env: simpy.Environment, session: "Session", device_id: int, ack_type: str):
        self.env = env
        self.session = session
        self.device_id = device_id
        self.ack_type = ack_type
        self.seq = 0
        self.slot = simpy.Resource(env, capacity=1)
        self.ack_event: Optional[simpy.Event] = None
        self.rx_last: Dict[int, int] = {}
        self.owner: Optional["Station"] = None

    # transmit side -------------------------------------------------------
    def submit(self, packet: Packet, then: str):
        """Hand a packet to the transmitter once it is idle; the owner moves to ``then``."""
        req = self.slot.request()
        yield req

        def accept() -> None:
            self.owner.react(Reaction(then))
            self.env.process(self._transmit(packet, req))

        self.session.steering.submit(("accept", self.device_id), accept)

    def _transmit(self, packet: Packet, req):
        channel = self.session.channel
        pkt = replace(packet, src=self.device_id, seq=self.seq, retry=False)
        ok = False
        for attempt in range(1, self.session.config.retry_limit + 1):
            if attempt > 1:
                pkt = pkt.as_retry()
            yield self.env.timeout(DIFS_US + self.session.backoff_rng.randint(0, CW_SLOTS) * SLOT_US)
            turn = self.env.event()
            self.session.steering.submit(("tx", self.device_id, pkt.ptype, pkt.retry), turn.succeed)
            if not turn.triggered:
                yield turn
            self.ack_event = self.env.event()
            with channel.resource.request(priority=DATA_PRIORITY) as medium:
                yield medium
                yield from channel.transmit(pkt)
            timeout = self.env.timeout(ACK_TIMEOUT_US)
            outcome = yield self.ack_event | timeout
            if self.ack_event in outcome:
                ok = True
                break
            logger.debug("Device %d: no ACK for %s (attempt %d)", self.device_id, pkt, attempt)
        self.ack_event = None
        self.seq = (self.seq + 1) % SEQ_MOD

        def report() -> None:
            self.slot.release(req)
            self.owner.react(self.owner.on_tx_done(ok))

        self.session.steering.submit(("done", self.device_id, ok), report)

    # receive side --------------------------------------------------------
    def on_receive(self, packet: Packet) -> None:
        vocabulary = self.session.config.vocabulary
        if vocabulary.get(packet.ptype).ack:
            if self.ack_event is not None and not self.ack_event.triggered:
                self.ack_event.succeed()
            return
        medium = self.session.channel.resource.request(priority=ACK_PRIORITY)
        self.env.process(self._ack_and_deliver(packet, medium))

    def _ack_and_deliver(self, packet: Packet, medium):
        channel = self.session.channel
        yield medium
        yield self.env.timeout(SIFS_US)
        ack = self.session.config.vocabulary.make(self.ack_type, self.device_id, packet.src)
        yield from channel.transmit(ack)
        channel.resource.release(medium)
        if packet.retry and self.rx_last.get(packet.src) == packet.seq:
            logger.debug("Device %d: duplicate %s dropped", self.device_id, packet)
            return
        self.rx_last[packet.src] = packet.seq
        owner = self.owner
        self.session.steering.submit(("rx", self.device_id), lambda: owner.react(owner.on_receive(packet)))


class Station:
    """Upper-layer state machine of one device."""

    initial = ""

    def __init__(self, session: "Session", device_id: int, peer: int, ack_type: str):
        self.session = session
        self.env = session.env
        self.device_id = device_id
        self.peer = peer
        self.location = self.initial
        self.mac = MacLayer(self.env, session, device_id, ack_type)
        self.mac.owner = self

    @property
    def faults(self):
        return self.session.config.faults

    @property
    def stage(self) -> str:
        return self.session.config.stage

    def goto(self, location: str) -> None:
        logger.debug("Device %d: %s -> %s at %.1f us", self.device_id, self.location, location, self.env.now)
        self.location = location
        self.session.note_state()

    def react(self, reaction: Optional[Reaction]) -> None:
        if reaction is None:
            return
        if reaction.target is not None and reaction.target != self.location:
            self.goto(reaction.target)
        if reaction.then is not None:
            reaction.then()

    def send(self, ptype: str, then: str) -> None:
        """After the processing delay, hand ``ptype`` to the MAC and move to ``then``."""
        self.env.process(self._send(ptype, then))

    def _send(self, ptype: str, then: str):
        yield self.env.timeout(self.session.processing_delay())
        packet = self.session.config.vocabulary.make(ptype, self.device_id, self.peer)
        yield from self.mac.submit(packet, then)

    def start(self) -> None:
        pass

    def on_receive(self, packet: Packet) -> Optional[Reaction]:
        raise NotImplementedError

    def on_tx_done(self, ok: bool) -> Optional[Reaction]:
        raise NotImplementedError


class Client(Station):
    initial = "s0"

    def __init__(self, session: "Session"):
        super().__init__(session, CLIENT_ID, AP_ID, "AP_ACK")
        self.restarted = False
        self.requeued = False

    def start(self) -> None:
        self.send("AUTH_REQ", "s1")

    def on_receive(self, packet: Packet) -> Optional[Reaction]:
        kind, loc = packet.ptype, self.location
        if kind == "AUTH_RESP" and loc == "s1":
            return Reaction("s3")
        if kind == "AUTH_RESP" and loc == "s2":
            return self._authenticated()
        if self.stage == "auth":
            return None
        if kind == "ASSOC_RESP" and loc == "s5":
            return Reaction("s7")
        if kind == "ASSOC_RESP" and loc == "s6":
            return Reaction("s8")
        if kind == "EAPOL_1" and loc == "s8":
            return Reaction("s9", lambda: self.send("EAPOL_2", "s10"))
        if kind == "EAPOL_3" and loc == "s10":
            return Reaction("s11")
        return None

    def on_tx_done(self, ok: bool) -> Optional[Reaction]:
        loc = self.location
        if loc == "s1":
            if ok:
                return Reaction("s2")
            if self.session.config.internal_queueing and not self.requeued:
                return Reaction(then=self._requeue)
            return self._fail()
        if loc == "s3":
            return self._authenticated()
        if loc == "s5":
            return Reaction("s6") if ok else self._fail()
        if loc == "s7":
            if not ok and FaultFlag.DOUBLE_ASSOCIATION in self.faults:
                return Reaction("s4", lambda: self.send("ASSOC_REQ", "s5"))
            return Reaction("s8")
        if loc == "s10" and not ok:
            return self._fail()
        return None

    def _requeue(self) -> None:
        # a fresh authentication round queued behind the failed one
        self.requeued = True
        self.send("AUTH_REQ", "s1")

    def _authenticated(self) -> Reaction:
        if self.stage == "full":
            return Reaction("s4", lambda: self.send("ASSOC_REQ", "s5"))
        return Reaction("s4")

    def _fail(self) -> Reaction:
        return Reaction("s12", self._maybe_restart)

    def _maybe_restart(self) -> None:
        if self.session.config.client_restart_on_failure and not self.restarted:
            self.restarted = True
            self.goto("s0")
            self.send("AUTH_REQ", "s1")


class AccessPoint(Station):
    initial = "t1"

    def __init__(self, session: "Session"):
        super().__init__(session, AP_ID, CLIENT_ID, "CLIENT_ACK")

    def on_receive(self, packet: Packet) -> Optional[Reaction]:
        kind, loc = packet.ptype, self.location
        if kind == "AUTH_REQ" and loc == "t1":
            return Reaction("t2", lambda: self.send("AUTH_RESP", "t3"))
        if self.stage == "auth":
            return None
        if kind == "ASSOC_REQ" and (loc == "t4" or (loc in AP_UNAUTHENTICATED
                                                    and FaultFlag.ASSOC_WITHOUT_AUTH in self.faults)):
            return Reaction("t6", lambda: self.send("ASSOC_RESP", "t7"))
        if kind == "EAPOL_2" and loc == "t10":
            return Reaction("t13")
        if kind == "EAPOL_2" and loc == "t11":
            return Reaction("t14", lambda: self.send("EAPOL_3", "t15"))
        return None

    def on_tx_done(self, ok: bool) -> Optional[Reaction]:
        loc = self.location
        if loc == "t3":
            return Reaction("t4" if ok else "t5")
        if loc == "t7":
            if ok:
                return Reaction("t8", lambda: self.send("EAPOL_1", "t10"))
            if FaultFlag.DOT1X_DEADLOCK in self.faults:
                # association counted as failed: tear the client down, never start 802.1X
                return Reaction("t9", lambda: self.send("DEAUTH", "t9"))
            return Reaction("t9", lambda: self.send("EAPOL_1", "t10"))
        if loc == "t10":
            return Reaction("t11" if ok else "t12")
        if loc == "t13":
            return Reaction("t14", lambda: self.send("EAPOL_3", "t15"))
        if loc == "t15":
            return Reaction("t16" if ok else "t17")
        return None
