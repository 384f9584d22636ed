"""
Witness-ordered scheduling of the simulated devices' internal choices.

A real client or AP decides on its own in which order it accepts a packet
from the handshake, reports a transmit outcome, hands a received packet up,
or starts its next transmission; the jammer only decides which packets get
lost. A guided session knows the model run its jamming policy was cut from,
so the devices hold each of those events at a Steering gate, which lets them
through in the order of that run. Once the run is used up, or the devices
stall on something it does not contain, the gate opens and everything
proceeds in arrival order.

Keys: ``("accept", device)``, ``("done", device, ok)``, ``("rx", device)``
and ``("tx", src, ptype, retry)`` for the start of a data transmission.
"""
import logging
from typing import Any, Callable, List, Sequence, Tuple

from engine.analyzer import LossSchedule
from engine.executor import Move, air_packet, run_schedule, system_state
from model.ir import ProtocolModel
from utils.errors import ScheduleError

logger = logging.getLogger("verifi.harness.steering")

Key = Tuple[Any, ...]

# MAC/upper-layer channels of the stdlib and the key each one maps to
_EVENTS = {"mac_tx_start": "accept", "mac_tx_done": "done", "mac_rx_end": "rx"}


def _event_key(model: ProtocolModel, move: Move) -> Any:
    automaton = model.automata[move.emitter.automaton]
    transition = automaton.transitions[move.emitter.transition]
    if transition.sync is None or transition.sync.channel not in _EVENTS:
        return None
    kind = _EVENTS[transition.sync.channel]
    device = dict(automaton.params)["id"]
    if kind == "done":
        return (kind, device, transition.source == "ok")
    return (kind, device)


def witness_order(model: ProtocolModel, schedule: LossSchedule, target: Tuple[str, ...]) -> Tuple[Key, ...]:
    """Steering keys of the run ``schedule`` was extracted from, up to ``target``."""
    try:
        run = run_schedule(model, list(schedule.decisions), stop=lambda s: system_state(model, s) == target)
    except ScheduleError as e:
        logger.warning("No witness run to steer by for %s: %s", target, e)
        return ()
    order: List[Key] = []
    for move, state in run.steps:
        if move.carries_packet:
            packet = air_packet(model, state)
            if not model.vocabulary.get(packet.ptype).ack:
                order.append(("tx", packet.src, packet.ptype, packet.retry))
            continue
        key = _event_key(model, move)
        if key is not None:
            order.append(key)
    return tuple(order)


class Steering:
    """Gate releasing device actions in a fixed key order."""

    def __init__(self, order: Sequence[Key] = ()):
        self.order = tuple(tuple(k) for k in order)
        self.position = 0
        self.following = bool(self.order)
        self.held: List[Tuple[Key, Callable[[], None]]] = []

    @property
    def completed(self) -> bool:
        return self.position == len(self.order)

    def submit(self, key: Key, action: Callable[[], None]) -> None:
        """Run ``action`` now, or once ``key`` is next in the order."""
        if not self.following:
            action()
            return
        self.held.append((key, action))
        self._drain()

    def _drain(self) -> None:
        progressed = True
        while progressed and self.following:
            progressed = False
            for i, (key, action) in enumerate(self.held):
                if key != self.order[self.position]:
                    continue
                del self.held[i]
                self.position += 1
                action()
                if self.completed:
                    self.open("witness complete")
                progressed = True
                break

    def open(self, reason: str) -> bool:
        """Stop following; run whatever is held in arrival order. True if anything was held."""
        if self.following and not self.completed:
            logger.debug("Steering left the witness at %d/%d (%s)", self.position, len(self.order), reason)
        self.following = False
        held, self.held = self.held, []
        for _, action in held:
            action()
        return bool(held)
