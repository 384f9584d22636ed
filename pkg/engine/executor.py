"""
Operational semantics of a ProtocolModel: the interleaved product of its
automata with two-party channel synchronisation.

Every function here is pure; states and moves are immutable and hashable so
they can be stored in visited sets and shared between workers.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union

from model.expressions import EvalEnv
from model.ir import RECEIVE, Automaton, ProtocolModel, Transition
from model.packet import Packet
from utils.errors import ContractViolation, ScheduleError

logger = logging.getLogger("verifi.engine.executor")

# Register the Medium reads the transmitted packet from
AIR_REGISTER = "pkt_in_air"
# The Medium's loss switch for the packet on the air
LOSS_REGISTER = "medium_loss"

LOCAL = "local"
SYNC = "sync"
EMIT_ONLY = "emit"

Bindings = Tuple[Tuple[str, int], ...]


@dataclass(frozen=True)
class CompositeState:
    locations: Tuple[str, ...]
    store: Tuple[Any, ...]


@dataclass(frozen=True)
class Step:
    """One automaton's share of a move."""

    automaton: int
    transition: int
    bindings: Bindings = ()


@dataclass(frozen=True)
class Move:
    """
    A local transition, a synchronised emit/receive pair, or a nonblocking
    emit with no receiver. Moves whose receiver is the Medium carry the
    loss switch; moves whose receiver is the Sniffer carry the observation
    switch.
    """

    kind: str
    emitter: Step
    receiver: Optional[Step] = None
    medium_loss: Optional[bool] = None
    sniffer_loss: Optional[bool] = None

    @property
    def carries_packet(self) -> bool:
        return self.medium_loss is not None


@dataclass(frozen=True)
class Transmission:
    packet: Packet
    medium_loss: bool
    sniffer_loss: Optional[bool] = None


@dataclass(frozen=True)
class Run:
    initial: CompositeState
    steps: Tuple[Tuple[Move, CompositeState], ...] = ()
    transmitted: Tuple[Transmission, ...] = ()

    @property
    def states(self) -> List[CompositeState]:
        return [self.initial] + [s for _, s in self.steps]

    @property
    def final(self) -> CompositeState:
        return self.steps[-1][1] if self.steps else self.initial

    @property
    def moves(self) -> List[Move]:
        return [m for m, _ in self.steps]


Resolver = Union[Sequence[int], Callable[[CompositeState, List[Move]], int]]


def initial_state(model: ProtocolModel) -> CompositeState:
    """Every automaton at its initial location, store at declared defaults."""
    return CompositeState(
        locations=tuple(a.initial for a in model.automata),
        store=model.default_store,
    )


def _binding_sets(t: Transition) -> Iterator[Bindings]:
    if not t.selects:
        yield ()
        return
    names = [s.name for s in t.selects]
    for values in itertools.product(*(s.values() for s in t.selects)):
        yield tuple(zip(names, values))


def _env(model: ProtocolModel, store, bindings: Bindings) -> EvalEnv:
    return EvalEnv(store, dict(bindings), model.vocabulary, model.bounds)


def _guard_holds(model: ProtocolModel, state: CompositeState, t: Transition, bindings: Bindings) -> bool:
    if t.guard is None:
        return True
    return bool(t.guard.eval(_env(model, state.store, bindings)))


def _channel_index(model: ProtocolModel, state: CompositeState, t: Transition, bindings: Bindings) -> Optional[int]:
    if t.sync.index is None:
        return None
    return t.sync.index.eval(_env(model, state.store, bindings))


def _switch(automaton: Automaton, bindings: Bindings) -> Optional[bool]:
    # first select value 0 means the packet is lost / unobserved
    if automaton.role not in ("medium", "sniffer") or not bindings:
        return None
    return bindings[0][1] == 0


def _receivers(model: ProtocolModel, state: CompositeState, emitter_index: int,
               channel: str, index: Optional[int]) -> List[Step]:
    found: List[Step] = []
    for b, automaton in enumerate(model.automata):
        if b == emitter_index:
            continue
        for ti, t in automaton.outgoing(state.locations[b]):
            if t.sync is None or t.sync.channel != channel or t.sync.direction != RECEIVE:
                continue
            for bindings in _binding_sets(t):
                if _channel_index(model, state, t, bindings) != index:
                    continue
                if _guard_holds(model, state, t, bindings):
                    found.append(Step(b, ti, bindings))
    return found


def enabled_moves(model: ProtocolModel, state: CompositeState) -> List[Move]:
    """
    All moves enabled in ``state``, ordered by emitter automaton, transition,
    binding, then receiver. An empty list means deadlock.
    """
    moves: List[Move] = []
    for a, automaton in enumerate(model.automata):
        for ti, t in automaton.outgoing(state.locations[a]):
            if t.sync is not None and t.sync.direction == RECEIVE:
                continue
            for bindings in _binding_sets(t):
                if not _guard_holds(model, state, t, bindings):
                    continue
                emitter = Step(a, ti, bindings)
                if t.sync is None:
                    moves.append(Move(LOCAL, emitter))
                    continue
                index = _channel_index(model, state, t, bindings)
                receivers = _receivers(model, state, a, t.sync.channel, index)
                for receiver in receivers:
                    owner = model.automata[receiver.automaton]
                    switch = _switch(owner, receiver.bindings)
                    moves.append(Move(
                        SYNC, emitter, receiver,
                        medium_loss=switch if owner.role == "medium" else None,
                        sniffer_loss=switch if owner.role == "sniffer" else None,
                    ))
                if not receivers and model.channel_map[t.sync.channel].nonblocking:
                    moves.append(Move(EMIT_ONLY, emitter))
    return moves


def _fire(model: ProtocolModel, state: CompositeState, move: Move) -> CompositeState:
    store = list(state.store)
    locations = list(state.locations)
    for step in (move.emitter, move.receiver):
        if step is None:
            continue
        t = model.automata[step.automaton].transitions[step.transition]
        env = _env(model, store, step.bindings)
        for update in t.updates:
            update.apply(env)
        locations[step.automaton] = t.target
    return CompositeState(tuple(locations), tuple(store))


def successors(model: ProtocolModel, state: CompositeState) -> List[Tuple[Move, CompositeState]]:
    """``(move, next_state)`` for every enabled move, in move order."""
    return [(move, _fire(model, state, move)) for move in enabled_moves(model, state)]


def apply_move(model: ProtocolModel, state: CompositeState, move: Move) -> CompositeState:
    """
    Fire ``move`` from ``state``; emitter updates are applied before receiver
    updates.

    Raises:
        ContractViolation: if ``move`` is not enabled in ``state``
    """
    if move not in enabled_moves(model, state):
        raise ContractViolation(f"move {describe_move(model, move)} is not enabled")
    return _fire(model, state, move)


def air_packet(model: ProtocolModel, state: CompositeState) -> Optional[Packet]:
    """The packet currently on the medium, if the model has a medium register."""
    slot = model.slots.get(AIR_REGISTER)
    if slot is None:
        return None
    return state.store[slot[0]]


def air_lost(model: ProtocolModel, state: CompositeState) -> Optional[bool]:
    """The loss switch of the packet on the medium, once the Medium has resolved it."""
    slot = model.slots.get(LOSS_REGISTER)
    if slot is None:
        return None
    return bool(state.store[slot[0]])


def system_state(model: ProtocolModel, state: CompositeState) -> Tuple[str, ...]:
    """Locations of the protocol-level automata only."""
    return tuple(state.locations[i] for i in model.protocol_indices)


def run_schedule(model: ProtocolModel, resolver: Resolver,
                 start: Optional[CompositeState] = None, max_steps: int = 100_000,
                 stop: Optional[Callable[[CompositeState], bool]] = None) -> Run:
    """
    Drive the model to quiescence, asking ``resolver`` whenever more than one
    move is enabled.

    ``resolver`` is either a sequence of move indices consumed in order or a
    callable ``(state, moves) -> index``. A ``stop`` predicate ends the run
    early at the first state satisfying it.

    Raises:
        ScheduleError: resolver exhausted, index out of range, or ``max_steps``
            reached before quiescence
    """
    state = start or initial_state(model)
    initial = state
    steps: List[Tuple[Move, CompositeState]] = []
    transmitted: List[Transmission] = []
    decisions = iter(resolver) if not callable(resolver) else None
    while stop is None or not stop(state):
        moves = enabled_moves(model, state)
        if not moves:
            break
        if len(steps) >= max_steps:
            raise ScheduleError(f"no quiescence after {max_steps} steps")
        if len(moves) == 1:
            choice = 0
        elif decisions is not None:
            choice = next(decisions, None)
            if choice is None:
                raise ScheduleError(f"resolver exhausted after {len(steps)} steps with {len(moves)} moves enabled")
        else:
            choice = resolver(state, moves)
        if not 0 <= choice < len(moves):
            raise ScheduleError(f"resolver chose move {choice} but only {len(moves)} are enabled")
        move = moves[choice]
        state = _fire(model, state, move)
        steps.append((move, state))
        if move.carries_packet:
            transmitted.append(Transmission(air_packet(model, state), move.medium_loss))
        elif move.sniffer_loss is not None and transmitted:
            last = transmitted[-1]
            transmitted[-1] = Transmission(last.packet, last.medium_loss, move.sniffer_loss)
    logger.debug("Run finished after %d steps, %d packets", len(steps), len(transmitted))
    return Run(initial, tuple(steps), tuple(transmitted))


def replay(model: ProtocolModel, initial: CompositeState, moves: Sequence[Move]) -> Run:
    """Re-apply ``moves`` from ``initial`` with full enabledness checks."""
    state = initial
    steps: List[Tuple[Move, CompositeState]] = []
    transmitted: List[Transmission] = []
    for move in moves:
        state = apply_move(model, state, move)
        steps.append((move, state))
        if move.carries_packet:
            transmitted.append(Transmission(air_packet(model, state), move.medium_loss))
        elif move.sniffer_loss is not None and transmitted:
            last = transmitted[-1]
            transmitted[-1] = Transmission(last.packet, last.medium_loss, move.sniffer_loss)
    return Run(initial, tuple(steps), tuple(transmitted))


def first_choice(state: CompositeState, moves: List[Move]) -> int:
    """Resolver taking the first enabled move except that packets are never lost."""
    for i, move in enumerate(moves):
        if move.medium_loss is False or move.sniffer_loss is False:
            return i
        if move.medium_loss is None and move.sniffer_loss is None:
            return i
    return 0


def describe_step(model: ProtocolModel, step: Step) -> str:
    automaton = model.automata[step.automaton]
    t = automaton.transitions[step.transition]
    text = f"{automaton.name}#{step.transition}({t.source}->{t.target})"
    if step.bindings:
        text += "[" + ",".join(f"{k}={v}" for k, v in step.bindings) + "]"
    return text


def describe_move(model: ProtocolModel, move: Move) -> str:
    text = f"{move.kind} {describe_step(model, move.emitter)}"
    if move.receiver is not None:
        text += f" > {describe_step(model, move.receiver)}"
    return text


def format_run(model: ProtocolModel, run: Run) -> str:
    """Line-oriented record of a run: one move per line."""
    lines = ["initial " + " ".join(run.initial.locations)]
    for i, (move, state) in enumerate(run.steps):
        switches = []
        if move.medium_loss is not None:
            switches.append(f"medium_loss={str(move.medium_loss).lower()}")
        if move.sniffer_loss is not None:
            switches.append(f"sniffer_loss={str(move.sniffer_loss).lower()}")
        line = f"{i} {describe_move(model, move)}"
        if switches:
            line += " " + " ".join(switches)
        lines.append(line)
    for packet in run.transmitted:
        sniffed = "?" if packet.sniffer_loss is None else str(not packet.sniffer_loss).lower()
        lines.append(f"packet {packet.packet} lost={str(packet.medium_loss).lower()} sniffed={sniffed}")
    return "\n".join(lines) + "\n"
