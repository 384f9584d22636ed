"""
Reachability analysis over the product state space and extraction of loss
schedules (jamming policies) for every reachable system state.

Exploration is a 0-1 breadth-first search: moves that put a packet on the
medium cost 1, every other move costs 0. The first time a system state is
settled its witness therefore uses the fewest transmitted packets, with ties
broken by the executor's move order. Sniffer-miss moves are not explored;
they never change protocol state.
"""
import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from engine.executor import (
    CompositeState, Move, air_packet, enabled_moves, initial_state, successors, system_state,
)
from model.ir import ProtocolModel
from model.packet import HEADER_OFFSETS, Packet, SUPPORTED_RATES
from sniper.filters import AttrCmp, HeaderMatch, JammingFilter, print_filter
from sniper.sniper import JamAction, JammingPolicy, PolicyEntry
from utils.errors import ContractViolation, PolicyCompileError, StateSpaceExceeded

logger = logging.getLogger("verifi.analyzer")

DEFAULT_BUDGET = 1_000_000
DEFAULT_SHORT_PACKET_THRESHOLD = 14

SystemState = Tuple[str, ...]


@dataclass(frozen=True)
class ScheduleEntry:
    packet: Packet
    lost: bool


@dataclass(frozen=True)
class LossSchedule:
    """
    Per-packet pass/drop decisions of a witness run, in transmission order.

    ``decisions`` replays the witness through ``run_schedule``: one move
    index for every step at which more than one move was enabled.
    """

    entries: Tuple[ScheduleEntry, ...] = ()
    decisions: Tuple[int, ...] = ()

    @property
    def requires_loss(self) -> bool:
        return any(e.lost for e in self.entries)

    @property
    def packet_count(self) -> int:
        return len(self.entries)


@dataclass
class PolicyTable:
    model_name: str
    automata: Tuple[str, ...]
    entries: Dict[SystemState, Optional[LossSchedule]] = field(default_factory=dict)
    total: int = 0
    explored: int = 0
    valid: bool = True

    @property
    def reachable(self) -> List[SystemState]:
        return [s for s, sched in self.entries.items() if sched is not None]

    @property
    def reachable_count(self) -> int:
        return len(self.reachable)

    @property
    def loss_requiring_count(self) -> int:
        return sum(1 for s in self.entries.values() if s is not None and s.requires_loss)


@dataclass
class _Exploration:
    witnesses: Dict[SystemState, CompositeState]
    parents: Dict[CompositeState, Tuple[Optional[CompositeState], Optional[Move]]]
    explored: int
    complete: bool


def _explore(model: ProtocolModel, budget: int, target: Optional[SystemState] = None) -> _Exploration:
    start = initial_state(model)
    dist: Dict[CompositeState, int] = {start: 0}
    parents: Dict[CompositeState, Tuple[Optional[CompositeState], Optional[Move]]] = {start: (None, None)}
    witnesses: Dict[SystemState, CompositeState] = {}
    queue = deque([(0, start)])
    while queue:
        cost, state = queue.popleft()
        if cost > dist[state]:
            continue
        projected = system_state(model, state)
        if projected not in witnesses:
            witnesses[projected] = state
            if projected == target:
                return _Exploration(witnesses, parents, len(dist), False)
        for move, nxt in successors(model, state):
            if move.sniffer_loss:
                continue
            step_cost = 1 if move.carries_packet else 0
            new_cost = cost + step_cost
            if nxt in dist and dist[nxt] <= new_cost:
                continue
            dist[nxt] = new_cost
            parents[nxt] = (state, move)
            if step_cost:
                queue.append((new_cost, nxt))
            else:
                queue.appendleft((new_cost, nxt))
            if len(dist) > budget:
                partial = _Exploration(witnesses, parents, len(dist), False)
                raise StateSpaceExceeded(budget, partial)
    logger.info("Explored %d composite states, %d system states reachable", len(dist), len(witnesses))
    return _Exploration(witnesses, parents, len(dist), True)


def _schedule(model: ProtocolModel, exploration: _Exploration, state: CompositeState) -> LossSchedule:
    path: List[Tuple[CompositeState, Move, CompositeState]] = []
    current = state
    while True:
        prev, move = exploration.parents[current]
        if prev is None:
            break
        path.append((prev, move, current))
        current = prev
    path.reverse()
    entries: List[ScheduleEntry] = []
    decisions: List[int] = []
    for prev, move, nxt in path:
        moves = enabled_moves(model, prev)
        if len(moves) > 1:
            decisions.append(moves.index(move))
        if move.carries_packet:
            entries.append(ScheduleEntry(air_packet(model, nxt), move.medium_loss))
    return LossSchedule(tuple(entries), tuple(decisions))


def _check_target(model: ProtocolModel, target: SystemState) -> None:
    indices = model.protocol_indices
    if len(target) != len(indices):
        raise ContractViolation(f"system state {target} needs {len(indices)} locations")
    for i, loc in zip(indices, target):
        if loc not in model.automata[i].locations:
            raise ContractViolation(f"'{loc}' is not a location of {model.automata[i].name}")


def reachable_states(model: ProtocolModel, budget: int = DEFAULT_BUDGET) -> set:
    """Every SystemState occurring in some reachable CompositeState.

    Raises:
        StateSpaceExceeded: more than ``budget`` composite states stored
    """
    return set(_explore(model, budget).witnesses)


def jamming_policy(model: ProtocolModel, target: SystemState,
                   budget: int = DEFAULT_BUDGET) -> Optional[LossSchedule]:
    """Loss schedule of a minimal-packet witness reaching ``target``, or None if unreachable."""
    _check_target(model, target)
    exploration = _explore(model, budget, target)
    state = exploration.witnesses.get(target)
    if state is None:
        logger.info("Target %s is not reachable", format_system_state(model, target))
        return None
    return _schedule(model, exploration, state)


def all_system_states(model: ProtocolModel) -> List[SystemState]:
    """Product of the protocol automata's locations, in declaration order."""
    return list(itertools.product(*(model.automata[i].locations for i in model.protocol_indices)))


def policy_table(model: ProtocolModel, budget: int = DEFAULT_BUDGET) -> PolicyTable:
    """
    Loss schedule for every product SystemState from a single exploration.

    Raises:
        StateSpaceExceeded: carries the partial table with ``valid=False``
    """
    names = tuple(model.automata[i].name for i in model.protocol_indices)
    table = PolicyTable(model.name, names)
    product = all_system_states(model)
    table.total = len(product)
    try:
        exploration = _explore(model, budget)
    except StateSpaceExceeded as e:
        partial = e.partial
        table.valid = False
        table.explored = partial.explored
        for target in product:
            state = partial.witnesses.get(target)
            table.entries[target] = None if state is None else _schedule(model, partial, state)
        e.partial = table
        raise
    table.explored = exploration.explored
    for target in product:
        state = exploration.witnesses.get(target)
        table.entries[target] = None if state is None else _schedule(model, exploration, state)
    logger.info("Policy table for %s: %d/%d reachable, %d need packet loss",
                model.name, table.reachable_count, table.total, table.loss_requiring_count)
    return table


# ---------------------------------------------------------------------------
# Policy compilation


def is_short(packet: Packet, threshold: int, vocabulary=None) -> bool:
    if vocabulary is not None and packet.ptype in vocabulary and vocabulary.get(packet.ptype).ack:
        return True
    return packet.length <= threshold


def packet_filter(packet: Packet, max_header_bytes: int = 10) -> JammingFilter:
    """Header-prefix filter on the fields a model fixes plus exact length and rate."""
    values = {
        "type": packet.code,
        "src": packet.src,
        "dest": packet.dest,
        "seq": packet.seq,
        "retry": 1 if packet.retry else 0,
    }
    width = max(HEADER_OFFSETS.values()) + 1
    if width > max_header_bytes:
        raise PolicyCompileError("retry", f"needs {width} header bytes but only {max_header_bytes} are decoded")
    pattern: List[Optional[int]] = [None] * width
    for name, value in values.items():
        if not 0 <= value <= 0xFF:
            raise PolicyCompileError(name, f"value {value} does not fit one header byte")
        pattern[HEADER_OFFSETS[name]] = value
    if packet.rate not in SUPPORTED_RATES:
        raise PolicyCompileError("rate", f"unsupported rate {packet.rate} Mbps")
    if packet.length < 0:
        raise PolicyCompileError("length", f"negative length {packet.length}")
    return JammingFilter((
        HeaderMatch(tuple(pattern)),
        AttrCmp("length", ">=", packet.length),
        AttrCmp("length", "<=", packet.length),
        AttrCmp("rate", ">=", packet.rate),
        AttrCmp("rate", "<=", packet.rate),
    ))


def compile_policy(schedule: LossSchedule, short_packet_threshold: int = DEFAULT_SHORT_PACKET_THRESHOLD,
                   max_header_bytes: int = 10, vocabulary=None, target: str = "") -> JammingPolicy:
    """
    Turn a loss schedule into filter -> action-list entries.

    A lost short packet (ACK class) cannot be decoded in time, so it becomes
    JamNext on the entry of the packet that precedes it.

    Raises:
        ContractViolation: empty schedule
        PolicyCompileError: a packet field cannot be expressed as a filter
    """
    if not schedule.entries:
        raise ContractViolation("cannot compile an empty loss schedule")
    order: List[JammingFilter] = []
    actions: Dict[JammingFilter, List[JamAction]] = {}
    previous: Optional[Tuple[JammingFilter, int]] = None
    for entry in schedule.entries:
        flt = packet_filter(entry.packet, max_header_bytes)
        if entry.lost and is_short(entry.packet, short_packet_threshold, vocabulary):
            if previous is None:
                logger.warning("Short packet %s cannot be jammed without a preceding packet; passing it",
                               entry.packet)
            else:
                prev_filter, slot = previous
                actions[prev_filter][slot] = JamAction.JAM_NEXT
            # the jammer never decodes a packet it jams through JamNext
            previous = None
            continue
        if flt not in actions:
            order.append(flt)
            actions[flt] = []
        actions[flt].append(JamAction.JAM if entry.lost else JamAction.PASS)
        previous = (flt, len(actions[flt]) - 1)
    entries = tuple(PolicyEntry(f, tuple(actions[f])) for f in order)
    return JammingPolicy(entries, target)


# ---------------------------------------------------------------------------
# Serialization


def format_system_state(model_or_names: Any, state: SystemState) -> str:
    names = model_or_names
    if isinstance(model_or_names, ProtocolModel):
        names = [model_or_names.automata[i].name for i in model_or_names.protocol_indices]
    return "<" + ", ".join(f"{n}.{loc}" for n, loc in zip(names, state)) + ">"


def parse_system_state(model: ProtocolModel, text: str) -> SystemState:
    """Accepts ``Client.s1,AP.t3``, ``<Client.s1, AP.t3>`` or ``s1,t3``."""
    parts = [p.strip() for p in text.strip().strip("<>").split(",") if p.strip()]
    state = tuple(p.split(".", 1)[1] if "." in p else p for p in parts)
    _check_target(model, state)
    return state


def table_to_dict(table: PolicyTable, short_packet_threshold: int = DEFAULT_SHORT_PACKET_THRESHOLD,
                  vocabulary=None) -> Dict[str, Any]:
    records = []
    for state, schedule in table.entries.items():
        label = format_system_state(table.automata, state)
        record: Dict[str, Any] = {"state": label, "reachable": schedule is not None}
        if schedule is not None:
            record["schedule"] = [
                {"packet": str(e.packet), "ptype": e.packet.ptype, "src": e.packet.src,
                 "dest": e.packet.dest, "seq": e.packet.seq, "retry": e.packet.retry,
                 "length": e.packet.length, "rate": e.packet.rate, "lost": e.lost}
                for e in schedule.entries
            ]
            record["decisions"] = list(schedule.decisions)
            if schedule.entries:
                policy = compile_policy(schedule, short_packet_threshold, vocabulary=vocabulary, target=label)
                record["policy"] = policy_to_dict(policy)["entries"]
            else:
                record["policy"] = []
        records.append(record)
    return {
        "model": table.model_name,
        "automata": list(table.automata),
        "totals": {
            "product": table.total,
            "reachable": table.reachable_count,
            "loss_requiring": table.loss_requiring_count,
            "explored": table.explored,
        },
        "valid": table.valid,
        "targets": records,
    }


def policy_to_dict(policy: JammingPolicy) -> Dict[str, Any]:
    return {
        "target": policy.target,
        "entries": [
            {"filter": print_filter(e.filter), "actions": [a.value for a in e.actions]}
            for e in policy.entries
        ],
    }


def dump_table(table: PolicyTable, **kwargs) -> str:
    """Deterministic JSON text of a policy table."""
    return json.dumps(table_to_dict(table, **kwargs), indent=2, sort_keys=True)


def table_from_dict(model: ProtocolModel, data: Dict[str, Any]) -> PolicyTable:
    """
    Rebuild a policy table written by ``table_to_dict``.

    Raises:
        ContractViolation: the table was produced for a different model or
            is structurally malformed
    """
    try:
        return _table_from_dict(model, data)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ContractViolation(f"malformed policy table: {type(e).__name__}: {e}")


def _table_from_dict(model: ProtocolModel, data: Dict[str, Any]) -> PolicyTable:
    names = tuple(model.automata[i].name for i in model.protocol_indices)
    if tuple(data.get("automata", ())) != names:
        raise ContractViolation(f"policy table is for automata {data.get('automata')}, model has {list(names)}")
    totals = data.get("totals", {})
    table = PolicyTable(data.get("model", model.name), names, total=totals.get("product", 0),
                        explored=totals.get("explored", 0), valid=data.get("valid", True))
    for record in data.get("targets", []):
        state = parse_system_state(model, record["state"])
        if not record.get("reachable"):
            table.entries[state] = None
            continue
        entries = []
        for e in record.get("schedule", []):
            code = model.vocabulary.get(e["ptype"]).code
            packet = Packet(e["ptype"], e["src"], e["dest"], e["seq"], e["retry"], e["length"], e["rate"], code)
            entries.append(ScheduleEntry(packet, e["lost"]))
        table.entries[state] = LossSchedule(tuple(entries), tuple(record.get("decisions", ())))
    return table
