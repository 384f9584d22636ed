"""
Sniffer-trace verification.

A trace is accepted if some run of the model transmits packets whose
sniffer-observed subsequence is exactly the trace, hypothesising at most k
packets the sniffer missed. Medium switches are free, except that a packet
the PacketSniper logged as jammed is known to be lost; sniffer misses are
the only thing that costs.

The search is a 0-1 breadth-first search over (composite state, trace
position, target-visited) nodes ordered by sniffer misses used. One search up
to ``kmax`` therefore yields both the least k that accepts the trace and the
least k at which an accepting run also visits the target, which answers
every smaller k at once.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from engine.executor import (
    CompositeState, Move, Run, air_lost, air_packet, initial_state, replay, successors, system_state,
)
from model.ir import ProtocolModel
from model.packet import Packet
from utils.errors import ContractViolation, StateSpaceExceeded

logger = logging.getLogger("verifi.verifier")

ACCEPTED = "accepted"
REJECTED = "rejected"
INCONCLUSIVE = "inconclusive"

Pattern = Tuple[str, int, int, int, bool]
# an observed packet: its pattern and whether the sniffer itself jammed it
Observed = Tuple[Pattern, bool]
_Node = Tuple[CompositeState, int, bool]


class VerifyConfig(BaseModel):
    """
    ``strict`` requires the model to be quiescent, or every automaton with
    final locations to be in one, once the trace is consumed; lenient mode only requires the whole trace to be consumed.
    """

    model_config = ConfigDict(frozen=True)

    k: int = Field(default=0, ge=0)
    target: Optional[Tuple[str, ...]] = None
    budget: int = Field(default=1_000_000, gt=0)
    strict: bool = True


@dataclass(frozen=True)
class Verdict:
    status: str
    witness: Optional[Run] = None
    sniffer_losses_used: Optional[int] = None
    reached_target: Optional[bool] = None
    explored: int = 0

    @property
    def accepted(self) -> bool:
        return self.status == ACCEPTED


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one search up to ``kmax`` misses."""

    kmax: int
    accept_k: Optional[int]
    reach_k: Optional[int]
    complete: bool
    explored: int
    accept_witness: Optional[Run] = None
    reach_witness: Optional[Run] = None

    def verdict(self, k: int, target_requested: bool = False) -> Verdict:
        """Verdict at budget ``k`` (``k <= kmax``)."""
        if k > self.kmax:
            raise ContractViolation(f"search covered k <= {self.kmax}, asked for {k}")
        reached = None
        if target_requested:
            reached = self.reach_k is not None and self.reach_k <= k
        if self.accept_k is not None and self.accept_k <= k:
            witness = self.reach_witness if reached else self.accept_witness
            used = self.reach_k if reached else self.accept_k
            return Verdict(ACCEPTED, witness, used, reached, self.explored)
        if not self.complete:
            return Verdict(INCONCLUSIVE, None, None, None if reached is None else False, self.explored)
        return Verdict(REJECTED, None, None, False if target_requested else None, self.explored)


def _observed(model: ProtocolModel, trace: Sequence[Any]) -> List[Observed]:
    observed = []
    for item in trace:
        packet: Packet = getattr(item, "packet", item)
        if packet.ptype not in model.vocabulary:
            raise ContractViolation(f"trace packet type {packet.ptype} is not in the model's vocabulary")
        observed.append((packet.pattern, bool(getattr(item, "jammed", False))))
    return observed


def _witness(model: ProtocolModel, parents: Dict[_Node, Tuple[Optional[_Node], Optional[Move]]], node: _Node) -> Run:
    moves: List[Move] = []
    current = node
    while True:
        prev, move = parents[current]
        if prev is None:
            break
        moves.append(move)
        current = prev
    moves.reverse()
    return replay(model, current[0], moves)


def at_rest(model: ProtocolModel, state: CompositeState, moves: Sequence[Any]) -> bool:
    """Quiescent, or every automaton that declares final locations sits in one."""
    if not moves:
        return True
    declared = [(i, a.finals) for i, a in enumerate(model.automata) if a.finals]
    return bool(declared) and all(state.locations[i] in finals for i, finals in declared)


def search(model: ProtocolModel, trace: Sequence[Any], kmax: int,
           target: Optional[Tuple[str, ...]] = None, budget: int = 1_000_000,
           strict: bool = True) -> SearchResult:
    """Least accepting k and least target-reaching k, each capped at ``kmax``."""
    if kmax < 0:
        raise ContractViolation("kmax must be non-negative")
    expected = _observed(model, trace)
    length = len(expected)
    start_state = initial_state(model)
    start: _Node = (start_state, 0, target is not None and system_state(model, start_state) == target)
    dist: Dict[_Node, int] = {start: 0}
    parents: Dict[_Node, Tuple[Optional[_Node], Optional[Move]]] = {start: (None, None)}
    queue = deque([(0, start)])
    accept_k = reach_k = None
    accept_node = reach_node = None
    complete = True
    while queue:
        cost, node = queue.popleft()
        if cost > dist[node]:
            continue
        state, idx, hit = node
        moves = successors(model, state)
        if idx == length and (not strict or at_rest(model, state, moves)):
            if accept_k is None:
                accept_k, accept_node = cost, node
            if hit and reach_k is None:
                reach_k, reach_node = cost, node
            if target is None or reach_k is not None:
                break
        for move, nxt in moves:
            step = 0
            new_idx = idx
            if move.sniffer_loss is True:
                step = 1
            elif move.sniffer_loss is False:
                if idx >= length:
                    continue
                pattern, jammed = expected[idx]
                if air_packet(model, nxt).pattern != pattern or (jammed and not air_lost(model, nxt)):
                    continue
                new_idx = idx + 1
            new_cost = cost + step
            if new_cost > kmax:
                continue
            new_hit = hit or (target is not None and system_state(model, nxt) == target)
            child = (nxt, new_idx, new_hit)
            if child in dist and dist[child] <= new_cost:
                continue
            dist[child] = new_cost
            parents[child] = (node, move)
            if step:
                queue.append((new_cost, child))
            else:
                queue.appendleft((new_cost, child))
        if len(dist) > budget:
            complete = False
            logger.warning("Verification budget of %d nodes exhausted at trace position %d/%d",
                           budget, idx, length)
            break
    return SearchResult(
        kmax=kmax,
        accept_k=accept_k,
        reach_k=reach_k,
        complete=complete,
        explored=len(dist),
        accept_witness=_witness(model, parents, accept_node) if accept_node is not None else None,
        reach_witness=_witness(model, parents, reach_node) if reach_node is not None else None,
    )


def verify_trace(model: ProtocolModel, trace: Sequence[Any], config: Optional[VerifyConfig] = None) -> Verdict:
    """Accept, reject, or (on budget exhaustion) leave inconclusive one trace at ``config.k``."""
    config = config or VerifyConfig()
    result = search(model, trace, config.k, config.target, config.budget, config.strict)
    verdict = result.verdict(config.k, config.target is not None)
    logger.debug("Trace of %d packets: %s at k=%d (explored %d)", len(trace), verdict.status,
                 config.k, result.explored)
    return verdict


def minimal_k(model: ProtocolModel, trace: Sequence[Any], kmax: int,
              budget: int = 1_000_000, strict: bool = True) -> Optional[int]:
    """
    Least k <= kmax that accepts ``trace``, or None.

    Raises:
        StateSpaceExceeded: the search ran out of budget before deciding
    """
    result = search(model, trace, kmax, None, budget, strict)
    if result.accept_k is None and not result.complete:
        raise StateSpaceExceeded(budget)
    return result.accept_k
