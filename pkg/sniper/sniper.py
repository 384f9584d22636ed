"""
PacketSniper simulation: applies a jamming policy to packets as they start
on the air and decides, under the decode-latency model, whether a jam lands
before the packet ends.
"""
import enum
import logging
import random
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from model.packet import HEADER_LENGTH, Packet
from sniper.filters import MatchResult, JammingFilter, decision_time, match_filter
from sniper.timing import LatencyModel, airtime

logger = logging.getLogger("verifi.sniper")


class JamAction(str, enum.Enum):
    JAM = "Jam"
    PASS = "Pass"
    JAM_NEXT = "JamNext"


@dataclass(frozen=True)
class PolicyEntry:
    filter: JammingFilter
    actions: Tuple[JamAction, ...]

    def __post_init__(self):
        if not self.actions:
            raise ValueError(f"policy entry '{self.filter}' has no actions")


@dataclass(frozen=True)
class JammingPolicy:
    entries: Tuple[PolicyEntry, ...] = ()
    target: str = ""

    @property
    def is_pass_only(self) -> bool:
        return all(a is JamAction.PASS for e in self.entries for a in e.actions)


class SniperConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    latency: LatencyModel = Field(default_factory=LatencyModel)
    jam_success_prob: float = Field(default=1.0, ge=0.0, le=1.0)
    decode_miss_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    max_header_bytes: int = Field(default=HEADER_LENGTH, ge=0, le=HEADER_LENGTH)


@dataclass(frozen=True)
class JamRecord:
    packet: Packet
    decision_time: Optional[float]
    jammed: bool
    action: Optional[JamAction] = None


@dataclass(frozen=True)
class SniperState:
    policy: JammingPolicy
    cursors: Tuple[int, ...]
    armed_jam_next: bool = False
    jam_log: Tuple[JamRecord, ...] = ()


def new_state(policy: JammingPolicy) -> SniperState:
    return SniperState(policy=policy, cursors=(0,) * len(policy.entries))


def _lands(decision: float, packet_airtime: float, config: SniperConfig, rng: random.Random) -> bool:
    if decision >= packet_airtime:
        return False
    if config.jam_success_prob >= 1.0:
        return True
    return rng.random() < config.jam_success_prob


def on_packet(state: SniperState, packet: Packet, packet_airtime: float,
              config: Optional[SniperConfig] = None,
              rng: Optional[random.Random] = None) -> Tuple[bool, SniperState]:
    """
    Process one detected packet.

    Returns:
        ``(jammed, new_state)``; the packet is lost at its receiver iff jammed
    """
    if packet_airtime <= 0:
        raise ValueError(f"airtime must be positive, got {packet_airtime}")
    config = config or SniperConfig()
    rng = rng or random.Random(0)

    if state.armed_jam_next:
        decision = config.latency.t_short_preamble
        jammed = _lands(decision, packet_airtime, config, rng)
        logger.debug("JamNext fires on %s at %.2f us (jammed=%s)", packet, decision, jammed)
        record = JamRecord(packet, decision, jammed, JamAction.JAM_NEXT)
        return jammed, replace(state, armed_jam_next=False, jam_log=state.jam_log + (record,))

    if config.decode_miss_prob > 0 and rng.random() < config.decode_miss_prob:
        logger.debug("Decode miss on %s", packet)
        return False, replace(state, jam_log=state.jam_log + (JamRecord(packet, None, False),))

    for i, entry in enumerate(state.policy.entries):
        if state.cursors[i] >= len(entry.actions):
            continue
        if match_filter(entry.filter, packet, config.max_header_bytes) is not MatchResult.MATCH:
            continue
        action = entry.actions[state.cursors[i]]
        cursors = state.cursors[:i] + (state.cursors[i] + 1,) + state.cursors[i + 1:]
        decision = decision_time(entry.filter, packet, config.latency)
        jammed = False
        armed = False
        if action is JamAction.JAM:
            jammed = _lands(decision, packet_airtime, config, rng)
            if not jammed:
                logger.debug("Jam on %s too late or failed (%.2f us vs %.2f us airtime)",
                             packet, decision, packet_airtime)
        elif action is JamAction.JAM_NEXT:
            armed = True
        record = JamRecord(packet, decision, jammed, action)
        return jammed, replace(state, cursors=cursors, armed_jam_next=armed,
                               jam_log=state.jam_log + (record,))

    return False, replace(state, jam_log=state.jam_log + (JamRecord(packet, None, False),))


def run_policy(policy: JammingPolicy, packets: Sequence[Packet], config: Optional[SniperConfig] = None,
               rng: Optional[random.Random] = None) -> Tuple[Tuple[bool, ...], SniperState]:
    """Feed a packet sequence through a fresh sniper; convenience for tests and replays."""
    state = new_state(policy)
    verdicts = []
    for packet in packets:
        jammed, state = on_packet(state, packet, airtime(packet), config, rng)
        verdicts.append(jammed)
    return tuple(verdicts), state
