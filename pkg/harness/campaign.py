"""
Campaigns: guided sessions (one jamming policy per reachable target, several
repetitions each, steered along the run the policy was cut from) and
unguided random-loss baselines.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from engine.analyzer import PolicyTable, compile_policy, format_system_state
from harness.config import FaultFlag, SessionConfig, parse_fault
from harness.session import SessionResult, SystemState, run_session
from harness.steering import witness_order
from model.ir import ProtocolModel
from sniper.sniper import JammingPolicy, SniperConfig
from utils.errors import VerifiError

logger = logging.getLogger("verifi.harness.campaign")


class CampaignConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 0
    sniffer_loss_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    faults: FrozenSet[FaultFlag] = frozenset()
    workers: int = Field(default=1, ge=1)
    max_events: int = Field(default=10_000, gt=0)
    short_packet_threshold: int = Field(default=14, ge=0)
    sniper: SniperConfig = Field(default_factory=SniperConfig)
    client_restart_on_failure: bool = False
    internal_queueing: bool = False
    # follow each policy's model run when ordering the devices' own choices
    steer: bool = True

    @field_validator("faults", mode="before")
    @classmethod
    def _coerce_faults(cls, value):
        return frozenset(parse_fault(f) if isinstance(f, str) else f for f in (value or ()))


@dataclass(frozen=True)
class SessionOutcome:
    target: Optional[SystemState]
    label: str
    repetition: int
    seed: int
    result: Optional[SessionResult] = None
    error: Optional[str] = None

    @property
    def reached(self) -> bool:
        return self.result is not None and self.target is not None and self.target in self.result.visited


@dataclass
class CampaignResult:
    outcomes: List[SessionOutcome] = field(default_factory=list)
    mode: str = "guided"

    def visited_states(self) -> set:
        """Every system state some session actually passed through."""
        states = set()
        for outcome in self.outcomes:
            if outcome.result is not None:
                states |= outcome.result.visited
        return states

    def reached_targets(self) -> set:
        return {o.target for o in self.outcomes if o.reached}

    @property
    def errors(self) -> List[SessionOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def summary(self) -> Dict[str, Any]:
        per_target: Dict[str, Dict[str, int]] = {}
        for o in self.outcomes:
            cell = per_target.setdefault(o.label, {"sessions": 0, "reached": 0, "errors": 0, "deadlocks": 0})
            cell["sessions"] += 1
            cell["reached"] += int(o.reached)
            cell["errors"] += int(o.error is not None)
            cell["deadlocks"] += int(o.result is not None and o.result.deadlock)
        return {
            "mode": self.mode,
            "sessions": len(self.outcomes),
            "errors": len(self.errors),
            "reached_targets": len(self.reached_targets()),
            "visited_states": len(self.visited_states()),
            "targets": per_target,
        }


def stage_of(model: ProtocolModel) -> str:
    """``auth`` for the authentication-only model, ``full`` otherwise."""
    client = model.automata[model.protocol_indices[0]]
    return "full" if "s5" in client.locations else "auth"


def _run_cell(cell: Tuple[Optional[SystemState], str, int, int, SessionConfig]) -> SessionOutcome:
    target, label, rep, seed, session_config = cell
    try:
        return SessionOutcome(target, label, rep, seed, result=run_session(session_config))
    except VerifiError as e:
        logger.error("Session %s rep %d (seed %d) failed: %s", label, rep, seed, e)
        return SessionOutcome(target, label, rep, seed, error=str(e))


def _execute(cells: List[Tuple], workers: int) -> List[SessionOutcome]:
    if workers <= 1:
        return [_run_cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map keeps input order, so results merge deterministically
        return list(pool.map(_run_cell, cells))


def _session_config(config: CampaignConfig, stage: str, seed: int, retry_limit: int, **extra) -> SessionConfig:
    return SessionConfig(
        sniffer_loss_prob=config.sniffer_loss_prob,
        faults=config.faults,
        seed=seed,
        max_events=config.max_events,
        retry_limit=retry_limit,
        stage=stage,
        sniper=config.sniper,
        client_restart_on_failure=config.client_restart_on_failure,
        internal_queueing=config.internal_queueing,
        **extra,
    )


def campaign_policies(model: ProtocolModel, table: PolicyTable, short_packet_threshold: int = 14,
                      max_header_bytes: int = 10) -> List[Tuple[SystemState, JammingPolicy]]:
    """One compiled policy per reachable target, in table order."""
    policies = []
    for target in table.reachable:
        label = format_system_state(table.automata, target)
        schedule = table.entries[target]
        if schedule.entries:
            policy = compile_policy(schedule, short_packet_threshold, max_header_bytes,
                                    vocabulary=model.vocabulary, target=label)
        else:
            policy = JammingPolicy(target=label)
        policies.append((target, policy))
    return policies


def campaign(model: ProtocolModel, table: PolicyTable, repetitions: int,
             config: Optional[CampaignConfig] = None) -> CampaignResult:
    """Run ``repetitions`` guided sessions for every reachable target of ``table``."""
    config = config or CampaignConfig()
    if repetitions <= 0:
        return CampaignResult()
    stage = stage_of(model)
    retry_limit = model.retry_limit or 3
    cells = []
    for i, (target, policy) in enumerate(campaign_policies(model, table, config.short_packet_threshold,
                                                             config.sniper.max_header_bytes)):
        order = witness_order(model, table.entries[target], target) if config.steer else ()
        for rep in range(repetitions):
            seed = config.seed * 1_000_003 + i * 1_009 + rep
            session_config = _session_config(config, stage, seed, retry_limit, policy=policy, order=order)
            cells.append((target, policy.target, rep, seed, session_config))
    outcomes = _execute(cells, config.workers)
    result = CampaignResult(outcomes, mode="guided")
    logger.info("Guided campaign: %d sessions, %d/%d targets reached, %d errors",
                len(outcomes), len(result.reached_targets()), table.reachable_count, len(result.errors))
    return result


def baseline_campaign(model: ProtocolModel, sessions: int, loss_prob: float,
                      config: Optional[CampaignConfig] = None) -> CampaignResult:
    """Unguided sessions over a Bernoulli medium with loss probability ``loss_prob``."""
    config = config or CampaignConfig()
    stage = stage_of(model)
    retry_limit = model.retry_limit or 3
    cells = []
    for rep in range(max(sessions, 0)):
        seed = config.seed * 1_000_003 + rep
        session_config = _session_config(config, stage, seed, retry_limit, medium_loss_prob=loss_prob)
        cells.append((None, "baseline", rep, seed, session_config))
    result = CampaignResult(_execute(cells, config.workers), mode="baseline")
    logger.info("Baseline campaign (p=%.2f): %d sessions, %d system states visited",
                loss_prob, len(result.outcomes), len(result.visited_states()))
    return result
