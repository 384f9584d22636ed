"""
Session configuration for the simulated client/AP pair.
"""
import enum
from typing import Any, FrozenSet, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, InstanceOf, field_validator, model_validator

from model.packet import LINK_SETUP_VOCABULARY, Vocabulary
from sniper.sniper import JammingPolicy, SniperConfig
from utils.errors import SessionError


class FaultFlag(str, enum.Enum):
    """Code-level deviations of the DUT from the reference link setup."""

    ASSOC_WITHOUT_AUTH = "AssocWithoutAuthCheckDisabled"
    DOUBLE_ASSOCIATION = "DoubleAssociation"
    DOT1X_DEADLOCK = "Dot1xDeadlock"


def parse_fault(name: str) -> FaultFlag:
    try:
        return FaultFlag(name)
    except ValueError:
        known = ", ".join(f.value for f in FaultFlag)
        raise SessionError(f"unknown fault '{name}' (known: {known})") from None


class SessionConfig(BaseModel):
    """
    One link-setup session.

    Either ``policy`` (PacketSniper in line) or ``medium_loss_prob`` (baseline
    Bernoulli medium) may be set, not both.
    """

    model_config = ConfigDict(frozen=True)

    policy: Optional[InstanceOf[JammingPolicy]] = None
    sniffer_loss_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    medium_loss_prob: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    faults: FrozenSet[FaultFlag] = frozenset()
    seed: int = 0
    max_events: int = Field(default=10_000, gt=0)
    retry_limit: int = Field(default=3, ge=1)
    stage: str = "full"
    client_restart_on_failure: bool = False
    internal_queueing: bool = False
    # upper-layer processing delay before each handshake reply, µs
    processing_us: Tuple[float, float] = (50.0, 150.0)
    # steering keys of the model run a guided session should follow; empty: none
    order: Tuple[Tuple[Any, ...], ...] = ()
    sniper: SniperConfig = Field(default_factory=SniperConfig)
    vocabulary: InstanceOf[Vocabulary] = LINK_SETUP_VOCABULARY

    @field_validator("faults", mode="before")
    @classmethod
    def _coerce_faults(cls, value):
        return frozenset(parse_fault(f) if isinstance(f, str) else f for f in (value or ()))

    @field_validator("stage")
    @classmethod
    def _stage(cls, value):
        if value not in ("auth", "full"):
            raise ValueError(f"stage must be 'auth' or 'full', got {value!r}")
        return value

    @model_validator(mode="after")
    def _exclusive(self):
        if self.policy is not None and self.medium_loss_prob is not None:
            raise ValueError("policy and medium_loss_prob are mutually exclusive")
        lo, hi = self.processing_us
        if lo < 0 or hi < lo:
            raise ValueError(f"bad processing delay range {self.processing_us}")
        return self


def inject_fault(config: SessionConfig, flag) -> SessionConfig:
    """
    Return ``config`` with one more fault enabled.

    Args:
        config: Base session configuration
        flag: FaultFlag or its name

    Raises:
        SessionError: unknown fault name
    """
    fault = parse_fault(flag) if isinstance(flag, str) else flag
    return config.model_copy(update={"faults": config.faults | {fault}})
