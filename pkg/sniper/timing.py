"""
OFDM timing: packet airtime and the PacketSniper's decode latency.
"""
import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from model.packet import Packet

SYMBOL_US = 4.0
PREAMBLE_AND_SIGNAL_US = 20.0
SERVICE_BITS = 16
TAIL_BITS = 6

# Data bits per OFDM symbol for each 802.11a/g rate (Mbps)
BITS_PER_SYMBOL = {
    6: 24,
    9: 36,
    12: 48,
    18: 72,
    24: 96,
    36: 144,
    48: 192,
    54: 216,
}


def bits_per_symbol(rate: int) -> int:
    try:
        return BITS_PER_SYMBOL[rate]
    except KeyError:
        raise ValueError(f"unsupported rate {rate} Mbps") from None


def airtime(packet: Packet) -> float:
    """Microseconds from the first preamble symbol to the end of the frame."""
    bits = SERVICE_BITS + 8 * packet.length + TAIL_BITS
    return PREAMBLE_AND_SIGNAL_US + SYMBOL_US * math.ceil(bits / bits_per_symbol(packet.rate))


class LatencyModel(BaseModel):
    """When each piece of an incoming frame becomes available to the jammer (µs)."""

    model_config = ConfigDict(frozen=True)

    t_short_preamble: float = Field(default=7.17, gt=0)
    t_long_preamble: float = 15.54
    t_signal_field: float = 25.61
    t_first_byte: float = 37.08

    @model_validator(mode="after")
    def _ordered(self):
        if not (self.t_short_preamble < self.t_long_preamble < self.t_signal_field < self.t_first_byte):
            raise ValueError("latencies must satisfy short preamble < long preamble < SIGNAL < first byte")
        return self

    def per_byte(self, rate: int) -> float:
        """Decode time of one more header byte at ``rate``."""
        return SYMBOL_US * 8 / bits_per_symbol(rate)

    def header_time(self, rate: int, bytes_needed: int) -> float:
        if bytes_needed <= 0:
            return self.t_signal_field
        return self.t_first_byte + self.per_byte(rate) * (bytes_needed - 1)
