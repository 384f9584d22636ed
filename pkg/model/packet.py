"""
Packets and the packet-type vocabulary.

A packet carries the fields the protocol model reasons about (type, source,
destination, sequence number, retry flag) plus the PHY attributes a jammer can
decode early (length, rate). ``header_bytes`` is the fixed 10-byte layout the
PacketSniper matches header filters against.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

HEADER_LENGTH = 10

# Byte offsets inside header_bytes
HEADER_OFFSETS: Dict[str, int] = {
    "type": 0,
    "src": 1,
    "dest": 2,
    "seq": 3,
    "retry": 4,
}

SUPPORTED_RATES = (6, 9, 12, 18, 24, 36, 48, 54)


@dataclass(frozen=True)
class PacketType:
    """One entry of a packet vocabulary."""

    name: str
    code: int
    length: int
    rate: int = 6
    ack: bool = False


@dataclass(frozen=True)
class Packet:
    """An 802.11-style frame as seen by the model, the DUT and the sniffer."""

    ptype: str
    src: int
    dest: int
    seq: int = 0
    retry: bool = False
    length: int = 0
    rate: int = 6
    code: int = 0

    @property
    def header_bytes(self) -> bytes:
        """Fixed layout: type code, src, dest, seq, retry, five padding bytes."""
        head = bytes([
            self.code & 0xFF,
            self.src & 0xFF,
            self.dest & 0xFF,
            self.seq & 0xFF,
            1 if self.retry else 0,
        ])
        return head + bytes(HEADER_LENGTH - len(head))

    @property
    def pattern(self) -> Tuple[str, int, int, int, bool]:
        """The fields a protocol model fixes; used for trace comparison."""
        return (self.ptype, self.src, self.dest, self.seq, self.retry)

    def validate(self) -> None:
        """Raise ValueError if the packet breaks a structural invariant."""
        if self.src == self.dest:
            raise ValueError(f"packet {self.ptype} has src == dest == {self.src}")
        if self.seq < 0:
            raise ValueError(f"packet {self.ptype} has negative seq {self.seq}")
        if self.rate not in SUPPORTED_RATES:
            raise ValueError(f"unsupported rate {self.rate} Mbps")

    def as_retry(self) -> "Packet":
        return replace(self, retry=True)

    def __str__(self) -> str:
        flag = "'" if self.retry else ""
        return f"{self.ptype}{flag}({self.src}->{self.dest} #{self.seq})"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered set of packet types known to a model or a DUT."""

    types: Tuple[PacketType, ...] = field(default_factory=tuple)

    def __post_init__(self):
        names = [t.name for t in self.types]
        if len(set(names)) != len(names):
            raise ValueError("duplicate packet type names in vocabulary")
        codes = [t.code for t in self.types]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate packet type codes in vocabulary")

    def __contains__(self, name: str) -> bool:
        return any(t.name == name for t in self.types)

    def __iter__(self):
        return iter(self.types)

    def get(self, name: str) -> PacketType:
        for ptype in self.types:
            if ptype.name == name:
                return ptype
        raise KeyError(name)

    def by_code(self, code: int) -> Optional[PacketType]:
        for ptype in self.types:
            if ptype.code == code:
                return ptype
        return None

    def index(self, name: str) -> int:
        for i, ptype in enumerate(self.types):
            if ptype.name == name:
                return i
        raise KeyError(name)

    def make(self, name: str, src: int, dest: int, seq: int = 0, retry: bool = False) -> Packet:
        """Build a packet whose PHY attributes come from the vocabulary."""
        ptype = self.get(name)
        return Packet(ptype=name, src=src, dest=dest, seq=seq, retry=retry,
                      length=ptype.length, rate=ptype.rate, code=ptype.code)

    def names(self) -> List[str]:
        return [t.name for t in self.types]

    @classmethod
    def of(cls, types: Iterable[PacketType]) -> "Vocabulary":
        return cls(tuple(types))


# Frame sizes (MAC header + body + FCS, bytes) for the link-setup exchange.
# ACKs are 14 bytes, the short-packet class the sniper handles with JamNext.
LINK_SETUP_VOCABULARY = Vocabulary.of([
    PacketType("AUTH_REQ", 0x0B, 30),
    PacketType("AUTH_RESP", 0x1B, 30),
    PacketType("ASSOC_REQ", 0x00, 68),
    PacketType("ASSOC_RESP", 0x10, 60),
    PacketType("EAPOL_1", 0x81, 121),
    PacketType("EAPOL_2", 0x82, 143),
    PacketType("EAPOL_3", 0x83, 175),
    PacketType("DEAUTH", 0xC0, 26),
    PacketType("CLIENT_ACK", 0xD4, 14, ack=True),
    PacketType("AP_ACK", 0xD5, 14, ack=True),
])
