"""
Jamming filters: conjunctions of length, rate and header-prefix predicates.

Surface syntax (parsed with lark)::

    Filter    ::= "true" | Predicate ( "&&" Predicate )*
    Predicate ::= ("length" | "rate") ("<=" | ">=") INT
                | "header" "==" BYTE (":" BYTE)*      BYTE is two hex digits or "??"
"""
import enum
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from lark import Lark, Transformer
from lark.exceptions import UnexpectedCharacters, UnexpectedInput, VisitError

from model.packet import HEADER_LENGTH, Packet
from sniper.timing import LatencyModel
from utils.errors import FilterSyntaxError

WILDCARD = "??"


class MatchResult(enum.Enum):
    MATCH = "match"
    NO_MATCH = "no-match"
    UNDECIDED = "undecidable-yet"


@dataclass(frozen=True)
class AttrCmp:
    """``length`` or ``rate`` compared against a constant."""

    attribute: str
    op: str
    value: int

    def holds(self, packet: Packet) -> bool:
        actual = packet.length if self.attribute == "length" else packet.rate
        return actual <= self.value if self.op == "<=" else actual >= self.value

    def __str__(self) -> str:
        return f"{self.attribute} {self.op} {self.value}"


@dataclass(frozen=True)
class HeaderMatch:
    """Header prefix; ``None`` entries are don't-care bytes."""

    pattern: Tuple[Optional[int], ...]

    @property
    def bytes_needed(self) -> int:
        for i in range(len(self.pattern) - 1, -1, -1):
            if self.pattern[i] is not None:
                return i + 1
        return 0

    def check(self, header: bytes, available: int) -> MatchResult:
        for i, expected in enumerate(self.pattern):
            if expected is None:
                continue
            if i >= available:
                return MatchResult.UNDECIDED
            if i >= len(header) or header[i] != expected:
                return MatchResult.NO_MATCH
        return MatchResult.MATCH

    def __str__(self) -> str:
        return "header == " + ":".join(WILDCARD if b is None else f"{b:02X}" for b in self.pattern)


Predicate = Union[AttrCmp, HeaderMatch]


@dataclass(frozen=True)
class JammingFilter:
    conjuncts: Tuple[Predicate, ...] = ()

    @property
    def header_bytes_needed(self) -> int:
        return max((p.bytes_needed for p in self.conjuncts if isinstance(p, HeaderMatch)), default=0)

    def __str__(self) -> str:
        return print_filter(self)


TRUE_FILTER = JammingFilter()


FILTER_GRAMMAR = r"""
start: "true" -> always
     | predicate ("&&" predicate)* -> conjunction
predicate: NAME CMP INT -> compare
         | "header" "==" BYTE (":" BYTE)* -> header
CMP: "<=" | ">="
BYTE: /[0-9A-Fa-f]{2}(?![0-9A-Za-z])|\?\?/
NAME: /[A-Za-z_][A-Za-z0-9_]*/

%import common.INT
%import common.WS
%ignore WS
"""

_FILTER_PARSER = Lark(FILTER_GRAMMAR, parser="lalr")


class _FilterBuilder(Transformer):
    def __init__(self, max_header_bytes: int):
        super().__init__()
        self.max_header_bytes = max_header_bytes

    def always(self, _children) -> JammingFilter:
        return TRUE_FILTER

    def conjunction(self, predicates) -> JammingFilter:
        return JammingFilter(tuple(predicates))

    def compare(self, children) -> AttrCmp:
        attribute, op, value = children
        if attribute not in ("length", "rate"):
            raise FilterSyntaxError(f"unknown attribute '{attribute}'")
        return AttrCmp(str(attribute), str(op), int(value))

    def header(self, parts) -> HeaderMatch:
        if len(parts) > self.max_header_bytes:
            raise FilterSyntaxError(f"header prefix of {len(parts)} bytes exceeds the limit of {self.max_header_bytes}")
        return HeaderMatch(tuple(None if p == WILDCARD else int(p, 16) for p in parts))


def parse_filter(text: str, max_header_bytes: int = HEADER_LENGTH) -> JammingFilter:
    """Parse filter text; ``true`` is the empty conjunction.

    Raises:
        FilterSyntaxError: malformed predicate or unknown attribute
    """
    if not text.strip():
        raise FilterSyntaxError("empty filter")
    try:
        tree = _FILTER_PARSER.parse(text)
    except UnexpectedCharacters as e:
        raise FilterSyntaxError(f"unexpected {e.char!r} at column {e.column} in '{text.strip()}'")
    except UnexpectedInput as e:
        raise FilterSyntaxError(f"malformed filter '{text.strip()}' at column {max(e.column, 1)}")
    try:
        return _FilterBuilder(max_header_bytes).transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, FilterSyntaxError):
            raise e.orig_exc
        raise


def print_filter(flt: JammingFilter) -> str:
    if not flt.conjuncts:
        return "true"
    return " && ".join(str(p) for p in flt.conjuncts)


def match_filter(flt: JammingFilter, packet: Packet, available_header_bytes: int) -> MatchResult:
    """
    Three-valued match given the first ``available_header_bytes`` header
    bytes. Length and rate come from the SIGNAL field and are always known.
    """
    undecided = False
    header = packet.header_bytes
    for predicate in flt.conjuncts:
        if isinstance(predicate, AttrCmp):
            if not predicate.holds(packet):
                return MatchResult.NO_MATCH
            continue
        result = predicate.check(header, available_header_bytes)
        if result is MatchResult.NO_MATCH:
            return result
        if result is MatchResult.UNDECIDED:
            undecided = True
    return MatchResult.UNDECIDED if undecided else MatchResult.MATCH


def decision_time(flt: JammingFilter, packet: Packet, latency: LatencyModel, armed: bool = False) -> float:
    """Microseconds after packet start at which the jammer can act on ``flt``."""
    if armed or not flt.conjuncts:
        return latency.t_short_preamble
    needed = flt.header_bytes_needed
    if needed:
        return latency.header_time(packet.rate, needed)
    return latency.t_signal_field
