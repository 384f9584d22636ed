"""
In-memory representation of a protocol model: a network of automata sharing a
bounded store and synchronising over channels.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

from model.expressions import Assignment, Node
from model.packet import Vocabulary

ROLES = ("protocol", "stdlib", "medium", "sniffer")
EMIT = "!"
RECEIVE = "?"


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int = 0
    column: int = 0

    def __str__(self) -> str:
        if self.line:
            return f"{self.line}:{self.column}: {self.message}"
        return self.message


@dataclass(frozen=True)
class Select:
    name: str
    lo: int
    hi: int

    def values(self) -> range:
        return range(self.lo, self.hi + 1)


@dataclass(frozen=True)
class Sync:
    channel: str
    direction: str
    index: Optional[Node] = None


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    selects: Tuple[Select, ...] = ()
    guard: Optional[Node] = None
    sync: Optional[Sync] = None
    updates: Tuple[Assignment, ...] = ()


@dataclass(frozen=True)
class Automaton:
    name: str
    locations: Tuple[str, ...]
    initial: str
    transitions: Tuple[Transition, ...] = ()
    params: Tuple[Tuple[str, Any], ...] = ()
    role: str = "protocol"
    finals: Tuple[str, ...] = ()

    def outgoing(self, location: str) -> List[Tuple[int, Transition]]:
        return [(i, t) for i, t in enumerate(self.transitions) if t.source == location]


@dataclass(frozen=True)
class ChannelDecl:
    name: str
    size: Optional[int] = None
    nonblocking: bool = False


@dataclass(frozen=True)
class VarDecl:
    """A store variable; ``kind`` is int, bool or packet."""

    name: str
    kind: str
    size: Optional[int] = None
    lo: int = 0
    hi: int = 0
    default: Any = None

    @property
    def width(self) -> int:
        return 1 if self.size is None else self.size


@dataclass(frozen=True)
class ProtocolModel:
    name: str
    automata: Tuple[Automaton, ...]
    channels: Tuple[ChannelDecl, ...] = ()
    variables: Tuple[VarDecl, ...] = ()
    constants: Tuple[Tuple[str, int], ...] = ()
    vocabulary: Vocabulary = field(default_factory=Vocabulary)
    device_count: int = 1

    @cached_property
    def slots(self) -> Dict[str, Tuple[int, VarDecl]]:
        """Variable name -> (base slot, declaration)."""
        layout: Dict[str, Tuple[int, VarDecl]] = {}
        base = 0
        for decl in self.variables:
            layout[decl.name] = (base, decl)
            base += decl.width
        return layout

    @cached_property
    def store_size(self) -> int:
        return sum(d.width for d in self.variables)

    @cached_property
    def bounds(self) -> Tuple[Optional[Tuple[int, int]], ...]:
        out: List[Optional[Tuple[int, int]]] = []
        for decl in self.variables:
            bound = (decl.lo, decl.hi) if decl.kind == "int" else None
            out.extend([bound] * decl.width)
        return tuple(out)

    @cached_property
    def default_store(self) -> Tuple[Any, ...]:
        out: List[Any] = []
        for decl in self.variables:
            out.extend([decl.default] * decl.width)
        return tuple(out)

    @cached_property
    def channel_map(self) -> Dict[str, ChannelDecl]:
        return {c.name: c for c in self.channels}

    @cached_property
    def protocol_indices(self) -> Tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.automata) if a.role == "protocol")

    @cached_property
    def medium_index(self) -> Optional[int]:
        found = [i for i, a in enumerate(self.automata) if a.role == "medium"]
        return found[0] if found else None

    @cached_property
    def sniffer_index(self) -> Optional[int]:
        found = [i for i, a in enumerate(self.automata) if a.role == "sniffer"]
        return found[0] if found else None

    @property
    def retry_limit(self) -> Optional[int]:
        return dict(self.constants).get("RETRY_LIMIT")

    def automaton(self, name: str) -> Automaton:
        for a in self.automata:
            if a.name == name:
                return a
        raise KeyError(name)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.automata):
            if a.name == name:
                return i
        raise KeyError(name)


def validate_automaton(automaton: Automaton, channels: Dict[str, ChannelDecl]) -> List[Diagnostic]:
    """Structural checks for a single automaton."""
    problems: List[Diagnostic] = []
    where = f"automaton {automaton.name}"
    if automaton.role not in ROLES:
        problems.append(Diagnostic(f"{where}: unknown role '{automaton.role}'"))
    seen = set()
    for loc in automaton.locations:
        if loc in seen:
            problems.append(Diagnostic(f"{where}: duplicate location '{loc}'"))
        seen.add(loc)
    if not automaton.initial:
        problems.append(Diagnostic(f"{where}: no initial location"))
    elif automaton.initial not in seen:
        problems.append(Diagnostic(f"{where}: initial location '{automaton.initial}' is not declared"))
    for loc in automaton.finals:
        if loc not in seen:
            problems.append(Diagnostic(f"{where}: final location '{loc}' is not declared"))
    for i, t in enumerate(automaton.transitions):
        for end in (t.source, t.target):
            if end not in seen:
                problems.append(Diagnostic(f"{where}: transition {i} uses undeclared location '{end}'"))
        names = [s.name for s in t.selects]
        if len(set(names)) != len(names):
            problems.append(Diagnostic(f"{where}: transition {i} repeats a select identifier"))
        for s in t.selects:
            if s.lo > s.hi:
                problems.append(Diagnostic(f"{where}: transition {i} has empty select range for '{s.name}'"))
        if t.sync is not None:
            decl = channels.get(t.sync.channel)
            if decl is None:
                problems.append(Diagnostic(f"{where}: unknown channel '{t.sync.channel}'"))
            elif (decl.size is None) != (t.sync.index is None):
                problems.append(Diagnostic(f"{where}: channel '{t.sync.channel}' indexed inconsistently"))
            if t.sync.direction not in (EMIT, RECEIVE):
                problems.append(Diagnostic(f"{where}: bad sync direction '{t.sync.direction}'"))
    return problems


def validate_model(model: ProtocolModel) -> List[Diagnostic]:
    """Whole-model checks; returns an empty list for a well-formed model."""
    problems: List[Diagnostic] = []
    if model.device_count < 1:
        problems.append(Diagnostic("device count must be positive"))
    names = [a.name for a in model.automata]
    for name in sorted({n for n in names if names.count(n) > 1}):
        problems.append(Diagnostic(f"duplicate automaton '{name}'"))
    channel_names = [c.name for c in model.channels]
    for name in sorted({n for n in channel_names if channel_names.count(n) > 1}):
        problems.append(Diagnostic(f"duplicate channel '{name}'"))
    var_names = [v.name for v in model.variables]
    for name in sorted({n for n in var_names if var_names.count(n) > 1}):
        problems.append(Diagnostic(f"duplicate variable '{name}'"))
    for decl in model.variables:
        if decl.kind == "int" and decl.default is not None and not decl.lo <= decl.default <= decl.hi:
            problems.append(Diagnostic(f"default of '{decl.name}' outside its range"))
    channels = model.channel_map
    for automaton in model.automata:
        problems.extend(validate_automaton(automaton, channels))
    roles = [a.role for a in model.automata]
    uses_sync = any(t.sync is not None for a in model.automata for t in a.transitions)
    if roles.count("medium") > 1:
        problems.append(Diagnostic("more than one Medium automaton"))
    if uses_sync and roles.count("medium") == 0:
        problems.append(Diagnostic("model synchronises over channels but has no Medium automaton"))
    if roles.count("sniffer") > 1:
        problems.append(Diagnostic("more than one Sniffer automaton"))
    return problems
