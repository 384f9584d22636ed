"""
Expression and assignment AST for guards, updates and index expressions.

Names are resolved while parsing, so every node already knows whether it reads
a constant, an automaton parameter, a select binding or a store slot.
"""
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from model.packet import Packet, Vocabulary
from utils.errors import ModelRuntimeError

PACKET_FIELDS = ("type", "src", "dest", "seq", "retry")
DERIVED_FIELDS = ("ack", "length", "rate")

# Binding strength used by the printer (higher binds tighter)
PRECEDENCE = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5, "%": 5,
}


class EvalEnv:
    """Mutable evaluation context for one transition firing."""

    __slots__ = ("store", "bindings", "vocabulary", "bounds")

    def __init__(self, store: List[Any], bindings: Dict[str, int],
                 vocabulary: Vocabulary, bounds: Sequence[Optional[Tuple[int, int]]]):
        self.store = store
        self.bindings = bindings
        self.vocabulary = vocabulary
        self.bounds = bounds


class Node:
    """Base class for expression nodes."""

    precedence = 9

    def eval(self, env: EvalEnv) -> Any:
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError

    def store_names(self) -> List[str]:
        return []


@dataclass(frozen=True)
class Literal(Node):
    value: Any

    def eval(self, env):
        return self.value

    def to_source(self):
        if self.value is None:
            return "none"
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return str(self.value)


@dataclass(frozen=True)
class ConstRef(Node):
    name: str
    value: int

    def eval(self, env):
        return self.value

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class ParamRef(Node):
    name: str
    value: Any

    def eval(self, env):
        return self.value

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class PtypeRef(Node):
    name: str

    def eval(self, env):
        return self.name

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class BindingRef(Node):
    name: str

    def eval(self, env):
        return env.bindings[self.name]

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class StoreRef(Node):
    name: str
    base: int
    size: Optional[int]
    index: Optional[Node] = None

    def slot(self, env: EvalEnv) -> int:
        if self.size is None:
            return self.base
        i = self.index.eval(env)
        if not isinstance(i, int) or isinstance(i, bool) or not 0 <= i < self.size:
            raise ModelRuntimeError(f"index {i!r} out of range for {self.name}[{self.size}]")
        return self.base + i

    def eval(self, env):
        return env.store[self.slot(env)]

    def to_source(self):
        if self.index is None:
            return self.name
        return f"{self.name}[{self.index.to_source()}]"

    def store_names(self):
        names = [self.name]
        if self.index is not None:
            names.extend(self.index.store_names())
        return names


@dataclass(frozen=True)
class FieldRef(Node):
    target: Node
    field: str

    def eval(self, env):
        pkt = self.target.eval(env)
        # fields of an empty register read as none
        if pkt is None:
            return None
        if self.field == "type":
            return pkt.ptype
        if self.field == "ack":
            return pkt.ptype in env.vocabulary and env.vocabulary.get(pkt.ptype).ack
        return getattr(pkt, self.field)

    def to_source(self):
        return f"{self.target.to_source()}.{self.field}"

    def store_names(self):
        return self.target.store_names()


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node
    precedence = 6

    def eval(self, env):
        value = self.operand.eval(env)
        if self.op == "!":
            return not value
        return -value

    def to_source(self):
        inner = self.operand.to_source()
        if self.operand.precedence < self.precedence:
            inner = f"({inner})"
        return f"{self.op}{inner}"

    def store_names(self):
        return self.operand.store_names()


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node

    @property
    def precedence(self):
        return PRECEDENCE[self.op]

    def eval(self, env):
        op = self.op
        if op == "&&":
            return bool(self.left.eval(env)) and bool(self.right.eval(env))
        if op == "||":
            return bool(self.left.eval(env)) or bool(self.right.eval(env))
        a = self.left.eval(env)
        b = self.right.eval(env)
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0:
            raise ModelRuntimeError(f"division by zero in {self.to_source()}")
        if op == "/":
            return a // b
        return a % b

    def to_source(self):
        left = self.left.to_source()
        right = self.right.to_source()
        if self.left.precedence < self.precedence:
            left = f"({left})"
        # operators are left-associative
        if self.right.precedence <= self.precedence:
            right = f"({right})"
        return f"{left} {self.op} {right}"

    def store_names(self):
        return self.left.store_names() + self.right.store_names()


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]

    def eval(self, env):
        if self.name != "packet":
            raise ModelRuntimeError(f"unknown function {self.name}")
        values = [arg.eval(env) for arg in self.args]
        ptype, src, dest = values[0], values[1], values[2]
        seq = values[3] if len(values) > 3 else 0
        retry = bool(values[4]) if len(values) > 4 else False
        if ptype not in env.vocabulary:
            raise ModelRuntimeError(f"unknown packet type {ptype!r}")
        return env.vocabulary.make(ptype, src, dest, seq, retry)

    def to_source(self):
        return f"{self.name}({', '.join(a.to_source() for a in self.args)})"

    def store_names(self):
        names: List[str] = []
        for arg in self.args:
            names.extend(arg.store_names())
        return names


BLANK_PACKET = Packet(ptype="", src=0, dest=0)


@dataclass(frozen=True)
class Assignment:
    """``target = value`` where target is a store slot or a packet field of one."""

    target: Node
    value: Node

    def apply(self, env: EvalEnv) -> None:
        value = self.value.eval(env)
        if isinstance(self.target, FieldRef):
            slot = self.target.target.slot(env)
            current = env.store[slot] or BLANK_PACKET
            env.store[slot] = _set_field(current, self.target.field, value, env.vocabulary)
            return
        slot = self.target.slot(env)
        bound = env.bounds[slot]
        if bound is not None:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ModelRuntimeError(f"{self.target.to_source()} expects an integer, got {value!r}")
            if not bound[0] <= value <= bound[1]:
                raise ModelRuntimeError(
                    f"value {value} outside [{bound[0]}, {bound[1]}] for {self.target.to_source()}")
        env.store[slot] = value

    def to_source(self) -> str:
        return f"{self.target.to_source()} = {self.value.to_source()}"

    def store_names(self) -> List[str]:
        return self.target.store_names() + self.value.store_names()


def _set_field(pkt: Packet, name: str, value: Any, vocabulary: Vocabulary) -> Packet:
    if name == "type":
        if value not in vocabulary:
            raise ModelRuntimeError(f"unknown packet type {value!r}")
        ptype = vocabulary.get(value)
        return replace(pkt, ptype=value, length=ptype.length, rate=ptype.rate, code=ptype.code)
    if name == "retry":
        return replace(pkt, retry=bool(value))
    return replace(pkt, **{name: value})
