"""
Parser for the block-format model language.

The surface syntax keeps the four transition clauses select / guard / sync /
assign in that fixed order::

    automaton Client(id = 0) protocol
      locations s0, s1
      initial s0
      s0 -> s1 { guard c < 5; sync mac_tx_start[id]!; assign c = 0; }
    end

The grammar is parsed with lark; names are then resolved in declaration
order. Syntax errors stop the parse; semantic problems (unknown names,
duplicate locations, missing initial location) are collected and reported
together through ModelError.
"""
import logging
from typing import Any, Dict, List, Optional, Tuple, Union

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedCharacters, UnexpectedInput, UnexpectedToken
from lark.visitors import Interpreter

from model.expressions import (
    DERIVED_FIELDS, PACKET_FIELDS, Assignment, Binary, BindingRef, Call, ConstRef,
    EvalEnv, FieldRef, Literal, Node, ParamRef, PtypeRef, StoreRef, Unary,
)
from model.ir import (
    ROLES, Automaton, ChannelDecl, Diagnostic, ProtocolModel,
    Select, Sync, Transition, VarDecl, validate_model,
)
from model.packet import PacketType, Vocabulary
from utils.errors import ModelError, ModelRuntimeError

logger = logging.getLogger("verifi.model.parser")

MODEL_GRAMMAR = r"""
model: "model" NAME _declaration*
fragment: _declaration*

_declaration: const_decl | devices_decl | ptype_decl | chan_decl
            | int_decl | bool_decl | packet_decl | stdlib_decl | automaton

const_decl: "const" NAME "=" expr
devices_decl: "devices" expr
ptype_decl: "ptype" NAME "code" expr "length" expr "rate" expr ack_flag?
ack_flag: "ack"
chan_decl: "chan" NAME size? nonblocking?
nonblocking: "nonblocking"
int_decl: "int" NAME size? "[" expr "," expr "]" ("=" expr)?
bool_decl: "bool" NAME size? ("=" bool_value)?
!bool_value: "true" | "false"
packet_decl: "packet" NAME size? ("=" "none")?
size: "[" expr "]"
stdlib_decl: "stdlib" "devices" expr "retry" expr "acks" name_list

automaton: "automaton" NAME params? role? _item* "end"
params: "(" (param ("," param)*)? ")"
param: NAME "=" expr
role: NAME
_item: locations | initial | final | transition
locations: "locations" name_list
initial: "initial" NAME
final: "final" name_list
name_list: NAME ("," NAME)*

transition: NAME "->" NAME "{" select_clause? guard_clause? sync_clause? assign_clause? "}"
select_clause: "select" select ("," select)* ";"
select: NAME ":" "int" "[" expr "," expr "]"
guard_clause: "guard" expr ";"
sync_clause: "sync" NAME size? direction ";"
!direction: "!" | "?"
assign_clause: "assign" assignment ("," assignment)* ";"
assignment: postfix "=" expr

?expr: disj
!?disj: conj | disj "||" conj
!?conj: comp | conj "&&" comp
!?comp: sum | comp ("==" | "!=" | "<" | "<=" | ">" | ">=") sum
!?sum: term | sum ("+" | "-") term
!?term: unary | term ("*" | "/" | "%") unary
!?unary: postfix | ("!" | "-") unary
?postfix: primary
        | postfix "." NAME -> field
?primary: NUMBER -> number
        | "(" expr ")"
        | NAME "(" expr ("," expr)* ")" -> call
        | NAME "[" expr "]" -> indexed
        | NAME -> name

NAME: /[A-Za-z_][A-Za-z0-9_]*/
NUMBER: /0[xX][0-9a-fA-F]+|[0-9]+/
COMMENT: /\/\/[^\n]*/

%import common.WS
%ignore WS
%ignore COMMENT
"""

BINARY_RULES = ("disj", "conj", "comp", "sum", "term")
CLAUSES = ("select", "guard", "sync", "assign")

_PARSER = Lark(MODEL_GRAMMAR, start=["model", "fragment"], parser="lalr", propagate_positions=True)

Located = Union[Tree, Token]


def _syntax_diagnostic(error: UnexpectedInput) -> Diagnostic:
    line, column = max(error.line, 1), max(error.column, 1)
    if isinstance(error, UnexpectedCharacters):
        return Diagnostic(f"unexpected character {error.char!r}", line, column)
    if isinstance(error, UnexpectedToken):
        found = error.token.value if error.token.type != "$END" else "end of input"
        if found in CLAUSES:
            return Diagnostic(f"clause '{found}' out of order (select, guard, sync, assign)", line, column)
        return Diagnostic(f"unexpected '{found}'", line, column)
    return Diagnostic("unexpected end of input", line, column)


class _ModelBuilder(Interpreter):
    """Walks the parse tree in source order, resolving names as they appear."""

    def __init__(self):
        self.diagnostics: List[Diagnostic] = []
        self.name = ""
        self.device_count = 1
        self.constants: Dict[str, int] = {}
        self.ptypes: List[PacketType] = []
        self.channels: Dict[str, ChannelDecl] = {}
        self.variables: List[VarDecl] = []
        self.slots: Dict[str, Tuple[int, VarDecl]] = {}
        self.store_size = 0
        self.automata: List[Automaton] = []
        self.automaton_lines: Dict[str, int] = {}
        # declarations expanded from a stdlib directive report at the directive
        self.origin: Optional[Tuple[int, int]] = None
        # per-automaton scope
        self.params: Dict[str, Any] = {}
        self.bindings: Tuple[str, ...] = ()

    def where(self, item: Located) -> Tuple[int, int]:
        if self.origin is not None:
            return self.origin
        if isinstance(item, Token):
            return item.line or 0, item.column or 0
        return getattr(item.meta, "line", 0), getattr(item.meta, "column", 0)

    def note(self, message: str, item: Located) -> None:
        self.diagnostics.append(Diagnostic(message, *self.where(item)))

    def build(self, tree: Tree) -> ProtocolModel:
        self.visit(tree)
        model = ProtocolModel(
            name=self.name,
            automata=tuple(self.automata),
            channels=tuple(self.channels.values()),
            variables=tuple(self.variables),
            constants=tuple(self.constants.items()),
            vocabulary=Vocabulary.of(self.ptypes),
            device_count=self.device_count,
        )
        if not self.diagnostics:
            self.diagnostics.extend(self._locate(diag) for diag in validate_model(model))
        return model

    def _locate(self, diag: Diagnostic) -> Diagnostic:
        head = diag.message.split(":", 1)[0]
        if head.startswith("automaton "):
            line = self.automaton_lines.get(head[len("automaton "):])
            if line:
                return Diagnostic(diag.message, line, 1)
        return diag

    # ------------------------------------------------------------ declarations
    def model(self, tree: Tree) -> None:
        name, *declarations = tree.children
        self.name = str(name)
        for declaration in declarations:
            self.visit(declaration)

    def const_value(self, node: Located) -> int:
        try:
            value = self.expression(node).eval(EvalEnv([], {}, Vocabulary(), ()))
        except (ModelRuntimeError, KeyError, TypeError, IndexError) as e:
            self.note(f"not a constant expression: {e}", node)
            return 0
        if isinstance(value, bool) or not isinstance(value, int):
            self.note("constant expression must be an integer", node)
            return 0
        return value

    def const_decl(self, tree: Tree) -> None:
        name, value = tree.children
        if name in self.constants:
            self.note(f"duplicate constant '{name}'", name)
        self.constants[str(name)] = self.const_value(value)

    def devices_decl(self, tree: Tree) -> None:
        self.device_count = self.const_value(tree.children[0])

    def ptype_decl(self, tree: Tree) -> None:
        name, code, length, rate, *flag = tree.children
        code, length, rate = self.const_value(code), self.const_value(length), self.const_value(rate)
        if any(p.name == name for p in self.ptypes):
            self.note(f"duplicate packet type '{name}'", name)
            return
        if any(p.code == code for p in self.ptypes):
            self.note(f"duplicate packet type code {code}", name)
            return
        self.ptypes.append(PacketType(str(name), code, length, rate, bool(flag)))

    def _split_size(self, rest: List[Located]) -> Tuple[Optional[int], List[Located]]:
        if rest and isinstance(rest[0], Tree) and rest[0].data == "size":
            return self.const_value(rest[0].children[0]), rest[1:]
        return None, rest

    def chan_decl(self, tree: Tree) -> None:
        name, *rest = tree.children
        size, rest = self._split_size(rest)
        if name in self.channels:
            self.note(f"duplicate channel '{name}'", name)
        self.channels[str(name)] = ChannelDecl(str(name), size, bool(rest))

    def _declare(self, name: Token, decl: VarDecl) -> None:
        if name in self.slots:
            self.note(f"duplicate variable '{name}'", name)
            return
        self.variables.append(decl)
        self.slots[str(name)] = (self.store_size, decl)
        self.store_size += decl.width

    def int_decl(self, tree: Tree) -> None:
        name, *rest = tree.children
        size, rest = self._split_size(rest)
        lo, hi = self.const_value(rest[0]), self.const_value(rest[1])
        default = self.const_value(rest[2]) if len(rest) > 2 else lo
        self._declare(name, VarDecl(str(name), "int", size, lo, hi, default))

    def bool_decl(self, tree: Tree) -> None:
        name, *rest = tree.children
        size, rest = self._split_size(rest)
        default = bool(rest) and rest[0].children[0] == "true"
        self._declare(name, VarDecl(str(name), "bool", size, 0, 0, default))

    def packet_decl(self, tree: Tree) -> None:
        name, *rest = tree.children
        size, _ = self._split_size(rest)
        self._declare(name, VarDecl(str(name), "packet", size, 0, 0, None))

    def stdlib_decl(self, tree: Tree) -> None:
        from model.stdlib import stdlib_source

        devices, retry, names = tree.children
        devices, retry = self.const_value(devices), self.const_value(retry)
        acks = [str(t) for t in names.children]
        for ack in acks:
            if not any(p.name == ack and p.ack for p in self.ptypes):
                self.note(f"'{ack}' is not a declared ack packet type", tree)
        if len(acks) != devices:
            self.note(f"stdlib needs one ack type per device ({devices}), got {len(acks)}", tree)
        try:
            generated = _PARSER.parse(stdlib_source(devices, retry, acks), start="fragment")
        except ModelError as e:
            for diag in e.diagnostics:
                self.note(diag.message, tree)
            return
        self.origin = self.where(tree)
        try:
            self.visit(generated)
        finally:
            self.origin = None
        self.device_count = devices

    # ---------------------------------------------------------------- automata
    def automaton(self, tree: Tree) -> None:
        name, *items = tree.children
        params: List[Tuple[str, Any]] = []
        role = "protocol"
        if items and isinstance(items[0], Tree) and items[0].data == "params":
            params = [self.param(p) for p in items.pop(0).children]
        if items and isinstance(items[0], Tree) and items[0].data == "role":
            word = items.pop(0).children[0]
            if word not in ROLES:
                self.note(f"automaton {name}: unknown role '{word}'", word)
            role = str(word)
        self.params = dict(params)
        self.bindings = ()
        locations: List[str] = []
        initial = ""
        finals: List[str] = []
        transitions: List[Transition] = []
        for item in items:
            if item.data == "locations":
                seen = set(locations)
                for loc in item.children[0].children:
                    if loc in seen:
                        self.note(f"automaton {name}: duplicate location '{loc}'", loc)
                    seen.add(str(loc))
                    locations.append(str(loc))
            elif item.data == "initial":
                initial = str(item.children[0])
            elif item.data == "final":
                finals.extend(str(t) for t in item.children[0].children)
            else:
                transitions.append(self.transition(item))
        if not initial:
            self.note(f"automaton {name}: no initial location", tree)
        self.automaton_lines[str(name)] = self.where(tree)[0]
        self.automata.append(Automaton(
            name=str(name),
            locations=tuple(locations),
            initial=initial,
            transitions=tuple(transitions),
            params=tuple(params),
            role=role,
            finals=tuple(finals),
        ))
        self.params = {}

    def param(self, tree: Tree) -> Tuple[str, Any]:
        name, value = tree.children
        if isinstance(value, Tree) and value.data == "name" and value.children[0] not in self.constants:
            ref = value.children[0]
            if not any(p.name == ref for p in self.ptypes):
                self.note(f"unknown packet type '{ref}'", ref)
            return str(name), str(ref)
        return str(name), self.const_value(value)

    def transition(self, tree: Tree) -> Transition:
        source, target, *clauses = tree.children
        selects: List[Select] = []
        guard = None
        sync = None
        updates: List[Assignment] = []
        for clause in clauses:
            if clause.data == "select_clause":
                selects = [self.select(s) for s in clause.children]
                self.bindings = tuple(s.name for s in selects)
            elif clause.data == "guard_clause":
                guard = self.expression(clause.children[0])
            elif clause.data == "sync_clause":
                sync = self.sync(clause)
            else:
                updates = [self.assignment(a) for a in clause.children]
        self.bindings = ()
        return Transition(str(source), str(target), tuple(selects), guard, sync, tuple(updates))

    def select(self, tree: Tree) -> Select:
        name, lo, hi = tree.children
        return Select(str(name), self.const_value(lo), self.const_value(hi))

    def sync(self, tree: Tree) -> Sync:
        name, *rest = tree.children
        index = None
        if isinstance(rest[0], Tree) and rest[0].data == "size":
            index = self.expression(rest.pop(0).children[0])
        if name not in self.channels:
            self.note(f"unknown channel '{name}'", name)
        return Sync(str(name), str(rest[0].children[0]), index)

    def assignment(self, tree: Tree) -> Assignment:
        target_tree, value = tree.children
        target = self.expression(target_tree)
        if isinstance(target, FieldRef):
            if target.field in DERIVED_FIELDS:
                self.note(f"field '{target.field}' is derived and cannot be assigned", target_tree)
            if not isinstance(target.target, StoreRef):
                self.note("only packet variables can have fields assigned", target_tree)
        elif not isinstance(target, StoreRef):
            self.note(f"'{target.to_source()}' is not an assignable variable", target_tree)
        return Assignment(target, self.expression(value))

    # ------------------------------------------------------------- expressions
    def expression(self, node: Located) -> Node:
        kind = node.data
        children = node.children
        if kind in BINARY_RULES:
            left, op, right = children
            return Binary(str(op), self.expression(left), self.expression(right))
        if kind == "unary":
            op, operand = children
            return Unary(str(op), self.expression(operand))
        if kind == "number":
            return Literal(int(children[0], 0))
        if kind == "field":
            base, field = children
            if field not in PACKET_FIELDS + DERIVED_FIELDS:
                self.note(f"unknown packet field '{field}'", field)
            return FieldRef(self.expression(base), str(field))
        if kind == "call":
            name, *args = children
            if name != "packet":
                self.note(f"unknown function '{name}'", name)
            elif not 3 <= len(args) <= 5:
                self.note("packet() takes type, src, dest and optional seq, retry", name)
            return Call(str(name), tuple(self.expression(a) for a in args))
        if kind == "indexed":
            return self.resolve(children[0], children[1])
        return self.resolve(children[0], None)

    def resolve(self, token: Token, index: Optional[Tree]) -> Node:
        name = str(token)
        if index is None:
            if name in ("true", "false", "none"):
                return Literal({"true": True, "false": False, "none": None}[name])
            if name in self.bindings:
                return BindingRef(name)
            if name in self.params:
                return ParamRef(name, self.params[name])
            if name in self.constants:
                return ConstRef(name, self.constants[name])
            if any(p.name == name for p in self.ptypes):
                return PtypeRef(name)
        if name in self.slots:
            base, decl = self.slots[name]
            if decl.size is None:
                if index is not None:
                    self.note(f"'{name}' is not an array", token)
                return StoreRef(name, base, None, None)
            if index is None:
                self.note(f"array '{name}' used without an index", token)
                return StoreRef(name, base, decl.size, Literal(0))
            return StoreRef(name, base, decl.size, self.expression(index))
        if index is not None:
            self.note(f"'{name}' is not an array", token)
            return Literal(None)
        self.note(f"unknown variable '{name}'", token)
        return Literal(None)


def parse_model(text: str) -> ProtocolModel:
    """Parse and validate model source, raising ModelError with diagnostics."""
    try:
        tree = _PARSER.parse(text, start="model")
    except UnexpectedInput as e:
        raise ModelError([_syntax_diagnostic(e)])
    builder = _ModelBuilder()
    model = builder.build(tree)
    if builder.diagnostics:
        raise ModelError(builder.diagnostics)
    logger.debug("Parsed model %s: %d automata, %d store slots",
                 model.name, len(model.automata), model.store_size)
    return model
