"""
Canonical pretty-printer; ``parse_model(pretty_print(m)) == m``.

Standard-library automata are printed expanded, so a printed model carries no
``stdlib`` directive.
"""
from typing import Any, List

from model.ir import Automaton, ProtocolModel, Transition, VarDecl

INDENT = "  "


def _value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _size(size) -> str:
    return "" if size is None else f"[{size}]"


def _var(decl: VarDecl) -> str:
    if decl.kind == "int":
        return f"int {decl.name}{_size(decl.size)} [{decl.lo}, {decl.hi}] = {decl.default}"
    if decl.kind == "bool":
        return f"bool {decl.name}{_size(decl.size)} = {_value(decl.default)}"
    return f"packet {decl.name}{_size(decl.size)}"


def _transition(t: Transition) -> str:
    clauses: List[str] = []
    if t.selects:
        clauses.append("select " + ", ".join(f"{s.name} : int [{s.lo}, {s.hi}]" for s in t.selects))
    if t.guard is not None:
        clauses.append("guard " + t.guard.to_source())
    if t.sync is not None:
        index = "" if t.sync.index is None else f"[{t.sync.index.to_source()}]"
        clauses.append(f"sync {t.sync.channel}{index}{t.sync.direction}")
    if t.updates:
        clauses.append("assign " + ", ".join(u.to_source() for u in t.updates))
    body = " ".join(c + ";" for c in clauses)
    return f"{t.source} -> {t.target} {{ {body} }}" if body else f"{t.source} -> {t.target} {{ }}"


def _automaton(a: Automaton) -> List[str]:
    params = ""
    if a.params:
        params = "(" + ", ".join(f"{k} = {_value(v)}" for k, v in a.params) + ")"
    lines = [f"automaton {a.name}{params} {a.role}"]
    if a.locations:
        lines.append(f"{INDENT}locations {', '.join(a.locations)}")
    lines.append(f"{INDENT}initial {a.initial}")
    if a.finals:
        lines.append(f"{INDENT}final {', '.join(a.finals)}")
    lines.extend(INDENT + _transition(t) for t in a.transitions)
    lines.append("end")
    return lines


def pretty_print(model: ProtocolModel) -> str:
    """Deterministic source text for a model (declaration order preserved)."""
    lines = [f"model {model.name}", f"devices {model.device_count}"]
    lines.extend(f"const {name} = {value}" for name, value in model.constants)
    for p in model.vocabulary:
        lines.append(f"ptype {p.name} code {p.code} length {p.length} rate {p.rate}" + (" ack" if p.ack else ""))
    for c in model.channels:
        lines.append(f"chan {c.name}{_size(c.size)}" + (" nonblocking" if c.nonblocking else ""))
    lines.extend(_var(v) for v in model.variables)
    for a in model.automata:
        lines.append("")
        lines.extend(_automaton(a))
    return "\n".join(lines) + "\n"
