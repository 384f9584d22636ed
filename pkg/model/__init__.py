"""
Protocol model language: packets, expressions, automata, parser and printer.
"""
from model.ir import Automaton, ProtocolModel, Transition
from model.packet import LINK_SETUP_VOCABULARY, Packet, PacketType, Vocabulary
from model.parser import parse_model
from model.printer import pretty_print
from model.stdlib import instantiate_stdlib

__all__ = [
    "Automaton",
    "ProtocolModel",
    "Transition",
    "Packet",
    "PacketType",
    "Vocabulary",
    "LINK_SETUP_VOCABULARY",
    "parse_model",
    "pretty_print",
    "instantiate_stdlib",
]
