"""
Reusable MAC/PHY processes shared by every protocol model.

Per device ``id``:

* ``T<id>`` accepts a packet from its owner on ``mac_tx_start[id]``, stamps
  source, sequence number and retry flag, transmits on ``phy_tx_start`` and
  waits for the matching ACK. Once the exchange has settled without an ACK it
  retransmits, up to RETRY_LIMIT transmissions in total, then reports the
  outcome on ``mac_tx_done[id]`` with ``tx_ok[id]``.
* ``R<id>`` takes packets addressed to ``id`` off the medium, ACKs data
  packets, drops retransmissions it has already delivered and hands the rest
  to its owner on ``mac_rx_end[id]``.

``Medium`` resolves the loss switch of every packet (``select i``; 0 = lost)
and ``Sniffer`` resolves the independent observation switch the same way.
An untimed model has no ACK timeout, so ``settled[id]`` marks a data packet
whose fate is known (ACKed, lost, or its ACK lost) and ``ack_due`` gives a
pending ACK priority over new data.
"""
import logging
from typing import List, Optional, Sequence

from model.ir import Automaton, Diagnostic
from utils.errors import ModelError

logger = logging.getLogger("verifi.model.stdlib")

SEQ_MOD = 4
DEFAULT_ACK_CODE = 0xD4
DEFAULT_ACK_LENGTH = 14

STDLIB_AUTOMATA = ("T", "R", "Medium", "Sniffer")


def _declarations(n: int, retry_limit: int) -> str:
    return f"""
const NUM_DEVICE = {n}
const RETRY_LIMIT = {retry_limit}
const SEQ_MOD = {SEQ_MOD}
chan mac_tx_start[{n}]
chan mac_tx_done[{n}] nonblocking
chan mac_rx_end[{n}] nonblocking
chan ack_rx[{n}] nonblocking
chan phy_tx_start
chan phy_rx_end
chan sniff_tap
packet pkt_to_send[{n}]
packet pkt_recvd[{n}]
packet pkt_in_air
packet rx_buf[{n}]
bool tx_ok[{n}] = false
bool settled[{n}] = true
bool ack_due = false
bool medium_loss = false
int tx_seq[{n}] [0, {SEQ_MOD - 1}] = 0
int tx_tries[{n}] [0, {retry_limit}] = 0
int rx_last[{n * n}] [-1, {SEQ_MOD - 1}] = -1
"""


def _transmitter(i: int) -> str:
    return f"""
automaton T{i}(id = {i}) stdlib
  locations idle, ready, wait_ack, ok, fail
  initial idle
  idle -> ready {{ sync mac_tx_start[id]?; assign pkt_to_send[id].src = id, pkt_to_send[id].seq = tx_seq[id], pkt_to_send[id].retry = false, tx_tries[id] = 0; }}
  ready -> wait_ack {{ guard !ack_due; sync phy_tx_start!; assign pkt_in_air = pkt_to_send[id], tx_tries[id] = tx_tries[id] + 1, settled[id] = false; }}
  wait_ack -> ok {{ sync ack_rx[id]?; assign tx_ok[id] = true, settled[id] = true; }}
  wait_ack -> ready {{ guard settled[id] && tx_tries[id] < RETRY_LIMIT; assign pkt_to_send[id].retry = true; }}
  wait_ack -> fail {{ guard settled[id] && tx_tries[id] >= RETRY_LIMIT; assign tx_ok[id] = false; }}
  ok -> idle {{ sync mac_tx_done[id]!; assign tx_seq[id] = (tx_seq[id] + 1) % SEQ_MOD, pkt_to_send[id] = none; }}
  fail -> idle {{ sync mac_tx_done[id]!; assign tx_seq[id] = (tx_seq[id] + 1) % SEQ_MOD, pkt_to_send[id] = none; }}
end
"""


def _receiver(i: int, ack: str) -> str:
    last = "rx_last[id * NUM_DEVICE + rx_buf[id].src]"
    return f"""
automaton R{i}(id = {i}, ack = {ack}) stdlib
  locations idle, got, send_ack, check, deliver
  initial idle
  idle -> got {{ guard pkt_in_air.dest == id; sync phy_rx_end?; assign rx_buf[id] = pkt_in_air, ack_due = !pkt_in_air.ack, pkt_in_air = none; }}
  got -> idle {{ guard rx_buf[id].ack; sync ack_rx[id]!; assign settled[id] = true, rx_buf[id] = none; }}
  got -> send_ack {{ guard !rx_buf[id].ack; }}
  send_ack -> check {{ sync phy_tx_start!; assign pkt_in_air = packet(ack, id, rx_buf[id].src), ack_due = false; }}
  check -> deliver {{ guard !(rx_buf[id].retry && {last} == rx_buf[id].seq); assign {last} = rx_buf[id].seq, pkt_recvd[id] = rx_buf[id], rx_buf[id] = none; }}
  check -> idle {{ guard rx_buf[id].retry && {last} == rx_buf[id].seq; assign rx_buf[id] = none; }}
  deliver -> idle {{ sync mac_rx_end[id]!; }}
end
"""


MEDIUM = """
automaton Medium medium
  locations idle, got_pkt, tapped
  initial idle
  idle -> got_pkt { select i : int [0, 1]; sync phy_tx_start?; assign medium_loss = i == 0; }
  got_pkt -> tapped { sync sniff_tap!; }
  tapped -> idle { guard medium_loss && !pkt_in_air.ack; assign settled[pkt_in_air.src] = true, pkt_in_air = none, medium_loss = false; }
  tapped -> idle { guard medium_loss && pkt_in_air.ack; assign settled[pkt_in_air.dest] = true, pkt_in_air = none, medium_loss = false; }
  tapped -> idle { guard !medium_loss; sync phy_rx_end!; }
end
"""

SNIFFER = """
automaton Sniffer sniffer
  locations idle
  initial idle
  idle -> idle { select i : int [0, 1]; sync sniff_tap?; }
end
"""


def stdlib_source(device_count: int, retry_limit: int, ack_types: Sequence[str]) -> str:
    """Model-language text for the shared declarations and stdlib automata.

    ``ack_types[id]`` is the packet type device ``id`` sends as its ACK.
    """
    problems: List[Diagnostic] = []
    if device_count < 2:
        problems.append(Diagnostic(f"stdlib needs at least 2 devices, got {device_count}"))
    if retry_limit < 1:
        problems.append(Diagnostic(f"retry limit must be positive, got {retry_limit}"))
    if len(ack_types) != device_count:
        problems.append(Diagnostic(f"expected {device_count} ack types, got {len(ack_types)}"))
    if problems:
        raise ModelError(problems)
    parts = [_declarations(device_count, retry_limit)]
    parts.extend(_transmitter(i) for i in range(device_count))
    parts.extend(_receiver(i, ack_types[i]) for i in range(device_count))
    parts.append(MEDIUM)
    parts.append(SNIFFER)
    return "".join(parts)


def instantiate_stdlib(device_count: int, retry_limit: int = 3,
                       ack_types: Optional[Sequence[str]] = None) -> List[Automaton]:
    """
    Build and validate the T/R/Medium/Sniffer automata for ``device_count`` devices.

    Without ``ack_types`` every device ACKs with a generic 14-byte ``ACK`` type.
    """
    from model.parser import parse_model

    if ack_types is None:
        header = f"ptype ACK code {DEFAULT_ACK_CODE} length {DEFAULT_ACK_LENGTH} rate 6 ack\n"
        ack_types = ["ACK"] * max(device_count, 0)
    else:
        header = "".join(
            f"ptype {name} code {DEFAULT_ACK_CODE + i} length {DEFAULT_ACK_LENGTH} rate 6 ack\n"
            for i, name in enumerate(dict.fromkeys(ack_types))
        )
    text = f"model stdlib\ndevices {device_count}\n{header}" + stdlib_source(device_count, retry_limit, ack_types)
    model = parse_model(text)
    logger.debug("Instantiated stdlib for %d devices (retry limit %d)", device_count, retry_limit)
    return list(model.automata)
