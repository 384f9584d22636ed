"""
Utility functions for reading and writing workbench files: models, sniffer
traces, ground-truth logs, policy tables, verdicts and campaign summaries.

Every function returns a dictionary with a ``status`` of ``success`` or
``error``; failures are logged, never raised.
"""
import json
import os
from typing import Any, Dict, Iterable, List
import logging

from model.packet import Packet, Vocabulary
from utils.errors import VerifiError

logger = logging.getLogger("verifi.files")

PACKET_COLUMNS = ["index", "ptype", "src", "dest", "seq", "retry", "length", "rate", "t_us"]
# the sniffer is the PacketSniper, so its log knows which packets it jammed
TRACE_COLUMNS = PACKET_COLUMNS + ["jammed"]
GROUND_TRUTH_COLUMNS = PACKET_COLUMNS + ["observed", "received", "jammed"]


def create_directory(path: str) -> Dict[str, Any]:
    """
    Create a new directory.

    Args:
        path: Path of the directory to create

    Returns:
        Dictionary with status and message
    """
    try:
        os.makedirs(path, exist_ok=True)
        return {
            "status": "success",
            "message": f"Directory created successfully: {path}"
        }
    except OSError as e:
        logger.error(f"Error creating directory {path}: {e}")
        return {
            "status": "error",
            "message": f"Failed to create directory: {str(e)}"
        }


def write_text(path: str, text: str) -> Dict[str, Any]:
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text if text.endswith("\n") else text + "\n")
        return {"status": "success", "message": f"Wrote {path}", "path": path}
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        return {"status": "error", "message": f"Failed to write {path}: {str(e)}"}


def read_text(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return {"status": "success", "text": f.read()}
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Error reading {path}: {e}")
        return {"status": "error", "message": f"Failed to read {path}: {str(e)}"}


def load_model(path: str) -> Dict[str, Any]:
    """
    Read and parse a model file.

    Args:
        path: Path of the model file

    Returns:
        Dictionary with status and either ``model`` or ``message`` (and
        ``diagnostics`` when the text does not parse)
    """
    from model.parser import parse_model

    read = read_text(path)
    if read["status"] != "success":
        return read
    try:
        model = parse_model(read["text"])
    except VerifiError as e:
        logger.error(f"Invalid model {path}: {e}")
        return {
            "status": "error",
            "message": f"Invalid model {path}: {str(e)}",
            "diagnostics": [str(d) for d in getattr(e, "diagnostics", [])],
        }
    return {"status": "success", "model": model}


def write_json(path: str, data: Any) -> Dict[str, Any]:
    """Write ``data`` as indented JSON with sorted keys."""
    return write_text(path, json.dumps(data, indent=2, sort_keys=True))


def read_json(path: str) -> Dict[str, Any]:
    read = read_text(path)
    if read["status"] != "success":
        return read
    try:
        return {"status": "success", "data": json.loads(read["text"])}
    except ValueError as e:
        logger.error(f"Malformed JSON in {path}: {e}")
        return {"status": "error", "message": f"Malformed JSON in {path}: {str(e)}"}


def _packet_cells(packet: Packet) -> List[str]:
    return [packet.ptype, str(packet.src), str(packet.dest), str(packet.seq),
            "1" if packet.retry else "0", str(packet.length), str(packet.rate)]


def _flag(value: bool) -> str:
    return "1" if value else "0"


def write_trace(path: str, records: Iterable[Any]) -> Dict[str, Any]:
    """
    Write a sniffer trace: one packet per line under a column header.

    Args:
        path: Output file
        records: objects with ``index``, ``packet``, ``t_us`` and ``jammed``
    """
    lines = [" ".join(TRACE_COLUMNS)]
    for r in records:
        lines.append(" ".join([str(r.index), *_packet_cells(r.packet), f"{r.t_us:.2f}", _flag(r.jammed)]))
    return write_text(path, "\n".join(lines))


def write_ground_truth(path: str, records: Iterable[Any]) -> Dict[str, Any]:
    """Every transmitted packet with its observed/received/jammed flags; the first two only the harness knows."""
    lines = [" ".join(GROUND_TRUTH_COLUMNS)]
    for r in records:
        lines.append(" ".join([str(r.index), *_packet_cells(r.packet), f"{r.t_us:.2f}",
                               _flag(r.observed), _flag(r.received), _flag(r.jammed)]))
    return write_text(path, "\n".join(lines))


def read_trace(path: str, vocabulary: Vocabulary) -> Dict[str, Any]:
    """
    Read a sniffer trace written by ``write_trace``. A missing ``jammed``
    column reads as not jammed.

    Returns:
        Dictionary with status and ``records`` (list of SnifferRecord)
    """
    from harness.session import SnifferRecord

    read = read_text(path)
    if read["status"] != "success":
        return read
    records = []
    for lineno, line in enumerate(read["text"].splitlines(), start=1):
        cells = line.split()
        if not cells or cells[0] == TRACE_COLUMNS[0]:
            continue
        try:
            if len(cells) < len(PACKET_COLUMNS):
                raise ValueError(f"expected at least {len(PACKET_COLUMNS)} columns, got {len(cells)}")
            ptype = cells[1]
            if ptype not in vocabulary:
                raise ValueError(f"unknown packet type {ptype}")
            packet = Packet(ptype, int(cells[2]), int(cells[3]), int(cells[4]), cells[5] == "1",
                            int(cells[6]), int(cells[7]), vocabulary.get(ptype).code)
            jammed = len(cells) > len(PACKET_COLUMNS) and cells[len(PACKET_COLUMNS)] == "1"
            records.append(SnifferRecord(int(cells[0]), packet, float(cells[8]), jammed))
        except ValueError as e:
            logger.error(f"Bad trace line {path}:{lineno}: {e}")
            return {"status": "error", "message": f"{path}:{lineno}: {str(e)}"}
    return {"status": "success", "records": records}


def list_traces(path: str) -> Dict[str, Any]:
    """Trace files of a campaign directory (``*.trace``), sorted by name."""
    if os.path.isfile(path):
        return {"status": "success", "files": [path]}
    if not os.path.isdir(path):
        return {"status": "error", "message": f"No such trace file or directory: {path}"}
    files = sorted(os.path.join(path, f) for f in os.listdir(path) if f.endswith(".trace"))
    return {"status": "success", "files": files}
