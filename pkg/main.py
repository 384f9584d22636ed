#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
VeriFi
------
Desk-scale runtime verification of a Wi-Fi link-setup implementation:
analyze a protocol model into jamming policies, drive simulated sessions with
them, and check the sniffed traces against the model.
"""

import os
import sys
import logging
import argparse
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from engine.analyzer import dump_table, policy_table, table_from_dict, parse_system_state
from harness.campaign import CampaignConfig, baseline_campaign, campaign
from harness.config import FaultFlag
from model.packet import HEADER_LENGTH
from sniper.sniper import SniperConfig
from utils.config import get_defaults, parse_k_list
from utils.errors import StateSpaceExceeded, VerifiError
from utils.file_operations import (
    create_directory,
    list_traces,
    load_model,
    read_json,
    read_trace,
    write_ground_truth,
    write_json,
    write_text,
    write_trace,
)
from verifier.report import TraceVerification, coverage_report, format_report, verdict_label
from verifier.verifier import search

logger = logging.getLogger("verifi")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3

MODEL_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "models")
BUNDLED_MODELS = {
    "full": os.path.join(MODEL_DIR, "link_setup.model"),
    "auth": os.path.join(MODEL_DIR, "auth_stage.model"),
}
TABLE_FILE = "policy_table.json"
MANIFEST_FILE = "campaign.json"


class CliConfig(BaseModel):
    """Validated command-line settings after environment defaults are applied."""

    model_config = ConfigDict(frozen=True)

    command: str
    model: str
    policies: Optional[str] = None
    traces: Optional[str] = None
    k_list: Tuple[int, ...] = (0, 2, 4, 6, 8, 10)
    kmax: int = Field(default=10, ge=0)
    seed: int = 0
    reps: int = Field(default=10, ge=0)
    faults: Tuple[FaultFlag, ...] = ()
    sniffer_loss: float = Field(default=0.0, ge=0.0, le=1.0)
    baseline_loss: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    budget: int = Field(default=1_000_000, gt=0)
    out: str = "out"
    strict: bool = True
    workers: int = Field(default=1, ge=1)
    target: Optional[str] = None
    max_events: int = Field(default=10_000, gt=0)
    short_packet_threshold: int = Field(default=14, ge=0)
    jam_success_prob: float = Field(default=1.0, ge=0.0, le=1.0)
    decode_miss_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    max_header_bytes: int = Field(default=HEADER_LENGTH, ge=0, le=HEADER_LENGTH)
    client_restart: bool = False
    internal_queueing: bool = False
    steer: bool = True

    @field_validator("k_list")
    @classmethod
    def _k_list(cls, value):
        if not value or any(k < 0 for k in value):
            raise ValueError("k list must be a non-empty list of non-negative integers")
        return tuple(sorted(set(value)))


def setup_logging(log_file: Optional[str], verbose: bool) -> None:
    """Configure the root logger the same way for every subcommand."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments; defaults come from ``VERIFI_*`` settings."""
    defaults = get_defaults()
    parser = argparse.ArgumentParser(description="VeriFi - model-guided runtime verification of link setup")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    parser.add_argument("--log-file", type=str, default=defaults["log_file"], help="Log file ('' disables)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", type=str, help="Protocol model file (default: bundled model for --stage)")
    common.add_argument("--stage", choices=["auth", "full"], default="full", help="Bundled model to use")
    common.add_argument("--budget", type=int, default=defaults["budget"], help="State-space node budget")
    common.add_argument("--out", type=str, default=defaults["out"], help="Output directory")
    common.add_argument("--workers", type=int, default=defaults["workers"],
                        help="Parallel workers (default: CPU count; output does not depend on it)")

    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("analyze", parents=[common], help="Compute reachable states and jamming policies")

    sim = subparsers.add_parser("simulate", parents=[common], help="Run guided or baseline sessions")
    sim.add_argument("--policies", type=str, help=f"Policy table (default: <out>/{TABLE_FILE}, else analyze)")
    sim.add_argument("--seed", type=int, default=defaults["seed"])
    sim.add_argument("--reps", type=int, default=defaults["reps"], help="Repetitions per target (or baseline sessions)")
    sim.add_argument("--fault", action="append", default=[], choices=[f.value for f in FaultFlag],
                     help="Inject a DUT fault (repeatable)")
    sim.add_argument("--sniffer-loss", type=float, default=defaults["sniffer_loss"])
    sim.add_argument("--baseline-loss", type=float, default=defaults["baseline_loss"],
                     help="Run an unguided baseline with this medium loss probability")
    sim.add_argument("--short-threshold", type=int, default=defaults["short_packet_threshold"])
    sim.add_argument("--jam-success", type=float, default=defaults["jam_success_prob"])
    sim.add_argument("--decode-miss", type=float, default=defaults["decode_miss_prob"])
    sim.add_argument("--max-header-bytes", type=int, default=defaults["max_header_bytes"],
                     help="Header bytes the jammer decodes before deciding")
    sim.add_argument("--max-events", type=int, default=defaults["max_events"])
    sim.add_argument("--client-restart", action="store_true", help="Client restarts the handshake once after failing")
    sim.add_argument("--internal-queueing", action="store_true",
                     help="Client queues a fresh AUTH_REQ when its first one fails")
    sim.add_argument("--no-steer", action="store_true",
                     help="Let the devices order their own events instead of following each policy's model run")

    ver = subparsers.add_parser("verify", parents=[common], help="Verify sniffer traces against the model")
    ver.add_argument("--traces", type=str, help="Trace file or directory (default: <out>/traces)")
    ver.add_argument("--k", type=str, default=",".join(str(k) for k in defaults["k_list"]),
                     help="Comma separated loss budgets, e.g. 0,2,4")
    ver.add_argument("--kmax", type=int, default=defaults["kmax"], help="Largest budget for minimal-k search")
    ver.add_argument("--target", type=str, help="Target state, e.g. 'Client.s1,AP.t3' (default: from manifest)")
    mode = ver.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                      help="Require quiescence after the trace (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false", help="Only require the trace consumed")

    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> CliConfig:
    """
    Raises:
        ValidationError: a numeric flag is out of range
        ValueError: malformed k list
    """
    values: Dict[str, Any] = {
        "command": args.command,
        "model": args.model or BUNDLED_MODELS[args.stage],
        "budget": args.budget,
        "out": args.out,
        "workers": args.workers,
    }
    if args.command == "simulate":
        values.update(
            policies=args.policies, seed=args.seed, reps=args.reps, faults=tuple(args.fault),
            sniffer_loss=args.sniffer_loss, baseline_loss=args.baseline_loss,
            short_packet_threshold=args.short_threshold, jam_success_prob=args.jam_success,
            decode_miss_prob=args.decode_miss, max_header_bytes=args.max_header_bytes, max_events=args.max_events,
            client_restart=args.client_restart, internal_queueing=args.internal_queueing, steer=not args.no_steer,
        )
    elif args.command == "verify":
        values.update(traces=args.traces, k_list=tuple(parse_k_list(args.k)), kmax=args.kmax,
                      target=args.target, strict=args.strict)
    return CliConfig(**values)


def _load(config: CliConfig):
    result = load_model(config.model)
    if result["status"] != "success":
        print(f"Error: {result['message']}")
        for diagnostic in result.get("diagnostics", []):
            print(f"  {diagnostic}")
        return None
    return result["model"]


def cmd_analyze(config: CliConfig) -> int:
    """Write ``policy_table.json`` and print the reachable / loss-requiring summary."""
    model = _load(config)
    if model is None:
        return EXIT_USAGE
    create_directory(config.out)
    path = os.path.join(config.out, TABLE_FILE)
    code = EXIT_OK
    try:
        table = policy_table(model, config.budget)
    except StateSpaceExceeded as e:
        logger.warning("Budget exhausted; writing partial table flagged invalid")
        table = e.partial
        code = EXIT_INCONCLUSIVE
    written = write_text(path, dump_table(table, vocabulary=model.vocabulary))
    if written["status"] != "success":
        print(f"Error: {written['message']}")
        return EXIT_USAGE
    print(f"reachable {table.reachable_count} of {table.total}, loss-requiring {table.loss_requiring_count}")
    print(f"Policy table written to {path}")
    return code


def _trace_names(outcomes) -> List[str]:
    indices: Dict[str, int] = {}
    names = []
    for o in outcomes:
        if o.target is None:
            names.append(f"baseline_rep{o.repetition:03d}")
        else:
            i = indices.setdefault(o.label, len(indices))
            names.append(f"target{i:03d}_rep{o.repetition:03d}")
    return names


def cmd_simulate(config: CliConfig) -> int:
    """Run a guided (or baseline) campaign and write one trace per session."""
    model = _load(config)
    if model is None:
        return EXIT_USAGE
    campaign_config = CampaignConfig(
        seed=config.seed,
        sniffer_loss_prob=config.sniffer_loss,
        faults=frozenset(config.faults),
        workers=config.workers,
        max_events=config.max_events,
        short_packet_threshold=config.short_packet_threshold,
        sniper=SniperConfig(jam_success_prob=config.jam_success_prob, decode_miss_prob=config.decode_miss_prob,
                            max_header_bytes=config.max_header_bytes),
        client_restart_on_failure=config.client_restart,
        internal_queueing=config.internal_queueing,
        steer=config.steer,
    )
    if config.baseline_loss is not None:
        result = baseline_campaign(model, config.reps, config.baseline_loss, campaign_config)
    else:
        table_path = config.policies or os.path.join(config.out, TABLE_FILE)
        if os.path.exists(table_path):
            loaded = read_json(table_path)
            if loaded["status"] != "success":
                print(f"Error: {loaded['message']}")
                return EXIT_USAGE
            table = table_from_dict(model, loaded["data"])
        elif config.policies:
            print(f"Error: policy table not found: {config.policies}")
            return EXIT_USAGE
        else:
            table = policy_table(model, config.budget)
        result = campaign(model, table, config.reps, campaign_config)

    trace_dir = os.path.join(config.out, "traces")
    create_directory(trace_dir)
    manifest: Dict[str, Any] = {"summary": result.summary(), "traces": {}}
    for name, outcome in zip(_trace_names(result.outcomes), result.outcomes):
        entry: Dict[str, Any] = {"target": outcome.label if outcome.target else None,
                                 "seed": outcome.seed, "error": outcome.error}
        if outcome.result is not None:
            write_trace(os.path.join(trace_dir, f"{name}.trace"), outcome.result.trace)
            write_ground_truth(os.path.join(trace_dir, f"{name}.truth"), outcome.result.ground_truth)
            entry.update(sniffer_losses=outcome.result.sniffer_losses, reached=outcome.reached,
                         deadlock=outcome.result.deadlock,
                         final_state=list(outcome.result.final_state))
        manifest["traces"][name] = entry
    written = write_json(os.path.join(config.out, MANIFEST_FILE), manifest)
    if written["status"] != "success":
        print(f"Error: {written['message']}")
        return EXIT_USAGE
    summary = manifest["summary"]
    print(f"{summary['sessions']} sessions, {summary['reached_targets']} targets reached, "
          f"{summary['visited_states']} system states visited, {summary['errors']} errors")
    print(f"Traces written to {trace_dir}")
    return EXIT_OK


def cmd_verify(config: CliConfig) -> int:
    """Verify every trace once up to the largest k and print the coverage report."""
    model = _load(config)
    if model is None:
        return EXIT_USAGE
    trace_path = config.traces or os.path.join(config.out, "traces")
    listed = list_traces(trace_path)
    if listed["status"] != "success":
        print(f"Error: {listed['message']}")
        return EXIT_USAGE
    manifest_dir = trace_path if os.path.isdir(trace_path) else os.path.dirname(trace_path)
    manifest = read_json(os.path.join(os.path.dirname(os.path.abspath(manifest_dir)), MANIFEST_FILE))
    manifest_traces = manifest.get("data", {}).get("traces", {}) if manifest["status"] == "success" else {}
    kmax = max(config.kmax, max(config.k_list))
    try:
        fixed_target = parse_system_state(model, config.target) if config.target else None
    except VerifiError as e:
        print(f"Error: {e}")
        return EXIT_USAGE

    verified = []
    for path in listed["files"]:
        name = os.path.splitext(os.path.basename(path))[0]
        read = read_trace(path, model.vocabulary)
        if read["status"] != "success":
            print(f"Error: {read['message']}")
            return EXIT_USAGE
        entry = manifest_traces.get(name, {})
        target, label = fixed_target, config.target or ""
        if target is None and entry.get("target"):
            label = entry["target"]
            target = parse_system_state(model, label)
        result = search(model, read["records"], kmax, target, config.budget, config.strict)
        verified.append(TraceVerification(name, target, label or name, result, entry.get("sniffer_losses")))

    report = coverage_report(verified, config.k_list)
    verdicts = {
        tv.name: {
            "target": tv.label if tv.target else None,
            "minimal_k": tv.minimal_k,
            "ground_truth_losses": tv.ground_truth_losses,
            "verdicts": {str(k): {"status": tv.status(k), "label": verdict_label(tv.status(k)),
                                  "reached": tv.reached(k) if tv.target else None}
                         for k in config.k_list},
        }
        for tv in verified
    }
    create_directory(config.out)
    write_json(os.path.join(config.out, "verdicts.json"), verdicts)
    write_json(os.path.join(config.out, "report.json"), report.to_dict())
    text = format_report(report)
    write_text(os.path.join(config.out, "report.txt"), text)
    print(text)

    last = report.row(report.k_list[-1])
    if last["rejected"]:
        return EXIT_VIOLATION
    if last["inconclusive"]:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    args = parse_arguments(argv)
    setup_logging(args.log_file, args.verbose)
    try:
        config = build_config(args)
    except (ValidationError, ValueError) as e:
        print(f"Error: invalid arguments: {e}")
        return EXIT_USAGE
    try:
        return COMMANDS[config.command](config)
    except StateSpaceExceeded as e:
        logger.error(f"{e}")
        print(f"Error: {e}")
        return EXIT_INCONCLUSIVE
    except VerifiError as e:
        logger.error(f"Error in {config.command}: {e}")
        print(f"Error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
