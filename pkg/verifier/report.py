"""
Coverage reports over verified campaign traces.

Each trace is searched once up to the largest k of interest; the per-k
Accepted / Rejected / Reached counts are read off that single search.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from harness.campaign import CampaignResult
from model.ir import ProtocolModel
from verifier.verifier import INCONCLUSIVE, REJECTED, SearchResult, search

logger = logging.getLogger("verifi.verifier.report")

NO_VIOLATION = "no violation observed"
VIOLATION = "violation"


@dataclass(frozen=True)
class TraceVerification:
    """One trace, the target its session was steered to, and its search result."""

    name: str
    target: Optional[Tuple[str, ...]]
    label: str
    result: SearchResult
    ground_truth_losses: Optional[int] = None

    def status(self, k: int) -> str:
        return self.result.verdict(k, self.target is not None).status

    def reached(self, k: int) -> bool:
        return bool(self.result.verdict(k, self.target is not None).reached_target)

    @property
    def minimal_k(self) -> Optional[int]:
        return self.result.accept_k


@dataclass
class CoverageReport:
    k_list: List[int]
    rows: List[Dict[str, int]] = field(default_factory=list)
    reach_matrix: Dict[str, Dict[int, int]] = field(default_factory=dict)
    rejected: List[Tuple[str, Optional[int]]] = field(default_factory=list)
    traces: int = 0

    def row(self, k: int) -> Dict[str, int]:
        for row in self.rows:
            if row["k"] == k:
                return row
        raise KeyError(k)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k_list": self.k_list,
            "traces": self.traces,
            "rows": self.rows,
            "reach_matrix": {label: {str(k): n for k, n in per_k.items()}
                             for label, per_k in self.reach_matrix.items()},
            "rejected": [{"trace": name, "minimal_k": mk} for name, mk in self.rejected],
            "accepted_label": NO_VIOLATION,
        }


def verify_campaign(model: ProtocolModel, campaign_result: CampaignResult, kmax: int,
                    budget: int = 1_000_000, strict: bool = True, workers: int = 1) -> List[TraceVerification]:
    """Search every sniffer trace of a campaign once, up to ``kmax`` losses."""
    jobs = []
    for outcome in campaign_result.outcomes:
        if outcome.result is None:
            continue
        name = f"{outcome.label}#{outcome.repetition}"
        jobs.append((name, outcome.target, outcome.label, outcome.result.trace, outcome.result.sniffer_losses))

    def run(job):
        name, target, label, trace, losses = job
        return TraceVerification(name, target, label, search(model, trace, kmax, target, budget, strict), losses)

    if workers <= 1:
        verified = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            verified = list(pool.map(run, jobs))
    logger.info("Verified %d traces up to k=%d", len(verified), kmax)
    return verified


def coverage_report(verified: Sequence[TraceVerification], k_list: Sequence[int]) -> CoverageReport:
    """Per-k counts, per-target reach matrix and rejected traces ranked by minimal k."""
    ks = sorted(set(k_list))
    report = CoverageReport(k_list=ks, traces=len(verified))
    for k in ks:
        row = {"k": k, "accepted": 0, "rejected": 0, "inconclusive": 0, "reached": 0}
        for tv in verified:
            status = tv.status(k)
            row[status] += 1
            if tv.target is not None and tv.reached(k):
                row["reached"] += 1
                per_k = report.reach_matrix.setdefault(tv.label, {kk: 0 for kk in ks})
                per_k[k] += 1
        report.rows.append(row)
        if row["inconclusive"]:
            logger.warning("%d traces inconclusive at k=%d", row["inconclusive"], k)
    for tv in verified:
        if tv.target is not None:
            report.reach_matrix.setdefault(tv.label, {kk: 0 for kk in ks})
    kmin = ks[0] if ks else 0
    # never accepted first, then hardest to explain
    ranked = [(tv.name, tv.minimal_k) for tv in verified if tv.minimal_k is None or tv.minimal_k > kmin]
    ranked.sort(key=lambda item: (item[1] is not None, -(item[1] or 0), item[0]))
    report.rejected = ranked
    return report


def verdict_label(status: str) -> str:
    """Wording used for a verdict in reports: acceptance is not proof of correctness."""
    if status == REJECTED:
        return VIOLATION
    if status == INCONCLUSIVE:
        return INCONCLUSIVE
    return NO_VIOLATION


def format_report(report: CoverageReport) -> str:
    """Summary table with one column per k."""
    header = ["", *[f"k={k}" for k in report.k_list]]
    lines = []
    for key, title in (("accepted", "Accepted"), ("rejected", "Rejected"), ("reached", "Reached")):
        lines.append([title, *[str(row[key]) for row in report.rows]])
    if any(row["inconclusive"] for row in report.rows):
        lines.append(["Inconclusive", *[str(row["inconclusive"]) for row in report.rows]])
    width = max(len(cell) for cell in header + [c for line in lines for c in line]) + 2
    out = ["".join(cell.ljust(width) for cell in header).rstrip()]
    out += ["".join(cell.ljust(width) for cell in line).rstrip() for line in lines]
    out.append(f"Accepted traces: {NO_VIOLATION} (the implementation could have behaved as the model allows).")
    if report.rejected:
        out.append("Rejected traces (never accepted first, then by minimal k):")
        for name, mk in report.rejected:
            out.append(f"  {name}: {'none' if mk is None else f'k={mk}'}")
    return "\n".join(out)
