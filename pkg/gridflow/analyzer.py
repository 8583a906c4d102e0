"""
Diagnostics over solved states and control traces.

Key Features:
- per-line angle difference, cos(delta_ij), flow, loss and loss percentage
- loss-percentage validity rule for the zero-angle approximation
- side-by-side comparison of two gradient modes on identical inputs
- settling time of bus voltages after each load event
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from gridflow.controller import (
    DEFAULT_DT,
    DEFAULT_EPS,
    DEFAULT_HORIZON,
    SimulationTrace,
    run_scenario,
)
from gridflow.model import Branch, GradientMode, LoadEvent, Network
from gridflow.objective import ObjectiveBreakdown
from gridflow.powerflow import Admittance, PowerFlowSolution, branch_flows
from gridflow.util.log import LOG

DEFAULT_THRESHOLD_PCT = 8.0
DEFAULT_BAND = 1e-3
ZERO_FLOW = 1e-9
COMPARED_FIELDS = ("f", "loss_term", "dev_term", "cost_term", "p_loss", "d_v", "c_q")


@dataclass(frozen=True)
class LineDiagnostics:
    branch: Branch
    delta_i: float
    delta_j: float
    delta_ij: float
    cos_dij: float
    flow: float
    loss: float
    loss_pct: Optional[float]
    approx_ok: bool

    @property
    def label(self) -> str:
        return self.branch.label

    @property
    def delta_i_deg(self) -> float:
        return math.degrees(self.delta_i)

    @property
    def delta_j_deg(self) -> float:
        return math.degrees(self.delta_j)

    @property
    def delta_ij_deg(self) -> float:
        return math.degrees(self.delta_ij)


def line_diagnostics(
    net: Network,
    y: Admittance,
    sol: PowerFlowSolution,
    threshold_pct: float = DEFAULT_THRESHOLD_PCT,
) -> list[LineDiagnostics]:
    """
    One record per branch. loss_pct is the branch loss as a percentage of the
    sending-end real flow; a branch without flow has no percentage and is
    always acceptable.
    """
    diagnostics = []
    for flow in branch_flows(net, y, sol):
        delta_i = float(sol.delta[y.position(flow.branch.from_bus)])
        delta_j = float(sol.delta[y.position(flow.branch.to_bus)])
        delta_ij = delta_i - delta_j
        if abs(flow.p_from) > ZERO_FLOW:
            loss_pct = 100.0 * max(flow.loss, 0.0) / abs(flow.p_from)
            approx_ok = loss_pct <= threshold_pct
        else:
            loss_pct = None
            approx_ok = True
        diagnostics.append(
            LineDiagnostics(
                branch=flow.branch,
                delta_i=delta_i,
                delta_j=delta_j,
                delta_ij=delta_ij,
                cos_dij=math.cos(delta_ij),
                flow=flow.p_from,
                loss=flow.loss,
                loss_pct=loss_pct,
                approx_ok=approx_ok,
            )
        )
    return diagnostics


def flagged(diagnostics: Iterable[LineDiagnostics]) -> list[LineDiagnostics]:
    return [line for line in diagnostics if not line.approx_ok]


@dataclass(frozen=True)
class ModeResult:
    mode: GradientMode
    breakdown: ObjectiveBreakdown
    q_ctrl: np.ndarray
    source_buses: tuple[int, ...]
    iterations: Optional[int]
    converged: bool
    wall_time: float
    trace: SimulationTrace = field(repr=False)

    @property
    def label(self) -> str:
        if self.mode is GradientMode.APPROX:
            return "with approximation"
        return "without approximation"

    @property
    def total_q(self) -> float:
        return float(np.sum(self.q_ctrl))


@dataclass(frozen=True)
class ComparisonReport:
    first: ModeResult
    second: ModeResult

    @property
    def results(self) -> tuple[ModeResult, ModeResult]:
        return self.first, self.second

    @property
    def deltas(self) -> dict[str, float]:
        """second - first for every compared quantity; wall time excluded."""
        a, b = self.first, self.second
        deltas = {
            name: getattr(b.breakdown, name) - getattr(a.breakdown, name)
            for name in COMPARED_FIELDS
        }
        deltas["total_q"] = b.total_q - a.total_q
        for bus, qa, qb in zip(a.source_buses, a.q_ctrl, b.q_ctrl):
            deltas[f"Q_G{bus}"] = float(qb - qa)
        if a.iterations is not None and b.iterations is not None:
            deltas["iterations"] = float(b.iterations - a.iterations)
        else:
            deltas["iterations"] = math.nan
        return deltas


def _run_mode(
    net: Network,
    events: list[LoadEvent],
    mode: GradientMode,
    eps: float,
    dt: float,
    horizon: int,
) -> ModeResult:
    started = time.perf_counter()
    trace = run_scenario(net, events, mode, eps, dt, horizon)
    elapsed = time.perf_counter() - started
    LOG.info(f"{mode.value} run finished in {elapsed:.3f}s")
    final = trace.final
    return ModeResult(
        mode=mode,
        breakdown=final.objective,
        q_ctrl=final.q_ctrl,
        source_buses=tuple(source.bus for source in net.sources),
        iterations=trace.iterations_to_tolerance(),
        converged=trace.converged,
        wall_time=elapsed,
        trace=trace,
    )


def compare_modes(
    net: Network,
    events: Iterable[LoadEvent] = (),
    eps: float = DEFAULT_EPS,
    dt: float = DEFAULT_DT,
    horizon: int = DEFAULT_HORIZON,
    modes: tuple[GradientMode, GradientMode] = (
        GradientMode.APPROX,
        GradientMode.EXACT,
    ),
) -> ComparisonReport:
    """Run two scenarios on identical inputs, concurrently, and tabulate them."""
    events = list(events)
    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="compare") as pool:
        futures = [
            pool.submit(_run_mode, net, events, mode, eps, dt, horizon)
            for mode in modes
        ]
        first, second = (future.result() for future in futures)
    return ComparisonReport(first=first, second=second)


@dataclass(frozen=True)
class EventSettling:
    event: str
    start: int
    iterations: int
    settled: bool
    segment_length: int


@dataclass(frozen=True)
class SettlingReport:
    band: float
    entries: tuple[EventSettling, ...]

    def by_event(self) -> dict[str, EventSettling]:
        return {entry.event: entry for entry in self.entries}


def settling_time(
    trace: SimulationTrace,
    events: Optional[Iterable[LoadEvent]] = None,
    band: float = DEFAULT_BAND,
) -> SettlingReport:
    """
    Iterations from each event until every bus voltage stays within band of
    the segment's final value. A segment that never reached tolerance and
    did not stay inside the band is reported at its full length with
    settled=False.
    """
    names = None if events is None else {ev.name for ev in events}
    entries = []
    for segment in trace.segments:
        if names is None and segment.event == trace.segments[0].event:
            continue
        if names is not None and segment.event not in names:
            continue
        records = trace.segment_records(segment)
        steady = records[-1].v
        settle = len(records) - 1
        while settle > 0 and np.all(np.abs(records[settle - 1].v - steady) <= band):
            settle -= 1
        settled = segment.converged or settle == 0
        entries.append(
            EventSettling(
                event=segment.event,
                start=segment.start,
                iterations=(
                    records[settle].iteration - segment.start
                    if settled
                    else segment.length
                ),
                settled=settled,
                segment_length=segment.length,
            )
        )
    return SettlingReport(band=band, entries=tuple(entries))
