"""
Discrete Lyapunov-descent reactive power control.

Key Features:
- synchronous gradient step Q[k+1] = Q[k] - dt * df/dQ with clamping to source limits
- power-flow re-solve after every step, warm-started from the previous state
- convergence on the largest gradient over sources not pinned at a limit
- load-event schedules with chained multipliers, idle segments after convergence
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from gridflow.exceptions import (
    CaseFormatException,
    CaseValidationException,
    ControlDivergedException,
)
from gridflow.model import GradientMode, LoadEvent, LoadType, Network
from gridflow.objective import ObjectiveBreakdown, combined, gradients
from gridflow.powerflow import Admittance, PowerFlowSolution, build_admittance, solve
from gridflow.util.fs import read_text
from gridflow.util.log import LOG

DEFAULT_DT = 10.0
DEFAULT_EPS = 1e-3
DEFAULT_HORIZON = 125
BASE_EVENT = "base"


@dataclass(frozen=True)
class ControlState:
    q_ctrl: np.ndarray
    iteration: int = 0
    mode: GradientMode = GradientMode.EXACT
    dt: float = DEFAULT_DT


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    event: str
    q_ctrl: np.ndarray
    objective: ObjectiveBreakdown
    v: np.ndarray
    grad_max: float
    clamped: np.ndarray


@dataclass(frozen=True)
class Segment:
    event: str
    start: int
    end: int
    converged_at: Optional[int] = None

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class SimulationTrace:
    mode: GradientMode
    records: list[IterationRecord] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    final_state: Optional[ControlState] = None
    final_solution: Optional[PowerFlowSolution] = None
    final_network: Optional[Network] = None

    def extend(self, other: "SimulationTrace") -> None:
        self.records.extend(other.records)
        self.segments.extend(other.segments)
        if other.final_state is not None:
            self.final_state = other.final_state
        if other.final_solution is not None:
            self.final_solution = other.final_solution
        if other.final_network is not None:
            self.final_network = other.final_network

    @property
    def converged(self) -> bool:
        return all(segment.converged for segment in self.segments)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    def iterations_to_tolerance(self) -> Optional[int]:
        """Steps the first segment needed to reach tolerance."""
        if not self.segments or not self.segments[0].converged:
            return None
        first = self.segments[0]
        return first.converged_at - first.start

    def segment_records(self, segment: Segment) -> list[IterationRecord]:
        return [r for r in self.records if segment.start <= r.iteration <= segment.end]


def initial_state(
    net: Network, mode: GradientMode = GradientMode.EXACT, dt: float = DEFAULT_DT
) -> ControlState:
    """Flat start: every source at zero output, pulled inside its limits."""
    q = np.clip(np.zeros(len(net.sources)), net.q_min, net.q_max)
    return ControlState(q_ctrl=q, iteration=0, mode=mode, dt=dt)


def clamped_flags(net: Network, q: np.ndarray) -> np.ndarray:
    return (q <= net.q_min) | (q >= net.q_max)


def active_gradient_norm(net: Network, q: np.ndarray, grads: np.ndarray) -> float:
    """Largest |df/dQ| over sources not held at a limit by an outward gradient."""
    pinned = ((q <= net.q_min) & (grads > 0.0)) | ((q >= net.q_max) & (grads < 0.0))
    active = np.abs(grads[~pinned])
    return float(active.max()) if active.size else 0.0


def step(
    state: ControlState,
    net: Network,
    y: Admittance,
    sol: PowerFlowSolution,
    grads: Optional[np.ndarray] = None,
) -> ControlState:
    """
    One synchronous control update: every source moves by -dt * df/dQ_Gi,
    all gradients taken against the same solved state, then clamped.
    """
    if grads is None:
        grads = gradients(net, y, sol, state.q_ctrl, state.mode)
    q = np.clip(state.q_ctrl - state.dt * grads, net.q_min, net.q_max)
    return replace(state, q_ctrl=q, iteration=state.iteration + 1)


def run_segment(
    state: ControlState,
    net: Network,
    y: Admittance,
    sol: PowerFlowSolution,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_HORIZON,
    event: str = BASE_EVENT,
    record_final: bool = True,
) -> tuple[ControlState, SimulationTrace]:
    """
    Iterate step and power-flow re-solve from a solved state until the
    active gradient norm drops below eps or max_iter steps are taken.

    With record_final=False the state reached after the last step is left
    unrecorded, as it belongs to whatever follows the segment.

    Raises:
        ControlDivergedException: a re-solve failed; the exception carries
            the records gathered so far
    """
    fragment = SimulationTrace(mode=state.mode)
    end = state.iteration + max_iter
    converged_at = None
    while True:
        at_end = state.iteration >= end
        if at_end and not record_final:
            break
        grads = gradients(net, y, sol, state.q_ctrl, state.mode)
        norm = active_gradient_norm(net, state.q_ctrl, grads)
        breakdown = combined(net, y, sol, state.q_ctrl)
        fragment.records.append(
            IterationRecord(
                iteration=state.iteration,
                event=event,
                q_ctrl=state.q_ctrl,
                objective=breakdown,
                v=sol.v.copy(),
                grad_max=norm,
                clamped=clamped_flags(net, state.q_ctrl),
            )
        )
        LOG.debug(
            f"{state.mode.value} k={state.iteration}: f={breakdown.f:.6f} "
            f"max|df/dQ|={norm:.3e}"
        )
        if norm < eps:
            converged_at = state.iteration
            break
        if at_end:
            break
        state = step(state, net, y, sol, grads)
        sol = solve(net, y, state.q_ctrl, warm_start=sol)
        if not sol.converged:
            raise ControlDivergedException(
                f"power flow diverged at iteration {state.iteration} "
                f"(max mismatch {sol.max_mismatch:.3e})",
                fragment,
            )

    if fragment.records:
        segment = Segment(
            event=event,
            start=fragment.records[0].iteration,
            end=fragment.records[-1].iteration,
            converged_at=converged_at,
        )
        fragment.segments.append(segment)
        if segment.converged:
            LOG.info(
                f"{state.mode.value} segment {event}: converged at iteration "
                f"{converged_at}"
            )
    fragment.final_state = state
    fragment.final_solution = sol
    fragment.final_network = net
    return state, fragment


def apply_event(net: Network, ev: LoadEvent) -> Network:
    """Scale the real or reactive load of the event's buses."""
    unknown = [bus_id for bus_id in ev.buses if bus_id not in net.index]
    if unknown:
        raise CaseValidationException(
            [f"event {ev.name}: unknown bus {bus_id}" for bus_id in unknown]
        )
    targets = set(ev.buses)
    attribute = "p_load" if ev.load_type is LoadType.REAL else "q_load"
    buses = tuple(
        bus.model_copy(update={attribute: getattr(bus, attribute) * ev.multiplier})
        if bus.id in targets
        else bus
        for bus in net.buses
    )
    return net.model_copy(update={"buses": buses})


def parse_events(text: str) -> list[LoadEvent]:
    """
    Read an event schedule, one `at_iteration bus_list load_type multiplier`
    row per event (bus_list comma separated, "#" comments). Events are named
    Event1..EventN in file order.
    """
    events = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise CaseFormatException(
                f"event row needs 4 fields, got {len(tokens)}", number
            )
        try:
            events.append(
                LoadEvent(
                    name=f"Event{len(events) + 1}",
                    at_iteration=int(tokens[0]),
                    buses=tuple(int(b) for b in tokens[1].split(",") if b),
                    load_type=LoadType(tokens[2].lower()),
                    multiplier=float(tokens[3]),
                )
            )
        except ValueError as e:
            raise CaseFormatException(f"bad event row: {e}", number) from e
    return events


def load_events(path: Union[str, Path]) -> list[LoadEvent]:
    path = Path(path)
    if not path.is_file():
        raise CaseFormatException(f"event file not found: {path}")
    return parse_events(read_text(path))


def _solve_or_fail(
    net: Network,
    y: Admittance,
    state: ControlState,
    trace: SimulationTrace,
    warm_start: Optional[PowerFlowSolution] = None,
) -> PowerFlowSolution:
    sol = solve(net, y, state.q_ctrl, warm_start=warm_start)
    if not sol.converged:
        raise ControlDivergedException(
            f"power flow diverged at iteration {state.iteration} "
            f"(max mismatch {sol.max_mismatch:.3e})",
            trace,
        )
    return sol


def run_scenario(
    net: Network,
    events: Iterable[LoadEvent] = (),
    mode: GradientMode = GradientMode.EXACT,
    eps: float = DEFAULT_EPS,
    dt: float = DEFAULT_DT,
    horizon: int = DEFAULT_HORIZON,
) -> SimulationTrace:
    """
    Run the control loop over [0, horizon], applying each load event at its
    sample iteration and re-converging in between.

    Raises:
        ControlDivergedException: a power flow failed; carries the trace so far
        SensitivityException: propagated from the gradient
    """
    schedule = sorted(events, key=lambda ev: ev.at_iteration)
    for ev in schedule:
        if ev.at_iteration > horizon:
            LOG.warning(
                f"{ev.name} at iteration {ev.at_iteration} is beyond the horizon "
                f"{horizon}; ignored"
            )
    schedule = [ev for ev in schedule if ev.at_iteration <= horizon]

    y = build_admittance(net)
    trace = SimulationTrace(mode=mode)
    state = initial_state(net, mode, dt)
    current = net
    label = BASE_EVENT
    try:
        sol = _solve_or_fail(current, y, state, trace)
        for ev in schedule:
            state, fragment = run_segment(
                state,
                current,
                y,
                sol,
                eps,
                ev.at_iteration - state.iteration,
                label,
                record_final=False,
            )
            trace.extend(fragment)
            state = replace(state, iteration=ev.at_iteration)
            current = apply_event(current, ev)
            label = ev.name
            LOG.info(
                f"{mode.value}: applied {ev.name} at iteration {ev.at_iteration} "
                f"({ev.load_type.value} x{ev.multiplier} at buses "
                f"{','.join(str(b) for b in ev.buses)})"
            )
            sol = _solve_or_fail(current, y, state, trace, fragment.final_solution)
        state, fragment = run_segment(
            state, current, y, sol, eps, horizon - state.iteration, label
        )
        trace.extend(fragment)
    except ControlDivergedException as e:
        if e.trace is not trace:
            trace.extend(e.trace)
        raise ControlDivergedException(e.msg, trace) from e

    for segment in trace.segments:
        if not segment.converged:
            LOG.warning(
                f"{mode.value} segment {segment.event} did not reach tolerance "
                f"{eps} by iteration {segment.end}"
            )
    return trace
