"""
Tabular and graphical output.

Every table is a pandas DataFrame; CSV and aligned text renderings use a
fixed float format so repeated runs produce identical bytes. Plots are SVG
files rendered by matplotlib with a fixed hash salt and no date metadata.
"""

import io
import math
from pathlib import Path
from typing import Iterable, Optional, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from gridflow.analyzer import ComparisonReport, LineDiagnostics, ModeResult
from gridflow.controller import SimulationTrace
from gridflow.model import Network
from gridflow.objective import ObjectiveBreakdown
from gridflow.powerflow import Admittance, PowerFlowSolution
from gridflow.pso import PsoResult
from gridflow.util.fs import atomic_write_bytes, atomic_write_text

FLOAT_FORMAT = "%.10g"
SVG_HASH_SALT = "gridflow"

TRACE_COLUMNS = ("iter", "event", "f", "loss_term", "dev_term", "cost_term")
COMPARISON_COLUMNS = (
    "Bus system",
    "Objective Function",
    "Cost",
    "Power Loss",
    "Voltage Deviation",
)
LINE_COLUMNS = (
    "Line From",
    "delta_i(deg)",
    "Line To",
    "delta_j(deg)",
    "delta_ij(deg)",
    "cos(delta_ij)",
    "Line flow",
    "Loss on line",
    "%Loss of the line flow",
    "approx_ok",
)
PSO_SUMMARY_COLUMNS = (
    "Bus system",
    "Proposed objective function",
    "Proposed iterations",
    "PSO objective function",
    "PSO iterations",
)


def trace_frame(trace: SimulationTrace, net: Network) -> pd.DataFrame:
    source_buses = [source.bus for source in net.sources]
    rows = []
    for record in trace.records:
        row = {
            "iter": record.iteration,
            "event": record.event,
            "f": record.objective.f,
            "loss_term": record.objective.loss_term,
            "dev_term": record.objective.dev_term,
            "cost_term": record.objective.cost_term,
        }
        row.update({f"Q_G{bus}": q for bus, q in zip(source_buses, record.q_ctrl)})
        row.update({f"V{bus}": v for bus, v in zip(net.bus_ids, record.v)})
        row["grad_max"] = record.grad_max
        rows.append(row)
    columns = (
        list(TRACE_COLUMNS)
        + [f"Q_G{bus}" for bus in source_buses]
        + [f"V{bus}" for bus in net.bus_ids]
        + ["grad_max"]
    )
    return pd.DataFrame(rows, columns=columns)


def _comparison_row(name: str, result: ModeResult) -> dict[str, object]:
    breakdown = result.breakdown
    row: dict[str, object] = {
        "Bus system": f"{name}-{result.label}",
        "Objective Function": breakdown.f,
        "Cost": breakdown.cost_term,
        "Power Loss": breakdown.loss_term,
        "Voltage Deviation": breakdown.dev_term,
    }
    row.update(
        {f"Q_{bus}": float(q) for bus, q in zip(result.source_buses, result.q_ctrl)}
    )
    row["Sum Q_i"] = result.total_q
    row["Iterations"] = result.iterations if result.iterations is not None else ""
    return row


def comparison_frame(report: ComparisonReport, name: str) -> pd.DataFrame:
    """Objective components, per-source Q_G and iterations of both runs."""
    return pd.DataFrame([_comparison_row(name, result) for result in report.results])


def deltas_frame(report: ComparisonReport) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "quantity": list(report.deltas),
            "second - first": list(report.deltas.values()),
        }
    )


def lines_frame(diagnostics: Iterable[LineDiagnostics]) -> pd.DataFrame:
    rows = [
        (
            line.branch.from_bus,
            line.delta_i_deg,
            line.branch.to_bus,
            line.delta_j_deg,
            line.delta_ij_deg,
            line.cos_dij,
            line.flow,
            line.loss,
            math.nan if line.loss_pct is None else line.loss_pct,
            "yes" if line.approx_ok else "no",
        )
        for line in diagnostics
    ]
    return pd.DataFrame(rows, columns=list(LINE_COLUMNS))


def verdict_line(diagnostics: list[LineDiagnostics], threshold_pct: float) -> str:
    exceeding = sum(1 for line in diagnostics if not line.approx_ok)
    return f"{exceeding} of {len(diagnostics)} lines exceed {threshold_pct:g} %"


def pso_trace_frame(result: PsoResult) -> pd.DataFrame:
    return pd.DataFrame(
        {"iteration": range(len(result.history)), "gbest": list(result.history)}
    )


def pso_summary_frame(
    name: str,
    distributed: ObjectiveBreakdown,
    distributed_iterations: Optional[int],
    result: PsoResult,
) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (
                f"{name}-without approximation",
                distributed.f,
                distributed_iterations if distributed_iterations is not None else "",
                result.breakdown.f,
                result.iterations,
            )
        ],
        columns=list(PSO_SUMMARY_COLUMNS),
    )


def ybus_frame(y: Admittance) -> pd.DataFrame:
    rows, cols = np.nonzero(y.ybus)
    return pd.DataFrame(
        {
            "i": [y.bus_ids[r] for r in rows],
            "j": [y.bus_ids[c] for c in cols],
            "g": y.g[rows, cols],
            "b": y.b[rows, cols],
        }
    )


def mismatch_frame(sol: PowerFlowSolution) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "iteration": range(len(sol.mismatch_history)),
            "max_mismatch": list(sol.mismatch_history),
        }
    )


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    return atomic_write_text(
        path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    )


def render_table(frame: pd.DataFrame) -> str:
    return frame.to_string(
        index=False, float_format=lambda value: FLOAT_FORMAT % value, na_rep="n/a"
    )


def write_text(path: Union[str, Path], *blocks: str) -> Path:
    return atomic_write_text(path, "\n\n".join(blocks).rstrip("\n") + "\n")


def _svg(
    title: str, ylabel: str, iterations: list[int], series: dict[str, list[float]]
) -> bytes:
    fig = Figure(figsize=(7.0, 4.0))
    ax = fig.add_subplot()
    for label, values in series.items():
        ax.plot(iterations, values, label=label, linewidth=1.2)
    ax.set_title(title)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, linewidth=0.3)
    if len(series) > 1:
        ax.legend(fontsize="small", ncol=2)
    buffer = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def write_trace_plots(
    trace: SimulationTrace, net: Network, out_dir: Union[str, Path]
) -> list[Path]:
    """f, Q_G and V against iteration as f_<mode>.svg, q_<mode>.svg, v_<mode>.svg."""
    out_dir = Path(out_dir)
    mode = trace.mode.value
    iterations = [record.iteration for record in trace.records]
    plots = {
        f"f_{mode}.svg": _svg(
            f"objective ({mode})",
            "f",
            iterations,
            {"f": [record.objective.f for record in trace.records]},
        ),
        f"q_{mode}.svg": _svg(
            f"reactive generation ({mode})",
            "Q_G (p.u.)",
            iterations,
            {
                f"Q_G{source.bus}": [float(r.q_ctrl[k]) for r in trace.records]
                for k, source in enumerate(net.sources)
            },
        ),
        f"v_{mode}.svg": _svg(
            f"bus voltage ({mode})",
            "V (p.u.)",
            iterations,
            {
                f"V{bus_id}": [float(r.v[k]) for r in trace.records]
                for k, bus_id in enumerate(net.bus_ids)
            },
        ),
    }
    return [atomic_write_bytes(out_dir / name, data) for name, data in plots.items()]
