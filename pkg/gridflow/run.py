#! /usr/bin/env python3
import argparse
import os
import sys
from pathlib import Path
from typing import Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from gridflow import report
from gridflow.analyzer import (
    DEFAULT_THRESHOLD_PCT,
    compare_modes,
    line_diagnostics,
)
from gridflow.controller import (
    DEFAULT_DT,
    DEFAULT_EPS,
    DEFAULT_HORIZON,
    SimulationTrace,
    initial_state,
    load_events,
    run_scenario,
)
from gridflow.data import FIXTURES, bundled
from gridflow.exceptions import (
    CaseFormatException,
    CaseValidationException,
    CdfFormatException,
    ControlDivergedException,
    GridflowException,
    PowerFlowException,
    SensitivityException,
    ZeroImpedanceException,
)
from gridflow.model import GradientMode, LoadEvent, Network
from gridflow.netmodel import load_network
from gridflow.powerflow import build_admittance, solve
from gridflow.pso import PsoConfig, optimize
from gridflow.util.log import LOG, level_from_flags

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

OUT_ENV = "GRIDFLOW_OUT"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    case: Path
    sources: Optional[Path] = None
    events: Optional[Path] = None
    mode: Literal["exact", "approx", "both"] = "both"
    eps: float = Field(default=DEFAULT_EPS, gt=0)
    dt: float = Field(default=DEFAULT_DT, gt=0)
    horizon: int = Field(default=DEFAULT_HORIZON, ge=0)
    out: Path = Path("out")
    svg: bool = False
    dump_pf: bool = False
    threshold_pct: float = Field(default=DEFAULT_THRESHOLD_PCT, ge=0)
    pso: PsoConfig = PsoConfig()

    def modes(self) -> list[GradientMode]:
        if self.mode == "both":
            return [GradientMode.APPROX, GradientMode.EXACT]
        return [GradientMode(self.mode)]


def _resolve(path: Optional[Path]) -> Optional[Path]:
    """Fall back to a bundled fixture when a bare fixture name is not on disk."""
    if path is None or path.exists() or str(path) not in FIXTURES:
        return path
    return bundled(str(path))


def _load(cfg: RunConfig) -> tuple[Network, list[LoadEvent]]:
    net = load_network(_resolve(cfg.case), _resolve(cfg.sources))
    events = load_events(_resolve(cfg.events)) if cfg.events is not None else []
    LOG.info(
        f"loaded {net.name}: {net.n_bus} buses, {len(net.sources)} sources, "
        f"{len(events)} events"
    )
    return net, events


def _dump_pf(cfg: RunConfig, net: Network) -> None:
    y = build_admittance(net)
    sol = solve(net, y, initial_state(net).q_ctrl)
    report.write_csv(report.ybus_frame(y), cfg.out / "ybus.csv")
    report.write_csv(report.mismatch_frame(sol), cfg.out / "pf_mismatch.csv")


def _write_trace(cfg: RunConfig, net: Network, trace: SimulationTrace) -> None:
    mode = trace.mode.value
    report.write_csv(report.trace_frame(trace, net), cfg.out / f"trace_{mode}.csv")
    if cfg.svg:
        report.write_trace_plots(trace, net, cfg.out)


def _prepare(cfg: RunConfig) -> tuple[Network, list[LoadEvent]]:
    net, events = _load(cfg)
    if cfg.dump_pf:
        _dump_pf(cfg, net)
    return net, events


def cmd_run(cfg: RunConfig) -> int:
    net, events = _prepare(cfg)
    converged = True
    for mode in cfg.modes():
        try:
            trace = run_scenario(net, events, mode, cfg.eps, cfg.dt, cfg.horizon)
        except ControlDivergedException as e:
            if e.trace is not None:
                _write_trace(cfg, net, e.trace)
            raise
        _write_trace(cfg, net, trace)
        converged = converged and trace.converged
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_compare(cfg: RunConfig) -> int:
    net, events = _prepare(cfg)
    modes = cfg.modes()
    pair = (modes[0], modes[-1])
    comparison = compare_modes(net, events, cfg.eps, cfg.dt, cfg.horizon, pair)

    table = report.comparison_frame(comparison, net.name)
    report.write_csv(table, cfg.out / "comparison.csv")
    timing = "\n".join(
        f"wall time {result.mode.value} ({result.label}): {result.wall_time:.3f} s"
        for result in comparison.results
    )
    report.write_text(
        cfg.out / "comparison.txt",
        f"{net.name}: {pair[0].value} vs {pair[1].value}",
        report.render_table(table),
        report.render_table(report.deltas_frame(comparison)),
        timing,
    )
    if cfg.svg:
        for result in comparison.results:
            report.write_trace_plots(result.trace, net, cfg.out)
    converged = all(result.converged for result in comparison.results)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_analyze(cfg: RunConfig) -> int:
    net, events = _prepare(cfg)
    mode = GradientMode.APPROX if cfg.mode == "approx" else GradientMode.EXACT
    trace = run_scenario(net, events, mode, cfg.eps, cfg.dt, cfg.horizon)
    final_net = trace.final_network
    diagnostics = line_diagnostics(
        final_net,
        build_admittance(final_net),
        trace.final_solution,
        cfg.threshold_pct,
    )
    table = report.lines_frame(diagnostics)
    verdict = report.verdict_line(diagnostics, cfg.threshold_pct)
    report.write_csv(table, cfg.out / "lines.csv")
    report.write_text(cfg.out / "lines.txt", report.render_table(table), verdict)
    LOG.info(verdict)
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_pso(cfg: RunConfig) -> int:
    net, _ = _prepare(cfg)
    trace = run_scenario(net, [], GradientMode.EXACT, cfg.eps, cfg.dt, cfg.horizon)
    result = optimize(net, build_admittance(net), cfg.pso)
    summary = report.pso_summary_frame(
        net.name, trace.final.objective, trace.iterations_to_tolerance(), result
    )
    report.write_csv(report.pso_trace_frame(result), cfg.out / "pso_trace.csv")
    report.write_csv(summary, cfg.out / "pso_summary.csv")
    report.write_text(cfg.out / "pso_summary.txt", report.render_table(summary))
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridflow",
        description="Distributed reactive power control on AC power networks.",
    )

    subparsers = parser.add_subparsers()

    log_levels = parser.add_mutually_exclusive_group()
    log_levels.add_argument("-v", action="store_true", help="verbose logging")
    log_levels.add_argument("-i", action="store_true", help="info level logging")
    log_levels.add_argument("-e", action="store_true", help="error logging (default)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", type=Path, required=True, help="case file")
    common.add_argument(
        "--sources", type=Path, help="source overlay merged into the case"
    )
    common.add_argument("--events", type=Path, help="load event schedule")
    common.add_argument(
        "--mode",
        choices=["exact", "approx", "both"],
        default="both",
        help="gradient mode",
    )
    common.add_argument(
        "--eps", type=float, default=DEFAULT_EPS, help="gradient tolerance"
    )
    common.add_argument("--dt", type=float, default=DEFAULT_DT, help="control step")
    common.add_argument(
        "--horizon", type=int, default=DEFAULT_HORIZON, help="control iterations"
    )
    common.add_argument(
        "--out",
        type=Path,
        default=Path(os.environ.get(OUT_ENV, "out")),
        help=f"output directory (default ${OUT_ENV} or ./out)",
    )
    common.add_argument("--svg", action="store_true", help="write SVG plots")
    common.add_argument(
        "--dump-pf",
        action="store_true",
        help="write the admittance matrix and initial power-flow mismatches",
    )

    run_parser = subparsers.add_parser("run", parents=[common], help="control traces")
    run_parser.set_defaults(command=cmd_run)

    compare_parser = subparsers.add_parser(
        "compare", parents=[common], help="compare gradient modes"
    )
    compare_parser.set_defaults(command=cmd_compare)

    analyze_parser = subparsers.add_parser(
        "analyze", parents=[common], help="line diagnostics"
    )
    analyze_parser.add_argument(
        "--threshold-pct",
        type=float,
        default=DEFAULT_THRESHOLD_PCT,
        help="loss percentage above which a line fails the approximation rule",
    )
    analyze_parser.set_defaults(command=cmd_analyze)

    pso_parser = subparsers.add_parser(
        "pso", parents=[common], help="particle swarm baseline"
    )
    defaults = PsoConfig()
    pso_parser.add_argument("--particles", type=int, default=defaults.n_particles)
    pso_parser.add_argument("--inertia", type=float, default=defaults.inertia)
    pso_parser.add_argument("--c1", type=float, default=defaults.c1)
    pso_parser.add_argument("--c2", type=float, default=defaults.c2)
    pso_parser.add_argument("--max-iter", type=int, default=defaults.max_iter)
    pso_parser.add_argument("--seed", type=int, default=defaults.seed)
    pso_parser.set_defaults(command=cmd_pso)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    pso = PsoConfig()
    if hasattr(args, "particles"):
        pso = PsoConfig(
            n_particles=args.particles,
            inertia=args.inertia,
            c1=args.c1,
            c2=args.c2,
            max_iter=args.max_iter,
            seed=args.seed,
        )
    return RunConfig(
        case=args.case,
        sources=args.sources,
        events=args.events,
        mode=args.mode,
        eps=args.eps,
        dt=args.dt,
        horizon=args.horizon,
        out=args.out,
        svg=args.svg,
        dump_pf=args.dump_pf,
        threshold_pct=getattr(args, "threshold_pct", DEFAULT_THRESHOLD_PCT),
        pso=pso,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    LOG.setLevel(level_from_flags(args.v, args.i))

    if not hasattr(args, "command"):
        parser.print_help()
        return EXIT_INPUT

    try:
        cfg = config_from_args(args)
        return args.command(cfg)
    except (
        CaseFormatException,
        CaseValidationException,
        CdfFormatException,
        ZeroImpedanceException,
        ValidationError,
        ValueError,
    ) as e:
        LOG.error(f"{e} (exit {EXIT_INPUT})")
        return EXIT_INPUT
    except (
        PowerFlowException,
        ControlDivergedException,
        SensitivityException,
    ) as e:
        LOG.error(f"{e} (exit {EXIT_NUMERIC})")
        return EXIT_NUMERIC
    except GridflowException as e:
        LOG.error(f"{e} (exit {EXIT_NUMERIC})")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
