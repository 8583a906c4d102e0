"""
Admittance assembly and Newton-Raphson AC power flow.

Key Features:
- pi-model Y-bus with line charging split half per terminal and bus shunts
- full polar Newton-Raphson with warm starts and a per-iteration mismatch history
- controllable reactive output enters as a PQ-bus injection
- per-branch flows and losses, reactive injection of a single bus
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from gridflow.exceptions import (
    PowerFlowDivergedException,
    SingularJacobianException,
    ZeroImpedanceException,
)
from gridflow.model import Branch, BusKind, Network
from gridflow.util.log import LOG

PF_TOL = 1e-8
PF_MAX_ITER = 30


@dataclass(frozen=True)
class Admittance:
    ybus: np.ndarray
    bus_ids: tuple[int, ...]

    @property
    def g(self) -> np.ndarray:
        return self.ybus.real

    @property
    def b(self) -> np.ndarray:
        return self.ybus.imag

    @property
    def y_mag(self) -> np.ndarray:
        return np.abs(self.ybus)

    @property
    def y_ang(self) -> np.ndarray:
        return np.angle(self.ybus)

    def position(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)


def series_admittance(branch: Branch) -> complex:
    if branch.x == 0.0:
        raise ZeroImpedanceException(f"branch {branch.label} has zero reactance")
    return 1.0 / complex(branch.r, branch.x)


def build_admittance(net: Network) -> Admittance:
    index = net.index
    ybus = np.zeros((net.n_bus, net.n_bus), dtype=complex)
    for branch in net.branches:
        f, t = index[branch.from_bus], index[branch.to_bus]
        ys = series_admittance(branch)
        charging = 0.5j * branch.b_charging
        ybus[f, f] += ys + charging
        ybus[t, t] += ys + charging
        ybus[f, t] -= ys
        ybus[t, f] -= ys
    for pos, bus in enumerate(net.buses):
        ybus[pos, pos] += complex(bus.g_shunt, bus.b_shunt)
    return Admittance(ybus=ybus, bus_ids=net.bus_ids)


def jacobian(
    y: Admittance,
    v: np.ndarray,
    delta: np.ndarray,
    pvpq: np.ndarray,
    pq: np.ndarray,
) -> np.ndarray:
    """
    Polar Newton-Raphson Jacobian.

    Rows are the real mismatches of the PV and PQ buses followed by the
    reactive mismatches of the PQ buses; columns are the angles of the PV and
    PQ buses followed by the magnitudes of the PQ buses.
    """
    voltage = v * np.exp(1j * delta)
    current = y.ybus @ voltage
    diag_v = np.diag(voltage)
    diag_i = np.diag(current)
    diag_vnorm = np.diag(voltage / np.abs(voltage))

    ds_dvm = diag_v @ np.conj(y.ybus @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    ds_dva = 1j * diag_v @ np.conj(diag_i - y.ybus @ diag_v)

    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


@dataclass(frozen=True)
class PowerFlowSolution:
    v: np.ndarray
    delta: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    mismatch_history: tuple[float, ...] = field(default=())

    @property
    def voltage(self) -> np.ndarray:
        return self.v * np.exp(1j * self.delta)


def specified_injections(net: Network, q_ctrl: np.ndarray) -> np.ndarray:
    """Scheduled complex injections, fixed generation minus load plus q_ctrl."""
    s = np.array(
        [complex(bus.p_gen - bus.p_load, bus.q_gen - bus.q_load) for bus in net.buses]
    )
    if len(net.sources):
        s[net.source_positions] += 1j * np.asarray(q_ctrl, dtype=float)
    return s


def _initial_voltage(
    net: Network, warm_start: Optional[PowerFlowSolution]
) -> tuple[np.ndarray, np.ndarray]:
    fixed = np.array([bus.kind is not BusKind.PQ for bus in net.buses])
    setpoints = np.array([bus.v_init for bus in net.buses], dtype=float)
    if warm_start is None:
        v = np.where(fixed, setpoints, 1.0)
        delta = np.zeros(net.n_bus)
        delta[net.slack_position] = net.buses[net.slack_position].delta_init
        return v, delta
    if len(warm_start.v) != net.n_bus:
        raise ValueError(
            f"warm start has {len(warm_start.v)} buses, network has {net.n_bus}"
        )
    v = np.where(fixed, setpoints, warm_start.v)
    delta = warm_start.delta.copy()
    delta[net.slack_position] = net.buses[net.slack_position].delta_init
    return v, delta


def solve(
    net: Network,
    y: Admittance,
    q_ctrl: np.ndarray,
    warm_start: Optional[PowerFlowSolution] = None,
    tol: float = PF_TOL,
    max_iter: int = PF_MAX_ITER,
) -> PowerFlowSolution:
    """
    Newton-Raphson power flow.

    Slack and PV magnitudes are held at their setpoints; PQ buses flat start
    at 1 p.u. unless warm-started from a previous solution.

    Returns:
        PowerFlowSolution: converged=False when the iteration cap is reached
            or the iterates stop being finite

    Raises:
        SingularJacobianException: the Jacobian could not be factorised
    """
    pv = net.positions(BusKind.PV)
    pq = net.positions(BusKind.PQ)
    pvpq = np.concatenate([pv, pq])
    n_angle = len(pvpq)
    s_spec = specified_injections(net, q_ctrl)
    v, delta = _initial_voltage(net, warm_start)

    history: list[float] = []
    converged = False
    iterations = 0
    while True:
        voltage = v * np.exp(1j * delta)
        mismatch = voltage * np.conj(y.ybus @ voltage) - s_spec
        f = np.concatenate([mismatch[pvpq].real, mismatch[pq].imag])
        max_mismatch = float(np.max(np.abs(f))) if len(f) else 0.0
        history.append(max_mismatch)
        LOG.debug(f"power flow iteration {iterations}: max mismatch {max_mismatch:.3e}")
        if not np.isfinite(max_mismatch):
            break
        if max_mismatch <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        jac = jacobian(y, v, delta, pvpq, pq)
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError as e:
            raise SingularJacobianException(
                f"singular power-flow Jacobian at iteration {iterations}"
            ) from e
        delta[pvpq] -= dx[:n_angle]
        v[pq] -= dx[n_angle:]
        iterations += 1

    if not converged:
        LOG.warning(
            f"power flow did not converge after {iterations} iterations "
            f"(max mismatch {max_mismatch:.3e})"
        )
    voltage = v * np.exp(1j * delta)
    s = voltage * np.conj(y.ybus @ voltage)
    return PowerFlowSolution(
        v=v,
        delta=delta,
        p_inj=s.real,
        q_inj=s.imag,
        converged=converged,
        iterations=iterations,
        max_mismatch=max_mismatch,
        mismatch_history=tuple(history),
    )


def require_converged(
    sol: PowerFlowSolution, what: str = "power flow"
) -> PowerFlowSolution:
    if not sol.converged:
        raise PowerFlowDivergedException(
            f"{what} did not converge (max mismatch {sol.max_mismatch:.3e} after "
            f"{sol.iterations} iterations)",
            sol,
        )
    return sol


@dataclass(frozen=True)
class BranchFlow:
    branch: Branch
    p_from: float
    p_to: float
    q_from: float
    q_to: float
    loss: float


def branch_flows(
    net: Network, y: Admittance, sol: PowerFlowSolution
) -> list[BranchFlow]:
    """Terminal flows of every branch, both measured into the branch."""
    voltage = sol.voltage
    flows = []
    for branch in net.branches:
        vf = voltage[y.position(branch.from_bus)]
        vt = voltage[y.position(branch.to_bus)]
        ys = series_admittance(branch)
        charging = 0.5j * branch.b_charging
        s_from = vf * np.conj((vf - vt) * ys + vf * charging)
        s_to = vt * np.conj((vt - vf) * ys + vt * charging)
        flows.append(
            BranchFlow(
                branch=branch,
                p_from=float(s_from.real),
                p_to=float(s_to.real),
                q_from=float(s_from.imag),
                q_to=float(s_to.imag),
                loss=float(s_from.real + s_to.real),
            )
        )
    return flows


def reactive_injection(bus_id: int, y: Admittance, sol: PowerFlowSolution) -> float:
    """Net reactive injection Q_i = sum_j V_i V_j (G_ij sin d_ij - B_ij cos d_ij)."""
    i = y.position(bus_id)
    d = sol.delta[i] - sol.delta
    terms = sol.v[i] * sol.v * (y.g[i] * np.sin(d) - y.b[i] * np.cos(d))
    return float(np.sum(terms))
