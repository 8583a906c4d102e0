"""
Weighted control objective and its reactive-power gradient.

Key Features:
- system loss as the full double sum over the admittance matrix
- voltage deviation over PQ buses against per-bus references
- reactive generation cost converted from real-power coefficients via sin(sigma)
- analytic gradient in exact or zero-angle form, checked against a
  central-difference oracle through the power flow
"""

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from gridflow.exceptions import SensitivityException, SingularJacobianException
from gridflow.model import BusKind, GradientMode, Network, Weights
from gridflow.powerflow import (
    Admittance,
    PowerFlowSolution,
    jacobian,
    require_converged,
    solve,
)

SENSITIVITY_FLOOR = 1e-9


@dataclass(frozen=True)
class ObjectiveBreakdown:
    f: float
    loss_term: float
    dev_term: float
    cost_term: float
    p_loss: float
    d_v: float
    c_q: float

    @property
    def raw(self) -> tuple[float, float, float]:
        return self.p_loss, self.d_v, self.c_q

    @classmethod
    def from_components(
        cls, weights: Weights, p_loss: float, d_v: float, c_q: float
    ) -> "ObjectiveBreakdown":
        loss_term = weights.w_loss * p_loss
        dev_term = weights.w_dev * d_v
        cost_term = weights.w_cost * c_q
        return cls(
            f=loss_term + dev_term + cost_term,
            loss_term=loss_term,
            dev_term=dev_term,
            cost_term=cost_term,
            p_loss=p_loss,
            d_v=d_v,
            c_q=c_q,
        )


def sin_sigma(p: float, q: float) -> float:
    """Q / |S|; a source without real output is purely reactive, sin = 1."""
    if p == 0.0:
        return 1.0
    return float(q / np.hypot(p, q))


@dataclass(frozen=True)
class CostCurve:
    a_p: float
    b_p: float
    c_p: float
    p_gen: float = 0.0

    def cost(self, q: float) -> float:
        s = sin_sigma(self.p_gen, q)
        return self.a_p * s * s * q * q + self.b_p * s * q + self.c_p

    def derivative(self, q: float) -> float:
        p = self.p_gen
        s = sin_sigma(p, q)
        magnitude = np.hypot(p, q)
        # P = 0 makes both P^2 terms vanish
        coupling = p * p / magnitude**3 if p != 0.0 else 0.0
        return float(
            2.0 * self.a_p * q * (q * s * coupling + s * s)
            + self.b_p * (q * coupling + s)
        )


def cost_curves(net: Network) -> list[CostCurve]:
    buses = {bus.id: bus for bus in net.buses}
    return [
        CostCurve(
            a_p=source.a_p,
            b_p=source.b_p,
            c_p=source.c_p,
            p_gen=buses[source.bus].p_gen,
        )
        for source in net.sources
    ]


def power_loss(y: Admittance, sol: PowerFlowSolution) -> float:
    """sum_i sum_j V_i V_j Y_ij cos(theta_ij + delta_j - delta_i), diagonal included."""
    delta_ji = sol.delta[None, :] - sol.delta[:, None]
    return float(
        np.sum(np.outer(sol.v, sol.v) * y.y_mag * np.cos(y.y_ang + delta_ji))
    )


def deviation_refs(net: Network) -> np.ndarray:
    """Per-bus V*: the source's reference at source buses, NaN off the PQ set."""
    refs = np.full(net.n_bus, np.nan)
    for pos, bus in enumerate(net.buses):
        if bus.kind is not BusKind.PQ:
            continue
        source = net.source_at(bus.id)
        refs[pos] = source.v_ref if source is not None else bus.v_ref
    return refs


def voltage_deviation(sol: PowerFlowSolution, refs: np.ndarray) -> float:
    return float(np.nansum((sol.v - refs) ** 2))


def reactive_cost(sources: Iterable[tuple[CostCurve, float]]) -> float:
    return float(sum(curve.cost(q) for curve, q in sources))


def combined(
    net: Network, y: Admittance, sol: PowerFlowSolution, q_ctrl: np.ndarray
) -> ObjectiveBreakdown:
    return ObjectiveBreakdown.from_components(
        net.weights,
        power_loss(y, sol),
        voltage_deviation(sol, deviation_refs(net)),
        reactive_cost(zip(cost_curves(net), np.asarray(q_ctrl, dtype=float))),
    )


def _check_sensitivity(net: Network, y: Admittance, sol: PowerFlowSolution) -> None:
    diagonal = y.b.diagonal()
    for source, pos in zip(net.sources, net.source_positions):
        denominator = sol.q_inj[pos] - sol.v[pos] ** 2 * diagonal[pos]
        if abs(denominator) < SENSITIVITY_FLOOR:
            raise SensitivityException(source.bus, float(denominator))


def gradients(
    net: Network,
    y: Admittance,
    sol: PowerFlowSolution,
    q_ctrl: np.ndarray,
    mode: GradientMode = GradientMode.EXACT,
) -> np.ndarray:
    """
    df/dQ_G for every source, all evaluated against the same solved state.

    The loss and deviation parts are chained through the state sensitivity
    dx/dQ_G, the column of the inverse Newton Jacobian at each source's
    reactive row. GradientMode.APPROX evaluates the loss terms and the
    Jacobian with every angle set to zero, so only voltage magnitudes are
    needed.

    Raises:
        SensitivityException: Q_G - Q_D - V^2 B_ii vanishes at a source bus
    """
    if not net.sources:
        return np.zeros(0)
    _check_sensitivity(net, y, sol)
    weights = net.weights

    pv = net.positions(BusKind.PV)
    pq = net.positions(BusKind.PQ)
    pvpq = np.concatenate([pv, pq])
    v = sol.v
    delta = sol.delta if mode is GradientMode.EXACT else np.zeros_like(sol.delta)

    delta_kj = delta[:, None] - delta[None, :]
    loss_v = 2.0 * (y.g * np.cos(delta_kj)) @ v
    loss_delta = -2.0 * v * ((y.g * np.sin(delta_kj)) @ v)
    dev_v = np.nan_to_num(2.0 * (v - deviation_refs(net)))

    state_gradient = np.concatenate(
        [
            weights.w_loss * loss_delta[pvpq],
            weights.w_loss * loss_v[pq] + weights.w_dev * dev_v[pq],
        ]
    )

    pq_row = {int(pos): row for row, pos in enumerate(pq)}
    unit = np.zeros((len(state_gradient), len(net.sources)))
    for column, pos in enumerate(net.source_positions):
        unit[len(pvpq) + pq_row[int(pos)], column] = 1.0
    try:
        sensitivity = np.linalg.solve(jacobian(y, v, delta, pvpq, pq), unit)
    except np.linalg.LinAlgError as e:
        raise SingularJacobianException("singular sensitivity Jacobian") from e

    cost = np.array(
        [curve.derivative(q) for curve, q in zip(cost_curves(net), q_ctrl)]
    )
    return sensitivity.T @ state_gradient + weights.w_cost * cost


def gradient(
    i: int,
    net: Network,
    y: Admittance,
    sol: PowerFlowSolution,
    q_ctrl: np.ndarray,
    mode: GradientMode = GradientMode.EXACT,
) -> float:
    return float(gradients(net, y, sol, q_ctrl, mode)[i])


def central_difference(
    func: Callable[[np.ndarray], float],
    x: np.ndarray,
    i: int,
    h: float,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
) -> float:
    """
    Two-point derivative of func along coordinate i, falling back to a
    one-sided difference when a step would leave [lower, upper].
    """
    x = np.asarray(x, dtype=float)
    up = x.copy()
    up[i] += h
    down = x.copy()
    down[i] -= h
    up_ok = upper is None or up[i] <= upper
    down_ok = lower is None or down[i] >= lower
    if up_ok and down_ok:
        return (func(up) - func(down)) / (2.0 * h)
    if up_ok:
        return (func(up) - func(x)) / h
    if down_ok:
        return (func(x) - func(down)) / h
    raise ValueError(f"step {h} does not fit the interval [{lower}, {upper}]")


def fd_gradient(
    i: int,
    net: Network,
    y: Admittance,
    q_ctrl: np.ndarray,
    h: float = 1e-4,
    warm_start: Optional[PowerFlowSolution] = None,
) -> float:
    """
    Finite-difference df/dQ_Gi through full power-flow re-solves.

    Raises:
        PowerFlowDivergedException: a perturbed point has no solution
    """
    source = net.sources[i]

    def objective(q: np.ndarray) -> float:
        sol = require_converged(solve(net, y, q, warm_start=warm_start))
        return combined(net, y, sol, q).f

    return central_difference(objective, q_ctrl, i, h, source.q_min, source.q_max)
