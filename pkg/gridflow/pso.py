"""
Global-best particle swarm baseline over the reactive source box.

Every fitness evaluation is the combined objective at a full power-flow
solution; positions that have no power-flow solution score +inf.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from gridflow.exceptions import PowerFlowDivergedException, SingularJacobianException
from gridflow.model import Network
from gridflow.objective import ObjectiveBreakdown, combined
from gridflow.powerflow import Admittance, require_converged, solve
from gridflow.util.log import LOG


class PsoConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_particles: int = Field(default=30, ge=1)
    inertia: float = Field(default=0.7, ge=0)
    c1: float = Field(default=1.5, ge=0)
    c2: float = Field(default=1.5, ge=0)
    max_iter: int = Field(default=200, ge=0)
    seed: int = 42
    velocity_clamp: float = Field(default=0.2, gt=0)  # fraction of the box width
    tol: float = Field(default=1e-6, ge=0)
    patience: int = Field(default=10, ge=1)


@dataclass(frozen=True)
class PsoResult:
    q_ctrl: np.ndarray
    breakdown: ObjectiveBreakdown
    iterations: int
    history: tuple[float, ...]
    stagnated: bool


def _fitness(net: Network, y: Admittance, q: np.ndarray) -> float:
    try:
        sol = solve(net, y, q)
    except SingularJacobianException:
        return np.inf
    if not sol.converged:
        return np.inf
    return combined(net, y, sol, q).f


def _reflect(
    x: np.ndarray, v: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    below = x < lower
    above = x > upper
    x = np.where(below, 2.0 * lower - x, x)
    x = np.where(above, 2.0 * upper - x, x)
    v = np.where(below | above, 0.0, v)
    return np.clip(x, lower, upper), v


def optimize(
    net: Network,
    y: Admittance,
    cfg: PsoConfig = PsoConfig(),
    init_positions: Optional[np.ndarray] = None,
) -> PsoResult:
    """
    Minimise the combined objective with a seeded global-best swarm.

    Stops when the global best improves by less than cfg.tol for
    cfg.patience consecutive iterations, or after cfg.max_iter iterations.

    Raises:
        ValueError: the network has no reactive sources
        PowerFlowDivergedException: no particle ever reached a solvable state
    """
    if not net.sources:
        raise ValueError("particle swarm needs at least one reactive source")
    rng = np.random.default_rng(cfg.seed)
    lower, upper = net.q_min, net.q_max
    v_max = cfg.velocity_clamp * (upper - lower)
    shape = (cfg.n_particles, len(net.sources))

    if init_positions is None:
        x = rng.uniform(lower, upper, size=shape)
    else:
        x = np.clip(np.array(init_positions, dtype=float).reshape(shape), lower, upper)
    v = np.zeros(shape)
    fitness = np.array([_fitness(net, y, q) for q in x])
    pbest_x, pbest_y = x.copy(), fitness.copy()
    best = int(np.argmin(pbest_y))
    gbest_x, gbest_y = pbest_x[best].copy(), float(pbest_y[best])
    history = [gbest_y]

    stall = 0
    iterations = 0
    for iteration in range(1, cfg.max_iter + 1):
        r1 = rng.random(shape)
        r2 = rng.random(shape)
        v = (
            cfg.inertia * v
            + cfg.c1 * r1 * (pbest_x - x)
            + cfg.c2 * r2 * (gbest_x - x)
        )
        v = np.clip(v, -v_max, v_max)
        x, v = _reflect(x + v, v, lower, upper)
        fitness = np.array([_fitness(net, y, q) for q in x])

        improved = fitness < pbest_y
        pbest_x[improved] = x[improved]
        pbest_y[improved] = fitness[improved]
        best = int(np.argmin(pbest_y))
        candidate = float(pbest_y[best])
        improvement = gbest_y - candidate if np.isfinite(candidate) else 0.0
        gbest_x, gbest_y = pbest_x[best].copy(), candidate
        history.append(gbest_y)
        iterations = iteration
        LOG.debug(f"pso iteration {iteration}: gbest {gbest_y:.8f}")

        stall = stall + 1 if improvement < cfg.tol else 0
        if stall >= cfg.patience:
            break

    if not np.isfinite(gbest_y):
        raise PowerFlowDivergedException("no particle reached a solvable power flow")
    sol = require_converged(solve(net, y, gbest_x), "power flow at the swarm optimum")
    breakdown = combined(net, y, sol, gbest_x)
    LOG.info(
        f"pso finished after {iterations} iterations: f={breakdown.f:.6f} "
        f"({cfg.n_particles} particles, seed {cfg.seed})"
    )
    return PsoResult(
        q_ctrl=gbest_x,
        breakdown=breakdown,
        iterations=iterations,
        history=tuple(history),
        stagnated=stall >= cfg.patience,
    )
