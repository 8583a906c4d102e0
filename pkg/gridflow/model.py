from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class BusKind(Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


class Bus(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    kind: BusKind
    v_init: float
    delta_init: float = 0.0  # radians
    p_gen: float = 0.0
    q_gen: float = 0.0
    p_load: float = 0.0
    q_load: float = 0.0
    v_ref: float = 1.0
    g_shunt: float = 0.0
    b_shunt: float = 0.0


class Branch(BaseModel):
    model_config = ConfigDict(frozen=True)

    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0  # total, split half per terminal

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


class ReactiveSource(BaseModel):
    model_config = ConfigDict(frozen=True)

    bus: int
    q_min: float
    q_max: float
    a_p: float = 0.0
    b_p: float = 0.0
    c_p: float = 0.0
    v_ref: float = 1.0


class Weights(BaseModel):
    model_config = ConfigDict(frozen=True)

    w_loss: float = 1.0
    w_dev: float = 1.0
    w_cost: float = 0.0005


class Network(BaseModel):
    """
    Immutable problem instance: buses, branches, controllable reactive
    sources and the objective weights.

    Array views (positions, bounds, injections) are in bus order, so bus
    position k is the k-th row of the admittance matrix.
    """

    model_config = ConfigDict(frozen=True)

    name: str = "network"
    base_mva: float = 100.0
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    sources: tuple[ReactiveSource, ...] = ()
    weights: Weights = Weights()

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def index(self) -> dict[int, int]:
        return {bus.id: pos for pos, bus in enumerate(self.buses)}

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(bus.id for bus in self.buses)

    def positions(self, kind: BusKind) -> np.ndarray:
        return np.array(
            [pos for pos, bus in enumerate(self.buses) if bus.kind is kind], dtype=int
        )

    @property
    def slack_position(self) -> int:
        return int(self.positions(BusKind.SLACK)[0])

    @property
    def source_positions(self) -> np.ndarray:
        index = self.index
        return np.array([index[source.bus] for source in self.sources], dtype=int)

    @property
    def q_min(self) -> np.ndarray:
        return np.array([source.q_min for source in self.sources], dtype=float)

    @property
    def q_max(self) -> np.ndarray:
        return np.array([source.q_max for source in self.sources], dtype=float)

    def source_at(self, bus_id: int) -> Optional[ReactiveSource]:
        for source in self.sources:
            if source.bus == bus_id:
                return source
        return None


class LoadType(Enum):
    REAL = "real"
    REACTIVE = "reactive"


class LoadEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = ""
    at_iteration: int = Field(ge=0)
    buses: tuple[int, ...]
    load_type: LoadType
    multiplier: float = Field(gt=0)


class GradientMode(Enum):
    EXACT = "exact"
    APPROX = "approx"
