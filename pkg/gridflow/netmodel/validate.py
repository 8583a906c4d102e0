from collections import Counter

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from gridflow.model import BusKind, Network


def validate(net: Network) -> list[str]:
    """
    Check the model invariants of a network.

    Returns:
        list[str]: one message per violation, empty when the network is sound
    """
    violations: list[str] = []

    ids = Counter(bus.id for bus in net.buses)
    for bus_id, count in sorted(ids.items()):
        if count > 1:
            violations.append(f"duplicate bus {bus_id}")
        if bus_id < 1:
            violations.append(f"bus {bus_id}: id must be positive")

    slacks = [bus for bus in net.buses if bus.kind is BusKind.SLACK]
    if not slacks:
        violations.append("missing slack bus")
    elif len(slacks) > 1:
        violations.append("multiple slack buses")
    for bus in slacks:
        if bus.delta_init != 0.0:
            violations.append(f"slack bus {bus.id}: non-zero angle")
    for bus in net.buses:
        if bus.v_init <= 0.0:
            violations.append(f"bus {bus.id}: non-positive voltage magnitude")

    for branch in net.branches:
        for end in (branch.from_bus, branch.to_bus):
            if end not in ids:
                violations.append(f"dangling branch endpoint {end}")
        if branch.from_bus == branch.to_bus:
            violations.append(f"branch {branch.label}: self-loop")
        if branch.x == 0.0:
            violations.append(f"branch {branch.label}: zero reactance")
        if branch.r < 0.0:
            violations.append(f"branch {branch.label}: negative resistance")
        if branch.b_charging < 0.0:
            violations.append(f"branch {branch.label}: negative line charging")

    kinds = {bus.id: bus.kind for bus in net.buses}
    seen: set[int] = set()
    for source in net.sources:
        if source.bus in seen:
            violations.append(f"multiple sources at bus {source.bus}")
        seen.add(source.bus)
        if source.q_min >= source.q_max:
            violations.append(f"empty control interval at bus {source.bus}")
        if source.bus not in kinds:
            violations.append(f"source at unknown bus {source.bus}")
        elif kinds[source.bus] is not BusKind.PQ:
            violations.append(f"source at non-PQ bus {source.bus}")

    weights = net.weights
    values = (weights.w_loss, weights.w_dev, weights.w_cost)
    if any(value < 0.0 for value in values):
        violations.append("negative objective weight")
    if all(value == 0.0 for value in values):
        violations.append("all objective weights are zero")

    islands = count_islands(net)
    if islands > 1:
        violations.append(f"network is not connected ({islands} islands)")
    return list(dict.fromkeys(violations))


def count_islands(net: Network) -> int:
    index = net.index
    edges = [
        (index[branch.from_bus], index[branch.to_bus])
        for branch in net.branches
        if branch.from_bus in index and branch.to_bus in index
    ]
    n = len(index)
    if n == 0:
        return 0
    rows = np.array([a for a, _ in edges], dtype=int)
    cols = np.array([b for _, b in edges], dtype=int)
    graph = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    islands, _ = connected_components(graph, directed=False)
    return int(islands)
