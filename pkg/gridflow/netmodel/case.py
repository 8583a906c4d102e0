"""
Native sectioned case format.

    [meta]      name <text>, angle_unit deg|rad, base_mva <float>
    [bus]       id kind V delta Pg Qg Pl Ql Vref [Gs Bs]
    [branch]    from to r x b_charging
    [source]    bus qmin qmax a b c vref        (vref "*" inherits the bus value)
    [weights]   w_loss w_dev w_cost

Rows are whitespace-delimited, "#" starts a comment. All values are p.u.
except angles, which follow angle_unit and are stored in radians.
"""

import math
from pathlib import Path
from typing import Optional, Union

from gridflow.exceptions import CaseFormatException, CaseValidationException
from gridflow.model import Branch, Bus, BusKind, Network, ReactiveSource, Weights
from gridflow.netmodel.validate import validate
from gridflow.util.fs import read_text
from gridflow.util.log import LOG

SECTIONS = ("meta", "bus", "branch", "source", "weights")

Row = tuple[int, list[str]]


def _read_sections(text: str) -> dict[str, list[Row]]:
    sections: dict[str, list[Row]] = {name: [] for name in SECTIONS}
    current: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise CaseFormatException(f"malformed section header {line!r}", number)
            current = line[1:-1].strip().lower()
            if current not in sections:
                raise CaseFormatException(f"unknown section [{current}]", number)
            continue
        if current is None:
            raise CaseFormatException("row outside of any section", number)
        sections[current].append((number, line.split()))
    return sections


def _floats(row: Row, count: int, what: str, optional: int = 0) -> list[float]:
    number, tokens = row
    if not count <= len(tokens) <= count + optional:
        expected = f"{count}" if not optional else f"{count}-{count + optional}"
        raise CaseFormatException(
            f"{what} row needs {expected} fields, got {len(tokens)}", number
        )
    try:
        return [float(token) for token in tokens]
    except ValueError as e:
        raise CaseFormatException(f"bad number in {what} row: {e}", number) from e


def _meta(rows: list[Row]) -> dict[str, str]:
    meta: dict[str, str] = {}
    for number, tokens in rows:
        if len(tokens) < 2:
            raise CaseFormatException("meta row needs a key and a value", number)
        meta[tokens[0].lower()] = " ".join(tokens[1:])
    return meta


def _bus(row: Row, to_radians: float) -> Bus:
    number, tokens = row
    if len(tokens) < 2:
        raise CaseFormatException("bus row needs 9 or 11 fields", number)
    try:
        kind = BusKind(tokens[1].lower())
    except ValueError as e:
        raise CaseFormatException(f"unknown bus kind {tokens[1]!r}", number) from e
    if len(tokens) not in (9, 11):
        raise CaseFormatException(
            f"bus row needs 9 or 11 fields, got {len(tokens)}", number
        )
    try:
        bus_id = int(tokens[0])
        values = [float(token) for token in tokens[2:]]
    except ValueError as e:
        raise CaseFormatException(f"bad number in bus row: {e}", number) from e
    v, delta, p_gen, q_gen, p_load, q_load, v_ref = values[:7]
    g_shunt, b_shunt = values[7:9] if len(values) == 9 else (0.0, 0.0)
    return Bus(
        id=bus_id,
        kind=kind,
        v_init=v,
        delta_init=delta * to_radians,
        p_gen=p_gen,
        q_gen=q_gen,
        p_load=p_load,
        q_load=q_load,
        v_ref=v_ref,
        g_shunt=g_shunt,
        b_shunt=b_shunt,
    )


def _branch(row: Row) -> Branch:
    from_bus, to_bus, r, x, b_charging = _floats(row, 5, "branch")
    if from_bus != int(from_bus) or to_bus != int(to_bus):
        raise CaseFormatException("branch endpoints must be integers", row[0])
    return Branch(
        from_bus=int(from_bus), to_bus=int(to_bus), r=r, x=x, b_charging=b_charging
    )


def _source(row: Row, buses: dict[int, Bus]) -> ReactiveSource:
    number, tokens = row
    inherit = len(tokens) == 7 and tokens[6] == "*"
    fields = tokens[:6] if inherit else tokens
    values = _floats((number, fields), 6 if inherit else 7, "source")
    if values[0] != int(values[0]):
        raise CaseFormatException("source bus must be an integer", number)
    bus_id = int(values[0])
    if inherit:
        bus = buses.get(bus_id)
        v_ref = bus.v_ref if bus is not None else 1.0
    else:
        v_ref = values[6]
    return ReactiveSource(
        bus=bus_id,
        q_min=values[1],
        q_max=values[2],
        a_p=values[3],
        b_p=values[4],
        c_p=values[5],
        v_ref=v_ref,
    )


def _weights(rows: list[Row]) -> Optional[Weights]:
    if not rows:
        return None
    if len(rows) > 1:
        raise CaseFormatException("more than one weights row", rows[1][0])
    w_loss, w_dev, w_cost = _floats(rows[0], 3, "weights")
    return Weights(w_loss=w_loss, w_dev=w_dev, w_cost=w_cost)


def _angle_factor(meta: dict[str, str]) -> float:
    unit = meta.get("angle_unit", "deg").lower()
    if unit in ("deg", "degree", "degrees"):
        return math.pi / 180.0
    if unit in ("rad", "radian", "radians"):
        return 1.0
    raise CaseFormatException(f"unknown angle_unit {unit!r}")


def parse_case(text: str) -> Network:
    """
    Parse a native case document into a validated Network.

    Raises:
        CaseFormatException: syntax error, with the offending line number
        CaseValidationException: the parsed network breaks a model invariant
    """
    sections = _read_sections(text)
    meta = _meta(sections["meta"])
    to_radians = _angle_factor(meta)
    buses = [_bus(row, to_radians) for row in sections["bus"]]
    by_id = {bus.id: bus for bus in buses}
    try:
        base_mva = float(meta.get("base_mva", "100"))
    except ValueError as e:
        raise CaseFormatException(f"bad base_mva: {e}") from e
    net = Network(
        name=meta.get("name", "network"),
        base_mva=base_mva,
        buses=tuple(buses),
        branches=tuple(_branch(row) for row in sections["branch"]),
        sources=tuple(_source(row, by_id) for row in sections["source"]),
        weights=_weights(sections["weights"]) or Weights(),
    )
    violations = validate(net)
    if violations:
        raise CaseValidationException(violations)
    LOG.debug(
        f"parsed case {net.name}: {net.n_bus} buses, {len(net.branches)} branches, "
        f"{len(net.sources)} sources"
    )
    return net


def _release_generators(net: Network, source_buses: set[int]) -> tuple[Bus, ...]:
    # a controlled source replaces the voltage regulation of a PV generator
    buses = []
    for bus in net.buses:
        if bus.id in source_buses and bus.kind is BusKind.PV:
            LOG.warning(f"bus {bus.id}: PV generator turned into a PQ source bus")
            bus = bus.model_copy(update={"kind": BusKind.PQ, "q_gen": 0.0})
        buses.append(bus)
    return tuple(buses)


def attach_sources(net: Network, text: str) -> Network:
    """
    Merge a source overlay (a native document holding [source] and
    optionally [weights]) into an existing network, replacing its sources.

    A PV bus that receives a source becomes a PQ bus whose reactive output
    is the control variable; its scheduled Q is dropped.
    """
    sections = _read_sections(text)
    for name in ("bus", "branch"):
        if sections[name]:
            raise CaseFormatException(
                f"source overlay must not contain [{name}]", sections[name][0][0]
            )
    by_id = {bus.id: bus for bus in net.buses}
    sources = tuple(_source(row, by_id) for row in sections["source"])
    update: dict[str, object] = {
        "sources": sources,
        "buses": _release_generators(net, {source.bus for source in sources}),
    }
    weights = _weights(sections["weights"])
    if weights is not None:
        update["weights"] = weights
    merged = net.model_copy(update=update)
    violations = validate(merged)
    if violations:
        raise CaseValidationException(violations)
    return merged


def serialize_case(net: Network) -> str:
    lines = [
        "[meta]",
        f"name {net.name}",
        "angle_unit rad",
        f"base_mva {net.base_mva!r}",
        "",
        "[bus]",
        "# id kind V delta Pg Qg Pl Ql Vref Gs Bs",
    ]
    for bus in net.buses:
        lines.append(
            " ".join(
                [str(bus.id), bus.kind.value]
                + [
                    repr(value)
                    for value in (
                        bus.v_init,
                        bus.delta_init,
                        bus.p_gen,
                        bus.q_gen,
                        bus.p_load,
                        bus.q_load,
                        bus.v_ref,
                        bus.g_shunt,
                        bus.b_shunt,
                    )
                ]
            )
        )
    lines += ["", "[branch]", "# from to r x b_charging"]
    for branch in net.branches:
        lines.append(
            f"{branch.from_bus} {branch.to_bus} {branch.r!r} {branch.x!r} "
            f"{branch.b_charging!r}"
        )
    lines += ["", "[source]", "# bus qmin qmax a b c vref"]
    for source in net.sources:
        lines.append(
            f"{source.bus} {source.q_min!r} {source.q_max!r} {source.a_p!r} "
            f"{source.b_p!r} {source.c_p!r} {source.v_ref!r}"
        )
    weights = net.weights
    lines += [
        "",
        "[weights]",
        f"{weights.w_loss!r} {weights.w_dev!r} {weights.w_cost!r}",
        "",
    ]
    return "\n".join(lines)


def load_network(
    path: Union[str, Path], sources: Optional[Union[str, Path]] = None
) -> Network:
    """
    Load a case file by suffix: ".case" is the native format, anything else
    is read as IEEE common data format. An optional source overlay is merged
    afterwards.
    """
    from gridflow.netmodel.cdf import parse_ieee_cdf

    path = Path(path)
    if not path.is_file():
        raise CaseFormatException(f"case file not found: {path}")
    text = read_text(path)
    net = parse_case(text) if path.suffix == ".case" else parse_ieee_cdf(text)
    if sources is not None:
        sources = Path(sources)
        if not sources.is_file():
            raise CaseFormatException(f"source overlay not found: {sources}")
        net = attach_sources(net, read_text(sources))
    return net
