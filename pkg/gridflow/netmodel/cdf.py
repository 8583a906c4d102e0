"""
IEEE common data format import.

Fixed-column records as published in the power system test case archive.
The import is one-way: buses and branches become a Network without reactive
sources (merge a source overlay with attach_sources). Loss zones,
interchange data and tie lines are skipped.
"""

import math
from typing import Callable

from gridflow.exceptions import CdfFormatException
from gridflow.model import Branch, Bus, BusKind, Network
from gridflow.util.log import LOG

FieldMap = dict[str, tuple[int, int, Callable[[str], object]]]


def _number(chunk: str) -> float:
    chunk = chunk.strip()
    return float(chunk) if chunk else 0.0


def _integer(chunk: str) -> int:
    chunk = chunk.strip()
    return int(chunk) if chunk else 0


TITLE_MAP: FieldMap = {
    "date": (1, 9, str.strip),
    "originator": (10, 30, str.strip),
    "mva_base": (31, 37, _number),
    "case_id": (45, 73, str.strip),
}

# 0-based [start, end) slices of the archive's 1-based column layout
BUS_MAP: FieldMap = {
    "bus_num": (0, 4, _integer),
    "name": (5, 17, str.strip),
    "bus_type": (24, 26, _integer),
    "v": (27, 33, _number),
    "angle": (33, 40, _number),
    "load_p": (40, 49, _number),
    "load_q": (49, 59, _number),
    "gen_p": (59, 67, _number),
    "gen_q": (67, 75, _number),
    "desired_volts": (84, 90, _number),
    "shunt_g": (106, 114, _number),
    "shunt_b": (114, 122, _number),
}

BRANCH_MAP: FieldMap = {
    "tap_bus": (0, 4, _integer),
    "z_bus": (5, 9, _integer),
    "r": (19, 29, _number),
    "x": (29, 40, _number),
    "b": (40, 50, _number),
    "ratio": (76, 82, _number),
    "shift": (83, 90, _number),
}

BUS_KINDS = {3: BusKind.SLACK, 2: BusKind.PV, 1: BusKind.PQ, 0: BusKind.PQ}

SKIPPED_SECTIONS = ("LOSS ZONES", "INTERCHANGE DATA", "TIE LINES")


def _parse_record(mapping: FieldMap, line: str, record: int) -> dict[str, object]:
    parsed = {}
    for name, (start, end, convert) in mapping.items():
        chunk = line[start:end]
        try:
            parsed[name] = convert(chunk)
        except ValueError as e:
            raise CdfFormatException(
                f"unparseable field {name} {chunk!r}", record
            ) from e
    return parsed


def _bus(fields: dict[str, object], base: float, record: int) -> Bus:
    try:
        kind = BUS_KINDS[fields["bus_type"]]
    except KeyError as e:
        raise CdfFormatException(
            f"unknown bus type {fields['bus_type']}", record
        ) from e
    desired = float(fields["desired_volts"])
    angle = math.radians(float(fields["angle"]))
    return Bus(
        id=int(fields["bus_num"]),
        kind=kind,
        v_init=float(fields["v"]),
        delta_init=0.0 if kind is BusKind.SLACK else angle,
        p_gen=float(fields["gen_p"]) / base,
        q_gen=float(fields["gen_q"]) / base,
        p_load=float(fields["load_p"]) / base,
        q_load=float(fields["load_q"]) / base,
        v_ref=desired if desired > 0.0 else 1.0,
        g_shunt=float(fields["shunt_g"]),
        b_shunt=float(fields["shunt_b"]),
    )


def _branch(fields: dict[str, object], record: int) -> Branch:
    ratio = float(fields["ratio"])
    shift = float(fields["shift"])
    if ratio not in (0.0, 1.0) or shift != 0.0:
        LOG.warning(
            f"record {record}: transformer ratio {ratio} / shift {shift} ignored"
        )
    return Branch(
        from_bus=int(fields["tap_bus"]),
        to_bus=int(fields["z_bus"]),
        r=float(fields["r"]),
        x=float(fields["x"]),
        b_charging=float(fields["b"]),
    )


def parse_ieee_cdf(text: str) -> Network:
    """
    Parse an IEEE common data format document.

    MW/MVAR quantities are divided by the title card's MVA base, angles are
    converted to radians and bus types map 3 -> slack, 2 -> PV, 0/1 -> PQ.

    Raises:
        CdfFormatException: missing title card, malformed section header or
            an unparseable fixed-width field (with its record number)
    """
    lines = text.splitlines()
    title_record = next(
        (number for number, line in enumerate(lines, start=1) if line.strip()), None
    )
    if title_record is None:
        raise CdfFormatException("missing title card")
    title = _parse_record(TITLE_MAP, lines[title_record - 1], title_record)
    base = float(title["mva_base"]) or 100.0

    buses: list[Bus] = []
    branches: list[Branch] = []
    section = None
    for number, line in enumerate(lines[title_record:], start=title_record + 1):
        if not line.strip():
            continue
        head = line.strip().upper()
        if section is None:
            if head.startswith("BUS DATA FOLLOWS"):
                section = "bus"
            elif head.startswith("BRANCH DATA FOLLOWS"):
                section = "branch"
            elif head.startswith(SKIPPED_SECTIONS):
                section = "skip"
                skipped = head.split(" FOLLOWS")[0]
                LOG.warning(f"record {number}: skipping section {skipped}")
            elif head.startswith("END OF DATA"):
                break
            else:
                raise CdfFormatException(f"malformed section header {head!r}", number)
            continue
        if head.startswith("-9"):
            section = None
        elif section == "bus":
            buses.append(_bus(_parse_record(BUS_MAP, line, number), base, number))
        elif section == "branch":
            branches.append(_branch(_parse_record(BRANCH_MAP, line, number), number))
    if section is not None:
        raise CdfFormatException(f"unterminated {section} section")

    name = str(title["case_id"]) or "cdf case"
    LOG.info(f"imported CDF {name}: {len(buses)} buses, {len(branches)} branches")
    return Network(
        name=name, base_mva=base, buses=tuple(buses), branches=tuple(branches)
    )
