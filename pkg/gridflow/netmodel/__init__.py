from gridflow.netmodel.case import (
    attach_sources,
    load_network,
    parse_case,
    serialize_case,
)
from gridflow.netmodel.cdf import parse_ieee_cdf
from gridflow.netmodel.validate import count_islands, validate

__all__ = [
    "attach_sources",
    "count_islands",
    "load_network",
    "parse_case",
    "parse_ieee_cdf",
    "serialize_case",
    "validate",
]
