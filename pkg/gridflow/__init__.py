__version__ = "0.1.0"

__all__ = [
    "analyzer",
    "controller",
    "data",
    "exceptions",
    "model",
    "netmodel",
    "objective",
    "powerflow",
    "pso",
    "report",
    "run",
    "util",
]
