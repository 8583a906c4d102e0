from importlib.resources import files
from pathlib import Path

FIXTURES = (
    "ieee9.case",
    "ieee9.cdf",
    "ieee9_load_steps.events",
    "ieee162_sources.case",
)


def bundled(name: str) -> Path:
    """Filesystem path of a fixture shipped with the package."""
    if name not in FIXTURES:
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return Path(str(files(__name__).joinpath(name)))
