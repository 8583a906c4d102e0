import logging
import sys

RESET = "\x1b[0m"
COLORS = {
    logging.DEBUG: "\x1b[38;20m",
    logging.INFO: "\033[92m",
    logging.WARNING: "\x1b[33;20m",
    logging.ERROR: "\x1b[31;20m",
    logging.CRITICAL: "\x1b[31;1m",
}


class LogFormatter(logging.Formatter):
    """Colours records by level when stderr is a terminal."""

    def __init__(self) -> None:
        super().__init__("%(levelname)s: %(asctime)s: %(message)s")

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        if not sys.stderr.isatty():
            return text
        return f"{COLORS.get(record.levelno, '')}{text}{RESET}"


class StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is when a record is emitted."""

    def __init__(self) -> None:
        super().__init__()

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, _value) -> None:
        pass


def level_from_flags(verbose: bool = False, info: bool = False) -> int:
    """-v selects DEBUG, -i INFO, anything else ERROR."""
    return logging.DEBUG if verbose else logging.INFO if info else logging.ERROR


LOG = logging.Logger("gridflow")
if __name__ == "gridflow.util.log":
    handler = StderrHandler()
    handler.setFormatter(LogFormatter())
    handler.setLevel(logging.DEBUG)
    LOG.addHandler(handler)
    LOG.setLevel(logging.ERROR)
