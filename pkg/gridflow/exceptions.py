from typing import Any, Optional


class GridflowException(Exception):
    msg: str

    def __init__(self, msg: str = "") -> None:
        super().__init__(msg)
        self.msg = msg

    def __str__(self) -> str:
        return self.msg


class CaseFormatException(GridflowException):
    """a case document could not be read"""

    line: Optional[int]

    def __init__(self, msg: str = "", line: Optional[int] = None) -> None:
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class CaseValidationException(GridflowException):
    """a parsed network breaks one or more model invariants"""

    violations: list[str]

    def __init__(self, violations: list[str]) -> None:
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class CdfFormatException(GridflowException):
    """an IEEE common data format record could not be read"""

    record: Optional[int]

    def __init__(self, msg: str = "", record: Optional[int] = None) -> None:
        super().__init__(f"record {record}: {msg}" if record is not None else msg)
        self.record = record


class ZeroImpedanceException(GridflowException):
    """a branch has no series impedance"""


class PowerFlowException(GridflowException):
    """the Newton-Raphson power flow failed"""


class SingularJacobianException(PowerFlowException):
    """the power-flow Jacobian could not be factorised"""


class PowerFlowDivergedException(PowerFlowException):
    """the power flow stopped without meeting its tolerance"""

    solution: Any

    def __init__(self, msg: str = "", solution: Any = None) -> None:
        super().__init__(msg)
        self.solution = solution


class SensitivityException(GridflowException):
    """the reactive sensitivity denominator vanished at a source bus"""

    bus: int

    def __init__(self, bus: int, denominator: float) -> None:
        super().__init__(
            f"singular reactive sensitivity at bus {bus} "
            f"(denominator {denominator:.3e})"
        )
        self.bus = bus


class ControlDivergedException(GridflowException):
    """the control loop lost its power-flow solution mid-run"""

    trace: Any

    def __init__(self, msg: str = "", trace: Any = None) -> None:
        super().__init__(msg)
        self.trace = trace
