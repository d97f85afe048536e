"""
Error Types

One exception hierarchy for the whole simulator. Every class also derives
from the closest builtin so callers can catch either.
"""

from typing import List, Optional, Sequence, Tuple


class SimulationError(Exception):
    """Root of every error raised by the simulator."""


class InvalidArgumentError(SimulationError, ValueError):
    pass


class DegenerateStateError(SimulationError, ValueError):
    """Mean spin vanishes, so squeezing and 'center' axes are undefined."""


class UnsupportedSizeError(SimulationError, ValueError):
    pass


class SequenceValidationError(SimulationError, ValueError):
    def __init__(self, message: str, step_index: Optional[int] = None):
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class FitError(SimulationError, RuntimeError):
    pass


class ConditioningError(SimulationError, RuntimeError):
    pass


class MissingParameterError(SimulationError, ValueError):
    pass


class CalibrationError(SimulationError, RuntimeError):
    pass


class ConfigError(SimulationError, ValueError):
    pass


class FieldDomainError(SimulationError, ValueError):
    """Field evaluated on a wire filament."""


class QuantizationAxisError(FieldDomainError):
    """Static field too small to define a quantization axis."""


class TrapSearchError(SimulationError, RuntimeError):
    def __init__(self, message: str, trace: Sequence[Tuple[int, Tuple[float, float, float], float]] = ()):
        # (iteration, position in m, |B|^2 in T^2)
        self.trace: List[Tuple[int, Tuple[float, float, float], float]] = list(trace)
        super().__init__(message)


class TrajectoryError(SimulationError, RuntimeError):
    def __init__(self, message: str, eta: float):
        self.eta = eta
        super().__init__(f"eta={eta:.4f}: {message}")
