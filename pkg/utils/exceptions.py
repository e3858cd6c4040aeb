"""Custom exceptions for the ZNE toolkit."""


class ZNEError(Exception):
    """Base class for every error raised by the toolkit."""
    pass


class CircuitError(ZNEError):
    """Invalid circuit structure (bad qubit index, misplaced measurement)."""
    pass


class CircuitParseError(CircuitError):
    """Syntax error in the line-based circuit format."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CalibrationError(ZNEError):
    """Malformed or inconsistent calibration data."""
    pass


class NoCouplingError(ZNEError):
    """Raised when a two-qubit gate is requested on an uncoupled pair."""

    def __init__(self, i: int, k: int):
        super().__init__(f"qubits {i} and {k} are not coupled")
        self.pair = (i, k)


class MappingError(ZNEError):
    """Layout or routing could not be completed."""
    pass


class AccumulationError(ZNEError):
    """A circuit could not be priced against a noise model."""
    pass


class FoldingError(ZNEError):
    """Invalid folding parameters or an unfoldable circuit."""
    pass


class SimulationError(ZNEError):
    """Simulation limits exceeded or numerical checks failed."""
    pass


class ExtrapolationError(ZNEError):
    """Degenerate or ill-conditioned extrapolation input."""
    pass


class StageError(ZNEError):
    """Wraps a pipeline failure with the stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class RunCancelledError(ZNEError):
    """A run was stopped through its cancellation event."""
    pass
