"""Exception hierarchy shared by the simulation engines."""


class SimulationError(RuntimeError):
    """Base class for failures raised while advancing a model state."""


class DomainError(ValueError):
    """A constitutive law was evaluated at a non-finite argument."""


class DegeneratePorosityError(SimulationError, ValueError):
    """Porosity is zero or negative where a transport coefficient needs it."""


class PoreCloggingError(SimulationError):
    """Crystal growth has filled the pore space (n <= 0)."""


class BlowUpError(SimulationError):
    """NaN/Inf or an excessive update appeared during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DivisionDegeneracyError(SimulationError):
    """The liquid fraction vanished at a node whose ion update divides by it."""


class SolverError(SimulationError):
    """An iterative linear solve did not reach its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MeshError(ValueError):
    """Invalid mesh construction request or degenerate element."""


class ConfigError(ValueError):
    """Invalid scenario configuration; message carries the line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
