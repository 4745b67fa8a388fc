"""Exception types raised across the package."""


class DmnError(Exception):
    """Base class for all package errors."""


class NumericalError(DmnError):
    """Base class for failures of a numerical procedure (CLI exit code 3)."""


class DegenerateBlock(NumericalError):
    """Two-layer block with a non-positive interface denominator."""


class SingularInterface(NumericalError):
    """The 2x2 interface system of a finite-strain block cannot be solved."""


class DeadNetwork(NumericalError):
    """Every leaf of the network has been deactivated."""


class NewtonDivergence(NumericalError):
    """Newton iterations did not converge within the iteration budget."""

    def __init__(self, message, trace=None, step=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.step = step


class NonConvergence(NumericalError):
    """A local scalar solve (e.g. return mapping) failed."""


class NoConvergence(NumericalError):
    """The FFT fixed-point scheme did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InvertedElement(NumericalError):
    """Deformation gradient with non-positive determinant."""

    def __init__(self, message, leaf=None):
        super().__init__(message)
        self.leaf = leaf


class SingularMacroSystem(NumericalError):
    """The mixed macroscopic constraint system is singular."""


class SingularSystem(NumericalError):
    """A dense oracle linear system is singular."""


class OracleFailure(NumericalError):
    """An oracle query failed while building a dataset."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class FormatError(DmnError):
    """Malformed checkpoint, dataset, path or microstructure file."""


class ConfigError(DmnError):
    """Invalid run configuration (CLI exit code 2)."""
