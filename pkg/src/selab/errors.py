"""Exception types shared across the package."""

import numpy as np


class SelabError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(SelabError, ValueError):
    pass


class ConfigError(SelabError):
    """Raised when an experiment configuration fails validation."""


class MissingArtifact(SelabError):
    pass


class NumericalFailure(SelabError):
    """Base for failures of an iterative or linear-algebra routine."""


class DegenerateCovariance(NumericalFailure):
    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = None if spectrum is None else np.asarray(spectrum)


class SolverFailure(NumericalFailure):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class FixedPointFailure(NumericalFailure):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class InconsistentMoments(NumericalFailure):
    pass


class ContractViolation(SelabError):
    pass
