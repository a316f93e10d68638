"""Exception hierarchy shared by all ldslab modules."""

import numpy as np


class LabError(Exception):
    """Base class for every error raised by ldslab."""


class DimensionError(LabError, ValueError):
    pass


class RankError(LabError, np.linalg.LinAlgError):
    pass


class InstabilityError(LabError, ValueError):
    """Raised when an operation needs spectral radius < 1 and does not get it."""


class ConvergenceError(LabError, RuntimeError):
    pass


class DomainError(LabError, ValueError):
    pass


class BandUndefinedError(LabError, ValueError):
    pass


class EmptySummaryError(LabError, ValueError):
    pass


class ContainmentError(LabError, AssertionError):
    """A bound that must hold on every run was violated."""


class StateOverflowError(LabError, OverflowError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state first produced at t={step}")


class PowerOverflowError(LabError, OverflowError):
    def __init__(self, lam, m, k):
        self.lam, self.m, self.k = lam, m, k
        super().__init__(f"Jordan power overflows for lambda={lam}, m={m}, k={k}")


class ConfigError(LabError, ValueError):
    """Invalid experiment or system configuration; ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
