"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes):

* :class:`ConfigurationError` and :class:`InvalidParameter` mean the inputs are
  wrong and nothing was simulated meaningfully (exit code 1).
* :class:`Diagnostic` subclasses mean the simulation ran but the device did not
  behave as a memory / logic cell should (exit code 2).
"""

from __future__ import annotations


class XpsramError(Exception):
    """Base class for all package errors."""


class InvalidParameter(XpsramError, ValueError):
    """A numeric argument is outside its allowed domain."""


class ConfigurationError(XpsramError):
    """A device or scenario configuration failed validation."""

    def __init__(self, message: str, failed_checks: list[str] | None = None):
        self.failed_checks = list(failed_checks or [])
        if self.failed_checks:
            message = message + ": " + "; ".join(self.failed_checks)
        super().__init__(message)


class TopologyError(ConfigurationError):
    """The optical netlist contains a zero-delay cycle or dangling port."""


class CapacityError(ConfigurationError):
    """More WDM channels requested than fit in one free spectral range."""


class UnknownProbe(XpsramError, KeyError):
    def __init__(self, name: str, available: list[str]):
        self.name = name
        self.available = sorted(available)
        super().__init__(f"unknown probe {name!r}; available: {', '.join(self.available)}")

    def __str__(self) -> str:  # KeyError would repr() the message otherwise
        return self.args[0]


class Diagnostic(XpsramError):
    """The simulated device misbehaved (failed write, unreadable output, ...)."""


class WriteFailure(Diagnostic):
    pass


class IndeterminateRead(Diagnostic):
    pass


class StabilityViolation(Diagnostic):
    pass


class CalibrationFailure(Diagnostic):
    pass


class NonConvergence(Diagnostic):
    def __init__(self, message: str, drift_target: tuple[float, float] | None = None):
        self.drift_target = drift_target
        super().__init__(message)


class AmbiguousCount(Diagnostic):
    pass
