"""Exception types shared across the package."""

from __future__ import annotations


class SeqOptError(Exception):
    """Base class for all package errors."""


class InvalidProblemError(SeqOptError):
    """A problem definition violates a structural invariant.

    Carries the complete list of violations so callers can report all of
    them at once instead of fixing the definition one error at a time.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ConfigError(SeqOptError):
    """A JSON problem config is malformed or inconsistent."""


class KernelDomainError(SeqOptError):
    """The observation kernel is undefined for a requested history."""


class BudgetExceededError(SeqOptError):
    """An enumeration (states or rules) would exceed the configured budget."""


class InfeasibleTargetsError(SeqOptError):
    """Constraint targets are outside the achievable frontier."""

    def __init__(self, message: str, frontier=None):
        super().__init__(message)
        self.frontier = frontier


class UnreachableTargetsError(SeqOptError):
    """No threshold pair attains the requested error probabilities within
    tolerance at the configured cap."""

    def __init__(self, message: str, best=None, achieved=None):
        super().__init__(message)
        self.best = best
        self.achieved = achieved
