"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: :class:`ContractError` (and subclasses)
to 2, :class:`NonConvergenceError` to 3.
"""

from __future__ import annotations


class QEsscherError(Exception):
    """Base class. ``stage`` is filled in by the orchestration layer."""

    stage: str | None = None


class ContractError(QEsscherError, ValueError):
    """A precondition or construction contract was violated."""


class DomainError(ContractError):
    """A function was asked to act outside its domain (e.g. log of 0)."""

    def __init__(self, message: str, value: float | None = None):
        super().__init__(message)
        self.value = value


class ContractionError(ContractError):
    """A matrix that must be a contraction has operator norm above 1."""

    def __init__(self, norm: float):
        super().__init__(f"matrix is not a contraction: operator norm {norm:.17g} > 1")
        self.norm = norm


class InfeasibleError(ContractError):
    """Moment constraints cannot be met."""


class BoundViolationError(ContractError):
    """A polynomial exceeded its required sup-norm bound."""


class RangeError(QEsscherError, ArithmeticError):
    """Exponentials overflowed even after shifting."""


class NonConvergenceError(QEsscherError, RuntimeError):
    """An iterative method hit its iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class UnattainedSupremumError(NonConvergenceError):
    """The multiplier norm diverged, so the dual supremum may not be attained."""


def tag_stage(err: QEsscherError, stage: str) -> QEsscherError:
    """Attach a stage tag to ``err`` and prefix its message (idempotent)."""
    if err.stage is None:
        err.stage = stage
        if err.args:
            err.args = (f"[{stage}] {err.args[0]}",) + tuple(err.args[1:])
    return err
