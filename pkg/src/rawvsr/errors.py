"""Shared exception types."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class ZeroEvidenceError(ArithmeticError):
    """An observation sequence has zero probability under the model."""


class UnreachableStateError(ArithmeticError):
    """A message puts mass on a state whose chain marginal is zero."""


class GradCheckError(RuntimeError):
    """Analytic gradient is non-finite or structurally unusable."""


class NumericalAbort(RuntimeError):
    """Training hit a non-finite loss or gradient and stopped."""
