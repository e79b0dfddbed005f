"""Exception hierarchy for the phi library.

Every error raised on purpose by the library derives from PhiError and from
the closest builtin, so callers can catch either.
"""

from typing import Any, List, Optional


class PhiError(Exception):
    """Base class for all library errors."""


class InvariantViolation(PhiError, AssertionError):
    """A documented invariant failed on a value the library produced."""


class NonSymmetric(PhiError, ValueError):
    """Matrix asymmetry exceeds the allowed tolerance."""

    def __init__(self, asymmetry: float, sym_tol: float):
        self.asymmetry = asymmetry
        self.sym_tol = sym_tol
        super().__init__(f"Matrix is not symmetric: max asymmetry {asymmetry:.3e} exceeds sym_tol {sym_tol:.3e}")


class NoConvergence(PhiError, ArithmeticError):
    """The Jacobi eigensolver exhausted its sweep budget."""


class DomainError(PhiError, ValueError):
    """A scalar map was evaluated outside its domain or returned a non-finite value."""


class DimensionOverflow(PhiError, ValueError):
    """A transform would grow the space beyond the configured budget."""

    def __init__(self, to_dim: int, budget: int):
        self.to_dim = to_dim
        self.budget = budget
        super().__init__(f"Stage dimension {to_dim} exceeds the space budget {budget}")


class NotStabilized(PhiError, RuntimeError):
    """The iteration ended without reaching a fixed point.

    The partial trace is attached so callers can still report on it.
    """

    def __init__(self, reason: str, trace: Optional[List[Any]] = None, last_residual: float = float("inf")):
        self.reason = reason
        self.trace = list(trace or [])
        self.last_residual = last_residual
        super().__init__(f"Iteration did not stabilize ({reason}) after {len(self.trace)} recorded stages")


class ShapeMismatch(PhiError, ValueError):
    """Operands have incompatible dimensions for the requested operation."""


class NotContraction(PhiError, ValueError):
    """A semigroup generator has spectrum above zero."""


class HypothesisViolation(PhiError, ValueError):
    """Inputs fall outside the regime where a limit theorem applies."""


class SemigroupOverflow(PhiError, OverflowError):
    """t * lambda_max leaves the floating-point exponent range."""


class NotGridAligned(PhiError, ValueError):
    """A shift amount is not a nonnegative multiple of the grid step."""


class EmptyResult(PhiError, ValueError):
    """A shift would drop every sample of a grid function."""


class AxiomViolation(PhiError, ValueError):
    """A scalar map does not preserve idempotents (f(0) != 0 or f(1) != 1)."""


class NotAFixedPoint(PhiError, ValueError):
    """A point passed for classification is not a fixed point of the map."""


class FormatError(PhiError, ValueError):
    """Malformed operator, grid or descriptor text."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        location = ""
        if path is not None:
            location = f"{path}"
        if line is not None:
            location += f":{line}"
            if column is not None:
                location += f":{column}"
        super().__init__(f"{location}: {message}" if location else message)


class ScenarioError(PhiError, ValueError):
    """A scenario file is invalid or a run failed; carries the scenario context."""

    def __init__(self, message: str, scenario: Optional[str] = None, key: Optional[str] = None):
        self.scenario = scenario
        self.key = key
        context = []
        if scenario:
            context.append(f"scenario {scenario}")
        if key:
            context.append(f"key '{key}'")
        prefix = f"[{', '.join(context)}] " if context else ""
        super().__init__(prefix + message)
