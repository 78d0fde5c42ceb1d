"""Exception hierarchy. Every error carries a stable ``code`` string."""

from __future__ import annotations


class CoopvarError(Exception):
    code = "COOPVAR_ERROR"


class EmptyRegion(CoopvarError, ValueError):
    code = "EMPTY_REGION"


class InvalidGrid(CoopvarError, ValueError):
    code = "INVALID_GRID"


class InvalidParameter(CoopvarError, ValueError):
    code = "INVALID_PARAMETER"


class ShiftNotAdmissible(CoopvarError, ValueError):
    """Raised when the shift lambda is not below the principal eigenvalue of the region."""

    code = "SHIFT_NOT_ADMISSIBLE"

    def __init__(self, lam: float, bound: float, region: str = "full"):
        self.lam = float(lam)
        self.bound = float(bound)
        self.region = region
        super().__init__(
            f"shift lambda={self.lam:.17g} is not below sigma_1({region})={self.bound:.17g}"
        )


class RegionTooLarge(CoopvarError, ValueError):
    code = "REGION_TOO_LARGE"


class IterationStalled(CoopvarError, RuntimeError):
    code = "ITERATION_STALLED"


class NotPositive(CoopvarError, RuntimeError):
    code = "NOT_POSITIVE"


class SolverOutcome(CoopvarError, RuntimeError):
    """Base for solver exits that still carry the last state in ``result``."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class ConvergedToZero(SolverOutcome):
    code = "CONVERGED_TO_ZERO"


class DivergenceDetected(SolverOutcome):
    code = "DIVERGENCE_DETECTED"


class JacobianSingular(SolverOutcome):
    code = "JACOBIAN_SINGULAR"


class MaxIterations(SolverOutcome):
    code = "MAX_ITERS"


class BracketFailed(CoopvarError, RuntimeError):
    code = "BRACKET_FAILED"


class ConfigInvalid(CoopvarError, ValueError):
    code = "CONFIG_INVALID"

    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class SchemaMismatch(CoopvarError, ValueError):
    code = "SCHEMA_MISMATCH"
