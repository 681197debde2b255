"""Error codes, lab exceptions and response helpers."""

from __future__ import annotations

import re


class ErrorCode:
    INVALID_PARAMETERS = "INVALID_PARAMETERS"
    INADMISSIBLE_POTENTIAL = "INADMISSIBLE_POTENTIAL"
    INVALID_GRID = "INVALID_GRID"
    AMBIGUOUS_PROJECTION = "AMBIGUOUS_PROJECTION"
    NO_CONVERGENCE = "NO_CONVERGENCE"
    DENOMINATOR_NEAR_ZERO = "DENOMINATOR_NEAR_ZERO"
    DEGENERATE_WEIGHTS = "DEGENERATE_WEIGHTS"
    INVALID_EXPONENTS = "INVALID_EXPONENTS"
    PRECONDITION_FAILED = "PRECONDITION_FAILED"
    IDENTITY_VIOLATED = "IDENTITY_VIOLATED"
    BOUND_VIOLATED = "BOUND_VIOLATED"
    CHAIN_DIVERGED = "CHAIN_DIVERGED"
    NOT_EQUILIBRATED = "NOT_EQUILIBRATED"
    FACTORIZATION_FAILED = "FACTORIZATION_FAILED"
    PROBE_FAILED = "PROBE_FAILED"
    NOT_FOUND = "NOT_FOUND"
    INTERNAL_ERROR = "INTERNAL_ERROR"


ERROR_PATTERNS = {
    r"(not.positive.definite|leading.minor|singular.matrix|factor)": ErrorCode.FACTORIZATION_FAILED,
    r"(did.not.converge|no.convergence|not.converged|maximum.number.of.iterations)": ErrorCode.NO_CONVERGENCE,
    r"(\bnan\b|overflow|diverg|blow.?up)": ErrorCode.CHAIN_DIVERGED,
    r"(inadmissible|potential)": ErrorCode.INADMISSIBLE_POTENTIAL,
    r"(exponent|lambda1?|alpha)": ErrorCode.INVALID_EXPONENTS,
    r"(must.be|invalid|expected|out.of.range|shape)": ErrorCode.INVALID_PARAMETERS,
    r"(no.such.file|not.found|does.not.exist)": ErrorCode.NOT_FOUND,
}


class LabError(Exception):
    code = ErrorCode.INTERNAL_ERROR

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code:
            self.code = code

    def to_response(self) -> dict:
        return create_error_response(self.code, str(self))


class InvalidParameters(LabError, ValueError):
    code = ErrorCode.INVALID_PARAMETERS


class InadmissiblePotential(LabError):
    code = ErrorCode.INADMISSIBLE_POTENTIAL


class InvalidGrid(InvalidParameters):
    code = ErrorCode.INVALID_GRID


class AmbiguousProjection(LabError):
    code = ErrorCode.AMBIGUOUS_PROJECTION


class NoConvergence(LabError):
    code = ErrorCode.NO_CONVERGENCE


class DenominatorNearZero(LabError):
    code = ErrorCode.DENOMINATOR_NEAR_ZERO


class DegenerateWeights(LabError):
    code = ErrorCode.DEGENERATE_WEIGHTS


class InvalidExponents(InvalidParameters):
    code = ErrorCode.INVALID_EXPONENTS


class PreconditionViolation(InvalidParameters):
    code = ErrorCode.PRECONDITION_FAILED


class IdentityViolation(LabError):
    code = ErrorCode.IDENTITY_VIOLATED


class BoundViolation(LabError):
    code = ErrorCode.BOUND_VIOLATED


class ChainDivergence(LabError):
    code = ErrorCode.CHAIN_DIVERGED


class NonEquilibration(LabError):
    code = ErrorCode.NOT_EQUILIBRATED


class FactorizationFailure(LabError):
    code = ErrorCode.FACTORIZATION_FAILED


class ProbeFailure(LabError):
    code = ErrorCode.PROBE_FAILED


def detect_error_code(error_message: str) -> str:
    if not error_message:
        return ErrorCode.INTERNAL_ERROR

    msg = error_message.lower()
    for pattern, code in ERROR_PATTERNS.items():
        if re.search(pattern, msg, re.IGNORECASE):
            return code
    return ErrorCode.INTERNAL_ERROR


def error_code_for(exc: BaseException) -> str:
    if isinstance(exc, LabError):
        return exc.code
    return detect_error_code(str(exc))


def create_error_response(code: str, message: str) -> dict:
    return {"success": False, "error": {"code": code, "message": message}}
