"""
Exception hierarchy shared by every gmptkit package.

Each error carries the process exit code the command-line surface maps it to:
  1 verification failure, 2 numerical failure, 3 input error, 4 integrity error
"""
from typing import Optional


EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_NUMERICAL = 2
EXIT_INPUT = 3
EXIT_INTEGRITY = 4


class GmptError(Exception):
    exit_code = EXIT_NUMERICAL


# ---------------------------------------------------------------- input (3) #

class InputError(GmptError):
    exit_code = EXIT_INPUT


class CoincidentPoints(InputError):
    pass


class NonOrthogonal(InputError):
    pass


class SlotOutOfRange(InputError):
    pass


class OrderTooLarge(InputError):
    pass


class OrderExceeded(InputError):
    pass


class NotDivergenceFree(InputError):
    pass


class SingularBackground(InputError):
    pass


class PointTooClose(InputError):
    pass


class EmptyMeasurement(InputError):
    pass


class FrequencyMismatch(InputError):
    pass


class DegenerateTensor(InputError):
    pass


class NotSkew(InputError):
    pass


class InvalidConfig(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(InputError):
    def __init__(self, check: str, detail: str = ""):
        self.check = check
        super().__init__(f"{check}: {detail}" if detail else check)


# ------------------------------------------------------------ numerical (2) #

class NumericalError(GmptError):
    exit_code = EXIT_NUMERICAL


class NonConvergence(NumericalError):
    def __init__(self, iterations: int, residual: float, index=None):
        self.iterations = iterations
        self.residual = residual
        self.index = index
        label = f" for index {index}" if index is not None else ""
        super().__init__(f"Krylov solve did not converge{label}: {iterations} iterations, residual {residual:.3e}")


class MissingIndex(NumericalError):
    pass


class MeshTooCoarse(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


# ---------------------------------------------------- integrity / verify #

class IntegrityError(GmptError):
    exit_code = EXIT_INTEGRITY


class VerificationFailed(GmptError):
    exit_code = EXIT_VERIFY

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("verification failed: " + ", ".join(self.failed))
