# Predictor Error Types
# Every failure carries the exit code the command line reports for it

from typing import Optional


class PredictorError(Exception):
    """Base error with an outward exit code and a human-readable detail"""

    exit_code = 4

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


# Input errors (exit code 2)

class InputError(PredictorError):
    exit_code = 2


class MirSyntaxError(InputError):
    """Malformed mini-IR text"""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnresolvedReferenceError(InputError):
    def __init__(self, name: str, context: str = ""):
        where = f" in {context}" if context else ""
        super().__init__(f"unresolved reference '{name}'{where}")
        self.name = name


class DuplicateDefinitionError(InputError):
    def __init__(self, name: str):
        super().__init__(f"duplicate definition of '{name}'")
        self.name = name


class InvalidControlFlowError(InputError):
    pass


class ProfileError(InputError):
    pass


class ModelFormatError(InputError):
    pass


class TraceFormatError(InputError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimensionMismatchError(InputError):
    pass


# Runtime faults (exit code 3)

class RuntimeFault(PredictorError):
    """Fault raised by the interpreter while executing a program"""

    exit_code = 3

    def __init__(self, method: str, index: int, message: str):
        super().__init__(f"{method}@{index}: {message}")
        self.method = method
        self.index = index


# Internal invariant violations (exit code 4)

class InvariantViolation(PredictorError):
    exit_code = 4


class ModelContractError(InvariantViolation):
    pass
