"""Exception hierarchy shared by all modules."""


class TesError(Exception):
    """Base class for all package errors."""


class NonPositiveCoefficient(TesError, ValueError):
    pass


class VanishingSolution(TesError, ArithmeticError):
    pass


class MeshMismatch(TesError, ValueError):
    pass


class NumericalBlowup(TesError, ArithmeticError):
    pass


class OrderTooLarge(TesError, ValueError):
    pass


class NegativeFrequency(TesError, ValueError):
    pass


class DegenerateStep(TesError, ValueError):
    pass


class ZeroDerivativeAtOrigin(TesError, ArithmeticError):
    pass


class OutOfDomain(TesError, ValueError):
    pass


class DegreeTooLarge(TesError, ValueError):
    pass


class LengthMismatch(TesError, ValueError):
    pass


class BoundaryOutOfDomain(TesError, ValueError):
    pass


class AllLambdasRejected(TesError, ArithmeticError):
    pass


class InfeasibleStart(TesError, ValueError):
    pass


class BudgetExhausted(TesError, RuntimeError):
    def __init__(self, message: str, evaluations: int = 0):
        super().__init__(message)
        self.evaluations = evaluations


class InvalidSpec(TesError, ValueError):
    pass


class ZeroDividend(InvalidSpec):
    pass


class InvalidState(TesError, ValueError):
    pass


class ConfigError(TesError, ValueError):
    pass
