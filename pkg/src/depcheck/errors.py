"""Exception hierarchy shared across the package."""


class DepcheckError(Exception):
    """Base class for all errors raised by depcheck."""


class UnknownNameError(DepcheckError, KeyError):
    """A formula referenced a proposition or reward structure the model lacks."""

    def __init__(self, kind: str, name: str):
        self.kind = kind
        self.name = name
        super().__init__(f"unknown {kind} {name!r}")

    def __str__(self):
        return self.args[0]


class PctlSyntaxError(DepcheckError, ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnsupportedNesting(PctlSyntaxError):
    pass


class SolverError(DepcheckError, ArithmeticError):
    """Numerical solve failed to reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3g})")


class ConditioningError(DepcheckError, ValueError):
    """Conditional expectation requested on an event of probability zero."""


class DataError(DepcheckError, ValueError):
    """Malformed or insufficient input data (episodes, model files, configs)."""
