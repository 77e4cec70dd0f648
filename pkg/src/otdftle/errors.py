"""Exception hierarchy shared by all modules."""


class OtdFtleError(Exception):
    """Base class. ``stage`` is filled in by the reduced pipeline."""

    stage: str | None = None


class ConfigError(OtdFtleError, ValueError):
    pass


class DimensionError(OtdFtleError, ValueError):
    pass


class IntegrationDivergedError(OtdFtleError, FloatingPointError):
    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite state at step {step} (t={time:g})")
        self.step = step
        self.time = time


class NumericalDegeneracyError(OtdFtleError, ArithmeticError):
    pass


class InvalidSpectrumError(OtdFtleError, ValueError):
    pass


class DegenerateBasisError(OtdFtleError, ArithmeticError):
    def __init__(self, column: int, norm: float):
        super().__init__(f"basis column {column} collapsed (norm {norm:.3e})")
        self.column = column
        self.norm = norm


class DegenerateInputError(OtdFtleError, ValueError):
    pass


class NearDegenerateError(OtdFtleError, ArithmeticError):
    def __init__(self, pair: tuple[int, int], gap: float):
        super().__init__(
            f"eigenvalues {pair[0]} and {pair[1]} are {gap:.3e} apart; "
            "eigenvector rate is unbounded"
        )
        self.pair = pair
        self.gap = gap
