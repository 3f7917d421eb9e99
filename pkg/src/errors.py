"""
errors.py
Exception hierarchy shared by every levysprt module.

Each class carries the exit code the CLI returns for it:
  2  config / input / parameter problems
  3  mathematical infeasibility (thresholds, envelope targets)
  4  numerical failure (quadrature, root bracketing, censored Monte Carlo)
"""


class LevySprtError(RuntimeError):
    exit_code = 1


class ParameterError(LevySprtError, ValueError):
    exit_code = 2


class ConfigError(LevySprtError):
    exit_code = 2


class LoadError(LevySprtError):
    exit_code = 2

    def __init__(self, message: str, row: int = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class UnsupportedMeasureError(ParameterError):
    pass


class InfeasibleError(LevySprtError):
    exit_code = 3


class IntervalUndefinedError(InfeasibleError):
    pass


class InfeasibleThresholdError(InfeasibleError):
    pass


class NumericalError(LevySprtError):
    exit_code = 4


class NoSolutionError(NumericalError):
    pass


class MeasureIntegrabilityError(NumericalError):
    pass


class DiagnosticError(NumericalError):
    pass
