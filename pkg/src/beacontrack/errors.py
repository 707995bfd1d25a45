"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class DegenerateHistogramError(InvalidInputError):
    """Otsu thresholding was asked to split a single-valued frame."""


class NumericalFailureError(ArithmeticError):
    """A linear-algebra step could not be completed (e.g. singular innovation)."""


class InvalidOperationError(RuntimeError):
    """An operation does not apply to the given object (e.g. zenith flip on a 4-state filter)."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    ``problems`` holds ``(field_path, message)`` pairs, one per failed check.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{path}: {msg}" for path, msg in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class AcquisitionError(RuntimeError):
    """Too few beacon detections arrived during the learning window."""
