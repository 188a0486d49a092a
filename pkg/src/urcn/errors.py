"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array shapes or channel counts are incompatible."""


class TuningError(RuntimeError):
    """An iterative parameter search (e.g. mask density bisection) failed."""


class ConsistencyError(RuntimeError):
    """Internal state is inconsistent, e.g. a trainable parameter has no gradient."""


class DegenerateInputError(ValueError):
    """Input makes a metric undefined (e.g. zero dynamic range)."""


class ManifestMismatchError(ValueError):
    """A checkpoint or dataset manifest does not match the requested configuration."""


class TrainingError(RuntimeError):
    """Training diverged.

    ``checkpoint`` holds the last parameter snapshot whose loss was finite and
    ``curve`` the loss rows recorded up to the failure.
    """

    def __init__(self, message, checkpoint=None, curve=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.curve = curve if curve is not None else []
