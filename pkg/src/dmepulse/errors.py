class ConfigurationError(ValueError):
    """Invalid parameters or inputs that make an operation ill-defined."""


class MeasurementError(ValueError):
    """A waveform measurement could not be made (e.g. a missing threshold crossing)."""

    def __init__(self, message, *, threshold=None, edge=None, context=None):
        super().__init__(message)
        self.threshold = threshold
        self.edge = edge
        self.context = context or {}


class DivergenceError(RuntimeError):
    """An iterative estimator's residual kept growing."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
