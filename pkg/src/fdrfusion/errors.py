class ParameterError(ValueError):
    """An argument is outside its allowed range."""


class DegenerateModelError(ValueError):
    """The model collapses (zero variance, no signal-bearing sensors, ...)."""
