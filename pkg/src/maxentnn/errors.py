"""Exception hierarchy shared by all modules."""


class MaxentError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(MaxentError):
    """Malformed caller data: wrong shape, non-finite values, empty input."""


class ParameterError(MaxentError):
    """A tuning parameter is outside its admissible range."""


class DegenerateNeighborhoodError(MaxentError):
    """No training point survives the similarity filters around a query."""


class NumericalFailureError(MaxentError):
    """Non-finite values appeared while iterating the weight solver."""


class InvalidMaterialError(MaxentError):
    """Ply constants describe a non-physical (non-invertible) material."""


class DegenerateBaselineError(MaxentError):
    """A reference signal has zero power or zero variance."""


class IngestionError(MaxentError):
    """A measurement record or table file violates the documented schema."""


class LayupParseError(MaxentError):
    """Layup notation could not be parsed.

    Carries ``position``, the character offset of the offending token in the
    original string.
    """

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.position = position
