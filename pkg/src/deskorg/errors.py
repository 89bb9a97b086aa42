"""Exception hierarchy shared by every module."""


class DeskOrgError(ValueError):
    """Base class for validation errors raised by the package."""


class InvalidGeometryError(DeskOrgError):
    pass


class DegeneratePairError(DeskOrgError):
    """A pair of objects (or a node) that admits no meaningful answer."""


class AnnotationAmbiguityError(DegeneratePairError):
    pass


class NoOppositeError(DeskOrgError):
    pass


class SameQuadrantError(DeskOrgError):
    pass


class ConfigurationError(DeskOrgError):
    pass


class DataError(DeskOrgError):
    pass


class DimensionError(DataError):
    pass


class EvidenceIncompleteError(DataError):
    pass


class CapacityError(DeskOrgError):
    pass


class NumericalError(DeskOrgError):
    """Raised when optimisation produces a non-finite objective."""

    def __init__(self, message, *, iteration=None, objective=None, grad_norm=None):
        details = f" (iteration={iteration}, objective={objective}, grad_norm={grad_norm})"
        super().__init__(message + details)
        self.iteration = iteration
        self.objective = objective
        self.grad_norm = grad_norm


class ParseError(DeskOrgError):
    """A diagnostic from one of the text parsers.

    ``code`` is stable across releases so callers can match on it.
    """

    def __init__(self, code, message, line=None, column=None):
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(f"{where}[{code}] {message}")
        self.code = code
        self.line = line
        self.column = column
