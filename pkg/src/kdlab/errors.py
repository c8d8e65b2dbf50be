"""Exception types shared across kdlab modules."""


class KdlabError(Exception):
    """Base class for all kdlab errors."""


class DimensionMismatch(KdlabError):
    """Operands have incompatible shapes."""


class NotPositiveDefinite(KdlabError):
    """Matrix could not be factorized even at the maximum allowed jitter."""


class InvalidSpec(KdlabError):
    """A configuration or task specification is invalid."""


class InvalidLabel(KdlabError):
    """Class label out of range."""


class IoError(KdlabError):
    """File could not be read or written."""


class FormatError(KdlabError):
    """File contents do not match the expected binary format."""


class MissingTargets(KdlabError):
    """A loss kind requires targets that were not supplied."""


class MissingTeacher(KdlabError):
    """A distillation loss requires a teacher that was not supplied."""


class DegenerateKernel(KdlabError):
    """Too many random probes produced numerically zero kernel responses."""


class UnstableStep(KdlabError):
    """Euler step size violates the gradient-flow stability condition."""


class ParseError(KdlabError):
    """Config text is not syntactically valid."""


class ValidationError(KdlabError):
    """Config parsed but contains unknown or invalid entries."""
