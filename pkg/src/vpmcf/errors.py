"""Exception hierarchy shared by all modules."""


class VPMCFError(Exception):
    """Base class for every error raised by the package."""


class InvalidDataError(VPMCFError, ValueError):
    """Reference-surface data violates the small-curvature or grid invariants."""


class InvalidSpecError(InvalidDataError):
    """A generator specification cannot produce admissible data."""


class PreconditionError(VPMCFError, ValueError):
    """An operation was called outside the regime where its formula holds."""


class SingularDenominatorError(PreconditionError):
    pass


class GraphViolationError(VPMCFError):
    """The surface is no longer a graph over the reference surface."""


class StepFailureError(VPMCFError):
    """A time step produced non-finite values."""


class IterationFailureError(VPMCFError):
    pass


class InsufficientDataError(VPMCFError, ValueError):
    pass


class MissingArtifactError(VPMCFError, FileNotFoundError):
    pass
