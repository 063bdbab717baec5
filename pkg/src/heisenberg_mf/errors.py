"""Exception classes shared across the package."""


class DomainError(ValueError):
    """Parameters outside the range where the construction makes sense."""


class SingularEvaluationError(ValueError):
    """Log kernel evaluated at coincident points."""


class ValidationError(ValueError):
    """Bad configuration or inconsistent inputs."""


class BinningMismatchError(ValueError):
    pass


class InsufficientSamplesError(RuntimeError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


class InvariantError(RuntimeError):
    """An internal invariant (normalisation, positivity) was violated."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, report=None, density=None):
        super().__init__(message)
        self.report = report
        self.density = density
