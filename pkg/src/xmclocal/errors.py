"""Exception types shared across the package."""


class EigensolverError(RuntimeError):
    """Iterative eigensolver failed to converge within its budget."""


class NumericsError(ArithmeticError):
    """A numerical routine produced non-finite values."""


class ParseError(ValueError):
    """Dataset file is malformed.  Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ModelFormatError(RuntimeError):
    """Model file is corrupt, truncated, or of an unsupported version."""


class TrainingError(RuntimeError):
    """A training sub-step failed.  Carries the cluster index."""

    def __init__(self, message, cluster=None):
        if cluster is not None:
            message = f"cluster {cluster}: {message}"
        super().__init__(message)
        self.cluster = cluster
