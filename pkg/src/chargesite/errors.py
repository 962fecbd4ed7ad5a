"""Exception hierarchy shared by all pipeline stages."""


class SitingError(Exception):
    """Base class for every error raised by this package."""


class IngestError(SitingError):
    pass


class EmptyInstanceError(SitingError):
    def __init__(self, message: str = "empty instance"):
        super().__init__(message)


class ExactBudgetExceeded(SitingError):
    def __init__(self, message: str = "exact budget exceeded; use Heuristic"):
        super().__init__(message)


class NotComparableError(SitingError):
    def __init__(self, message: str = "bundles not comparable"):
        super().__init__(message)


class StageError(SitingError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
