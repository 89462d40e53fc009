"""Exception types shared across the toolkit."""


class IerlError(Exception):
    """Base class for every toolkit error."""


class FormatError(IerlError):
    """Malformed text input (embedding file, sentence store, dataset)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EncodingError(IerlError):
    """A sentence could not be turned into a vector."""


class MissingSentenceError(IerlError):
    """A sentence was not found in the sentence-vector store."""


class NormalizationError(IerlError):
    """Non-finite input, or a dot-product operand that is not unit/zero length."""


class AggregationError(IerlError):
    """Empty aggregation set, mixed dimensions, or a non-finite power block."""


class NoDissimilarContextError(IerlError):
    """The dissimilar context set is empty (single positive-label instance)."""


class DivergedError(IerlError):
    """The solver objective became non-finite."""

    def __init__(self, step: int):
        super().__init__(
            f"objective became non-finite at step {step}; lower the learning rate"
        )
        self.step = step


class DataError(IerlError):
    """Dataset, model-store, or report-level problem."""
