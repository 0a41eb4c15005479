"""Exception types shared across the package."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient.

    ``epoch`` is filled in by the training loop when known.
    """

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class ParseError(ValueError):
    """A delimited-text file or manifest could not be parsed."""


class SplitError(ValueError):
    """A requested dataset split is empty or infeasible."""
