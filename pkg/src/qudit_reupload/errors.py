"""
Exception types raised by qudit_reupload.

Validation problems subclass ValueError so plain ``except ValueError`` keeps
working for callers that do not care about the exact kind.
"""


class QuditReuploadError(Exception):
    """Base class for all errors raised by this package"""


class InvalidDimensionError(QuditReuploadError, ValueError):
    pass


class InvalidPermutationError(QuditReuploadError, ValueError):
    pass


class ParameterLengthError(QuditReuploadError, ValueError):
    pass


class NonFiniteInputError(QuditReuploadError, ValueError):
    pass


class UnsupportedOperationError(QuditReuploadError, ValueError):
    pass


class SubspaceLeakageError(QuditReuploadError, ValueError):
    def __init__(self, residual: float):
        super().__init__(
            f"State leaked out of the Dicke subspace, residual norm {residual:.3e}"
        )
        self.residual = residual


class DatasetError(QuditReuploadError, ValueError):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ConfigError(QuditReuploadError, ValueError):
    pass


class TrainingAbortedError(QuditReuploadError, RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}, training aborted")
        self.epoch = epoch
        self.loss = loss


class CheckpointError(QuditReuploadError, ValueError):
    pass
