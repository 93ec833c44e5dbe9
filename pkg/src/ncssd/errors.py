"""Exception hierarchy shared across the package."""


class NcssdError(Exception):
    pass


class DimensionError(NcssdError, ValueError):
    """Operand extents are incompatible with the requested operation."""


class DomainError(NcssdError, ValueError):
    """A numeric argument lies outside the operation's domain."""


class ConfigError(NcssdError, ValueError):
    pass


class MetricError(NcssdError, ValueError):
    """The metric is undefined for the given inputs (e.g. an empty mask)."""


class WeightFileError(NcssdError):
    """Base class for weight-container failures."""


class BadMagicError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    def __init__(self, offset, tensor=None, what="data"):
        self.offset = offset
        self.tensor = tensor
        where = f" in tensor {tensor!r}" if tensor is not None else ""
        super().__init__(f"file truncated at byte offset {offset} while reading {what}{where}")


class UnknownDtypeError(WeightFileError):
    pass


class ShapeMismatchError(WeightFileError):
    pass


class MissingTensorError(WeightFileError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"missing tensor {self.name!r}"


class CodecError(NcssdError):
    """Malformed .flo / PFM / image payload."""


class StageError(NcssdError):
    """A pipeline stage failed; wraps the underlying error with the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
