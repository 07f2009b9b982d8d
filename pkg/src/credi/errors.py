"""Exception hierarchy shared by every stage of the pipeline."""
from __future__ import annotations


class CrediError(Exception):
    """Base class for all library errors."""


class SchemaError(CrediError):
    def __init__(self, line: int, field: str, message: str = ""):
        self.line = line
        self.field = field
        detail = f": {message}" if message else ""
        super().__init__(f"line {line}, field {field!r}{detail}")


class DanglingReference(CrediError):
    pass


class EmptyDataset(CrediError):
    pass


class CodeCollision(CrediError):
    pass


class AllClassesFiltered(CrediError):
    pass


class MissingGold(CrediError):
    def __init__(self, instance_id: str):
        self.instance_id = instance_id
        super().__init__(f"instance {instance_id!r} has no gold labels")


class UnitMismatch(CrediError):
    pass


class ParseError(CrediError):
    """Model output could not be turned into a label map.

    ``kind`` is one of ``MissingDimension``, ``ConflictingValues`` or
    ``UnknownLabel``.
    """

    KINDS = ("MissingDimension", "ConflictingValues", "UnknownLabel")

    def __init__(self, kind: str, detail: str = ""):
        if kind not in self.KINDS:
            raise ValueError(f"unknown parse error kind {kind!r}")
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class DimensionMismatch(CrediError):
    pass


class EmbedderFailure(CrediError):
    def __init__(self, instance_id: str, completed: int, cause: BaseException | None = None):
        self.instance_id = instance_id
        self.completed = completed
        self.cause = cause
        super().__init__(
            f"embedding failed at instance {instance_id!r} after {completed} completed: {cause}"
        )


class ConfigError(CrediError):
    pass


class LengthMismatch(CrediError):
    pass


class UnknownLabel(CrediError):
    pass


class MissingPrediction(CrediError):
    def __init__(self, instance_id: str):
        self.instance_id = instance_id
        super().__init__(f"no prediction record for instance {instance_id!r}")


class MissingPolarity(CrediError):
    def __init__(self, instance_id: str):
        self.instance_id = instance_id
        super().__init__(f"instance {instance_id!r} has no polarity label")


class ZeroInteractions(CrediError):
    pass
