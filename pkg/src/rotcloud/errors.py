"""
Exception hierarchy for rotcloud.

Everything raised on purpose derives from RotcloudError. Errors that describe a
bad value also derive from ValueError so generic callers can catch them.
"""

from typing import Optional, Sequence


class RotcloudError(Exception):
    """Base class for all rotcloud errors"""


class UsageError(RotcloudError):
    """Bad command line or configuration file"""


class InvalidInputError(RotcloudError, ValueError):
    """A value violates a documented precondition"""


class ShapeMismatchError(RotcloudError, ValueError):
    """Two array shapes are incompatible for an operation"""

    def __init__(self, op: str, left: Sequence[int], right: Sequence[int], detail: str = ""):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        message = f"{op}: incompatible shapes {self.left} and {self.right}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DegenerateRotationError(RotcloudError, ValueError):
    """A rotation representation cannot be mapped to SO(3)"""


class MeshParseError(RotcloudError, ValueError):
    """Malformed OFF/OBJ content, reported with its line number"""

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class NonFiniteError(RotcloudError, FloatingPointError):
    """A loss or gradient became NaN or infinite"""


class WeightsFormatError(RotcloudError, ValueError):
    """A weights file could not be decoded"""


class WeightsMismatchError(RotcloudError, ValueError):
    """Stored tensors do not fit the model they are loaded into"""

    def __init__(self, message: str, tensors: Optional[Sequence[str]] = None):
        self.tensors = list(tensors or [])
        if self.tensors:
            message = f"{message}: {', '.join(self.tensors)}"
        super().__init__(message)


class FeatureMismatchError(RotcloudError, ValueError):
    """Two feature matrices disagree on sample count or labels"""


class InsufficientSamplesError(RotcloudError, ValueError):
    """A class has too few samples for the requested operation"""


class SchemaError(RotcloudError, ValueError):
    """A CSV file lacks a required column"""
