"""Exception types raised by the planning pipeline."""

from typing import Optional


class VacufixError(Exception):
    """Base class for every error raised by vacufix."""


class MeshError(VacufixError, ValueError):
    """Problem with an input mesh."""


class UnreadableFileError(MeshError):
    """File is missing, unreadable, or not a parseable STL."""


class TruncatedBinaryError(MeshError):
    """Binary STL declares more triangles than its payload holds."""


class EmptyMeshError(MeshError):
    """No valid triangle survived loading."""


class NotWatertightError(MeshError):
    """Mesh has an open boundary or an inconsistent signed volume."""


class EmptyPointSetError(VacufixError, ValueError):
    """A spatial index was requested over zero points."""


class EmptyResultError(VacufixError, ValueError):
    """Surface sampling produced no hit."""


class TooFewPointsError(VacufixError, ValueError):
    """Not enough points to estimate normals."""


class TooFewCandidatesError(VacufixError, ValueError):
    """Not enough representatives to build a support configuration."""


class DegenerateGeometryError(VacufixError, ValueError):
    """Contacts are collinear and the moment rows lose rank."""


class UnknownIdError(VacufixError, KeyError):
    """A configuration or screw id is not known."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown id"


class ConfigError(VacufixError, ValueError):
    """Invalid planner configuration.

    Args:
        message: Human readable description
        field: Dotted name of the offending setting, e.g. ``filter.coverage_tau``
    """

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)
