"""Exception taxonomy shared across the package."""


class SidewalkSimError(Exception):
    """Base class for all package errors."""


class OsmParseError(SidewalkSimError):
    """Malformed OSM XML; carries line/column in the message."""


class ReferentialIntegrityError(SidewalkSimError):
    """A way references a node id that is absent from the document."""


class EmptyNetworkError(SidewalkSimError):
    """No pedestrian ways survived the tag filter."""


class GeometryError(SidewalkSimError):
    """Degenerate or invalid geometry (zero-length polyline, bad polygon)."""


class MapFormatError(SidewalkSimError):
    """Map cache file has wrong version or violates the schema."""


class MapTooSmallError(SidewalkSimError):
    """No start/goal pair satisfying the separation range could be sampled."""


class NoPathError(SidewalkSimError):
    """Agent sits in a cell with no route to the goal."""


class PrefillStallError(SidewalkSimError):
    """Teacher produced no successful episodes within the episode budget."""


class TrainingDivergedError(SidewalkSimError):
    """Non-finite loss or gradient during training."""


class EpisodeTerminatedError(SidewalkSimError):
    """step() called on an episode that already reached a terminal state."""


class ReplayIntegrityError(SidewalkSimError):
    """Re-simulated trajectory diverged from the logged one."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
