"""Exception types shared across the package."""


class SkybenchError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SkybenchError, ValueError):
    """A parameter is outside its documented range."""


class BehindCameraError(SkybenchError):
    """A point with non-positive depth was passed to a projection."""


class NumericFailureError(SkybenchError):
    """An iterative routine failed to converge."""


class ParseError(SkybenchError):
    """A file could not be parsed. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissionInfeasibleError(SkybenchError):
    """Waypoint geometry cannot be flown at the given flight parameters."""

    def __init__(self, message: str, waypoint_index: int):
        super().__init__(f"{message} (waypoint {waypoint_index})")
        self.waypoint_index = waypoint_index


class InvalidViewpointError(SkybenchError):
    """The camera is below the terrain at its own position."""


class DegenerateConfigurationError(SkybenchError):
    """Input geometry is rank-deficient (collinear points, parallel rays...)."""


class InsufficientViewsError(SkybenchError):
    """Too few calibration views to constrain the intrinsics."""


class CannotInitializeError(SkybenchError):
    """Two-view initialization preconditions not met (matches, flow)."""


class DegenerateMotionError(SkybenchError):
    """Two-view geometry has no valid decomposition (e.g. zero baseline)."""


class LowParallaxError(SkybenchError):
    """Ray pair below the triangulation parallax gate."""


class PayloadTooLargeError(SkybenchError):
    """Message payload exceeds the single-datagram limit."""


class TransportError(SkybenchError):
    """Socket-level failure in the pub/sub layer."""


class NoOverlapError(SkybenchError):
    """Two trajectories share no common time range."""


class DegenerateAnchorError(SkybenchError):
    """Scale anchoring is impossible (zero estimate altitude)."""


class ConfigError(SkybenchError):
    """Scenario configuration is malformed. Carries the offending key path."""

    def __init__(self, message: str, key_path: str | None = None):
        if key_path:
            message = f"{message} (at '{key_path}')"
        super().__init__(message)
        self.key_path = key_path
