"""Exception hierarchy shared across the tracking stack."""


class StageTrackError(Exception):
    """Base class for all stagetrack errors."""


class ConfigError(StageTrackError):
    """Stage/script configuration is missing, malformed or inconsistent."""


class DegenerateGeometry(StageTrackError):
    """Anchor geometry is rank deficient (collinear anchors, parallel sightlines)."""


class CoincidentPoint(StageTrackError):
    """Evaluation point coincides with an anchor position."""


class NegativeTof(StageTrackError):
    """A ranging exchange implies a negative time of flight."""


class InsufficientAnchors(StageTrackError):
    """Too few range measurements for the requested solve mode."""


class NoConvergence(StageTrackError):
    """Iterative solve stopped at max_iterations without meeting the step threshold.

    Carries the best iterate so callers (e.g. the fusion gate) can still decide
    whether to use it.
    """

    def __init__(self, message, fix=None):
        super().__init__(message)
        self.fix = fix


class NumericalBreakdown(StageTrackError):
    """Innovation covariance was not invertible; the track was reinitialized.

    Carries the reinitialized track state.
    """

    def __init__(self, message, track=None):
        super().__init__(message)
        self.track = track


class Unobservable(StageTrackError):
    """Sensor data cannot support the requested estimate (free fall, magnetic blackout)."""


class FrameOrder(StageTrackError):
    """Frame indices presented to a state machine went backwards."""


class UnknownZone(StageTrackError):
    """Event references a zone id absent from the stage configuration."""


class UnknownScene(StageTrackError):
    """Scene id absent from the configured scene list."""


class FieldRange(StageTrackError):
    """Frame field value does not fit its wire encoding."""
