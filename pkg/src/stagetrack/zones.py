"""Per-(zone, tag) dwell state machines with hysteresis.

A tag must sit inside a zone's trigger square for ``dwell_frames`` consecutive
frames before the zone latches, and outside the (slightly larger) exit square
for the same count before it releases. The band between the two squares is
dead: it never advances either counter, so solver jitter on the boundary
cannot chatter the toggle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import FrameOrder
from .geometry import Vec3


class Containment(enum.Enum):
    INSIDE = "inside"
    BAND = "band"
    OUTSIDE = "outside"


class ZoneEventKind(enum.Enum):
    LATCHED = "latched"
    RELEASED = "released"


@dataclass(frozen=True)
class ZoneDef:
    """Square trigger area on the floor (z is ignored)."""

    id: str
    center: Vec3
    outer_half: float = 0.325  # 65 cm trigger square
    exit_half: float = 0.375  # hysteresis ring adds 5 cm per side
    dwell_frames: int = 100

    def __post_init__(self):
        if not self.outer_half > 0:
            raise ValueError("outer_half must be > 0")
        if self.exit_half < self.outer_half:
            raise ValueError("exit_half must be >= outer_half")
        if self.dwell_frames < 1:
            raise ValueError("dwell_frames must be >= 1")


@dataclass(frozen=True)
class ZoneEvent:
    zone_id: str
    tag_id: int
    kind: ZoneEventKind
    frame: int


@dataclass(frozen=True)
class ZoneTracker:
    """Dwell counters for one (zone, tag) pair."""

    zone_id: str
    tag_id: int
    occupancy: bool = False
    in_count: int = 0
    out_count: int = 0
    last_frame: int | None = None


def containment(zone: ZoneDef, pos: Vec3) -> Containment:
    """Classify a position against the trigger and exit squares (boundaries
    inclusive on the inner square, exclusive on the outer)."""
    dx = abs(pos.x - zone.center.x)
    dy = abs(pos.y - zone.center.y)
    if dx <= zone.outer_half and dy <= zone.outer_half:
        return Containment.INSIDE
    if dx > zone.exit_half or dy > zone.exit_half:
        return Containment.OUTSIDE
    return Containment.BAND


def zone_step(
    tracker: ZoneTracker,
    zone: ZoneDef,
    pos: Vec3,
    frame: int,
) -> tuple[ZoneTracker, ZoneEvent | None]:
    """Advance one tracker by one frame; emits at most one toggle event.

    While idle, consecutive INSIDE frames count toward a latch and anything
    else resets the count; while latched, consecutive OUTSIDE frames count
    toward a release and INSIDE or BAND resets. Frames must strictly increase.
    """
    if tracker.last_frame is not None and frame <= tracker.last_frame:
        raise FrameOrder(f"frame {frame} not after {tracker.last_frame}")

    where = containment(zone, pos)
    event = None
    if not tracker.occupancy:
        in_count = tracker.in_count + 1 if where is Containment.INSIDE else 0
        if in_count >= zone.dwell_frames:
            event = ZoneEvent(zone.id, tracker.tag_id, ZoneEventKind.LATCHED, frame)
            tracker = replace(tracker, occupancy=True, in_count=0, out_count=0, last_frame=frame)
        else:
            tracker = replace(tracker, in_count=in_count, out_count=0, last_frame=frame)
    else:
        out_count = tracker.out_count + 1 if where is Containment.OUTSIDE else 0
        if out_count >= zone.dwell_frames:
            event = ZoneEvent(zone.id, tracker.tag_id, ZoneEventKind.RELEASED, frame)
            tracker = replace(tracker, occupancy=False, in_count=0, out_count=0, last_frame=frame)
        else:
            tracker = replace(tracker, out_count=out_count, in_count=0, last_frame=frame)
    return tracker, event
