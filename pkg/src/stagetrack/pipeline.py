"""Frame pipeline: range measurements in, fixes/tracks/events/scenes out.

One TrackingPipeline instance owns every per-tag and per-zone state machine
plus the show state. It is fed one frame at a time and returns the log
records produced by that frame, in a deterministic order (tags ascending,
zones in configuration order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    DegenerateGeometry,
    InsufficientAnchors,
    NoConvergence,
    NumericalBreakdown,
    UnknownZone,
)
from .eventlog import (
    rec_diag,
    rec_fix,
    rec_scene,
    rec_track,
    rec_zone_event,
)
from .fusion import (
    GRAVITY,
    FilterParams,
    ImuSample,
    TrackState,
    predict,
    track_from_fix,
    update_position,
)
from .geometry import StageConfig, Vec3
from .ranging import RangeMeasurement
from .show import ShowState, show_step, validate_scene_graph
from .solver import PositionFix, SolveOptions, multilaterate
from .zones import ZoneDef, ZoneTracker, zone_step


class TrackingPipeline:
    """Solver -> fusion -> zone dwell -> scene progression, per frame."""

    def __init__(
        self,
        stage: StageConfig,
        solve_opts: SolveOptions = SolveOptions(),
        filter_params: FilterParams = FilterParams(),
        fps: float = 30.0,
    ):
        zone_ids = {z.id for z in stage.zones}
        if len(zone_ids) != len(stage.zones):
            raise UnknownZone("duplicate zone ids in configuration")
        validate_scene_graph(stage.scenes, zone_ids)
        self.stage = stage
        self.solve_opts = solve_opts
        self.filter_params = filter_params
        self.fps = fps
        self.tracks: dict[int, TrackState] = {}
        self.zone_trackers: dict[tuple[str, int], ZoneTracker] = {}
        first_scene = stage.scenes[0].id if stage.scenes else "end"
        self.show_state = ShowState(current_scene=first_scene)
        self._anchor_pos = {a.id: a.position for a in stage.anchors}

    def update_zone(self, zone: ZoneDef) -> None:
        """Replace a zone definition in place; dwell counters are preserved."""
        for i, z in enumerate(self.stage.zones):
            if z.id == zone.id:
                self.stage.zones[i] = zone
                return
        raise UnknownZone(f"no zone {zone.id!r} to update")

    def _solve(self, tag: int, ranges, timestamp_ms: int, records: list) -> PositionFix | None:
        prior = self.tracks[tag].position if tag in self.tracks else None
        try:
            return multilaterate(ranges, self.solve_opts, prior=prior, timestamp_ms=timestamp_ms)
        except NoConvergence as e:
            records.append(rec_diag(self._frame, f"solver did not converge for tag {tag}", tag=tag, error="NoConvergence"))
            return e.fix
        except DegenerateGeometry:
            records.append(rec_diag(self._frame, f"degenerate anchor geometry for tag {tag}", tag=tag, error="DegenerateGeometry"))
            return None

    def _fuse(self, tag: int, fix: PositionFix, imu: ImuSample | None, records: list) -> TrackState:
        if tag not in self.tracks:
            track = track_from_fix(fix)
        else:
            accel_world = None
            if imu is not None:
                accel_world = Vec3(imu.accel.x, imu.accel.y, imu.accel.z - GRAVITY)
            track = predict(self.tracks[tag], 1.0 / self.fps, accel_world, self.filter_params)
            try:
                track, accepted = update_position(track, fix, self.filter_params)
            except NumericalBreakdown as e:
                track = e.track
                records.append(rec_diag(self._frame, f"numerical breakdown fusing tag {tag}; track reset", tag=tag, error="NumericalBreakdown"))
                accepted = True
            if not accepted:
                records.append(rec_diag(self._frame, f"fix gated out for tag {tag}", tag=tag, error="GateReject"))
        self.tracks[tag] = track
        return track

    def process_frame(
        self,
        frame: int,
        measurements: list[RangeMeasurement],
        imu: dict[int, ImuSample] | None = None,
    ) -> list[dict]:
        """Run one frame of the pipeline; returns its log records in order."""
        self._frame = frame
        imu = imu or {}
        records: list[dict] = []
        by_tag: dict[int, list[RangeMeasurement]] = {}
        for m in measurements:
            by_tag.setdefault(m.tag_id, []).append(m)

        events = []
        for tag in sorted(set(by_tag) | set(self.tracks)):
            meas = by_tag.get(tag, [])
            timestamp_ms = meas[0].timestamp_ms if meas else round(frame / self.fps * 1000.0)
            ranges = [
                (self._anchor_pos[m.anchor_id], m.distance, m.sigma)
                for m in meas
                if m.anchor_id in self._anchor_pos
            ]
            min_needed = 3 if self.solve_opts.mode == "planar" else 4
            if len(ranges) < min_needed:
                records.append(
                    rec_diag(
                        frame,
                        f"insufficient anchors for tag {tag}: {len(ranges)} < {min_needed}",
                        tag=tag,
                        error="InsufficientAnchors",
                    )
                )
                continue
            fix = self._solve(tag, ranges, timestamp_ms, records)
            if fix is None:
                continue
            records.append(rec_fix(frame, tag, fix))
            track = self._fuse(tag, fix, imu.get(tag), records)
            records.append(rec_track(frame, tag, track))

            for zone in self.stage.zones:
                key = (zone.id, tag)
                tracker = self.zone_trackers.get(key) or ZoneTracker(zone.id, tag)
                tracker, event = zone_step(tracker, zone, track.position, frame)
                self.zone_trackers[key] = tracker
                if event is not None:
                    events.append(event)
                    records.append(rec_zone_event(event))

        if self.stage.scenes:
            zone_ids = {z.id for z in self.stage.zones}
            self.show_state, transitions = show_step(
                self.show_state, self.stage.scenes, events, frame, zone_ids
            )
            for tr in transitions:
                records.append(rec_scene(tr))
        return records

    def process_position(
        self, frame: int, tag: int, fix: PositionFix, imu: ImuSample | None = None
    ) -> list[dict]:
        """Variant entry point for externally solved positions (capture links
        that forward fixes rather than raw ranges)."""
        self._frame = frame
        records: list[dict] = [rec_fix(frame, tag, fix)]
        track = self._fuse(tag, fix, imu, records)
        records.append(rec_track(frame, tag, track))
        events = []
        for zone in self.stage.zones:
            key = (zone.id, tag)
            tracker = self.zone_trackers.get(key) or ZoneTracker(zone.id, tag)
            tracker, event = zone_step(tracker, zone, track.position, frame)
            self.zone_trackers[key] = tracker
            if event is not None:
                events.append(event)
                records.append(rec_zone_event(event))
        if self.stage.scenes:
            zone_ids = {z.id for z in self.stage.zones}
            self.show_state, transitions = show_step(
                self.show_state, self.stage.scenes, events, frame, zone_ids
            )
            for tr in transitions:
                records.append(rec_scene(tr))
        return records
