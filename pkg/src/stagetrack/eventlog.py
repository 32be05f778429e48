"""Event-log records: construction, newline-delimited JSON I/O, replay checks.

A log is one JSON object per line. The first record carries the stage
configuration and run parameters so a log is self-describing; the rest are
``truth``, ``fix``, ``track``, ``zone_event``, ``scene`` and ``diag`` records
in frame order. Track records omit the 6x6 covariance to keep logs compact.
"""

from __future__ import annotations

import json
import math
from typing import Iterable

from .errors import ConfigError
from .fusion import TrackState
from .geometry import Vec3
from .show import ShowState, SceneTransition, force_scene, show_step
from .solver import PositionFix
from .zones import ZoneEvent, ZoneTracker, zone_step


def rec_meta(stage_dict: dict, fps: float, seed: int, duration_s: float) -> dict:
    return {"kind": "meta", "fps": fps, "seed": seed, "duration_s": duration_s, "stage": stage_dict}


def rec_truth(frame: int, tag: int, pos: Vec3) -> dict:
    return {"kind": "truth", "frame": frame, "tag": tag, "x": pos.x, "y": pos.y, "z": pos.z}


def rec_fix(frame: int, tag: int, fix: PositionFix) -> dict:
    return {
        "kind": "fix",
        "frame": frame,
        "tag": tag,
        "x": fix.position.x,
        "y": fix.position.y,
        "z": fix.position.z,
        "residual_rms": fix.residual_rms,
        "n_anchors": fix.n_anchors,
        "mode": fix.mode,
        "timestamp_ms": fix.timestamp_ms,
        "cov": [[float(v) for v in row] for row in fix.covariance],
    }


def rec_track(frame: int, tag: int, track: TrackState) -> dict:
    return {
        "kind": "track",
        "frame": frame,
        "tag": tag,
        "x": track.position.x,
        "y": track.position.y,
        "z": track.position.z,
        "vx": track.velocity.x,
        "vy": track.velocity.y,
        "vz": track.velocity.z,
        "timestamp_ms": track.last_update_ms,
    }


def rec_zone_event(event: ZoneEvent) -> dict:
    return {
        "kind": "zone_event",
        "frame": event.frame,
        "zone": event.zone_id,
        "tag": event.tag_id,
        "event": event.kind.value,
    }


def rec_scene(tr: SceneTransition) -> dict:
    return {
        "kind": "scene",
        "frame": tr.frame,
        "from": tr.from_scene,
        "to": tr.to_scene,
        "forced": tr.forced,
    }


def rec_diag(frame: int, message: str, **extra) -> dict:
    rec = {"kind": "diag", "frame": frame, "message": message}
    rec.update(extra)
    return rec


def dump_record(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def write_log(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dump_record(rec) + "\n")


def read_log(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{line_no}: not valid JSON: {e}") from None
    return records


def summarize_log(records: list[dict]) -> dict:
    """Horizontal RMSE of fixes and tracks against truth, plus run outcome."""
    truth: dict[tuple[int, int], tuple[float, float]] = {}
    raw_sq: list[float] = []
    fused_sq: list[float] = []
    final_scene = None
    n_frames = 0
    zone_events = 0
    for rec in records:
        kind = rec.get("kind")
        if kind == "truth":
            truth[(rec["frame"], rec["tag"])] = (rec["x"], rec["y"])
            n_frames = max(n_frames, rec["frame"] + 1)
        elif kind == "fix":
            ref = truth.get((rec["frame"], rec["tag"]))
            if ref:
                raw_sq.append((rec["x"] - ref[0]) ** 2 + (rec["y"] - ref[1]) ** 2)
        elif kind == "track":
            ref = truth.get((rec["frame"], rec["tag"]))
            if ref:
                fused_sq.append((rec["x"] - ref[0]) ** 2 + (rec["y"] - ref[1]) ** 2)
        elif kind == "scene":
            final_scene = rec["to"]
        elif kind == "zone_event":
            zone_events += 1
    return {
        "raw_rmse": math.sqrt(sum(raw_sq) / len(raw_sq)) if raw_sq else None,
        "fused_rmse": math.sqrt(sum(fused_sq) / len(fused_sq)) if fused_sq else None,
        "final_scene": final_scene,
        "n_frames": n_frames,
        "zone_events": zone_events,
    }


def replay_check(records: list[dict]) -> str | None:
    """Re-run the zone and show state machines over a log's track records and
    compare against its logged events; returns the first divergence or None.
    """
    from .config import stage_from_dict  # deferred: config imports this module

    if not records or records[0].get("kind") != "meta":
        return "log does not start with a meta record"
    try:
        stage = stage_from_dict(records[0]["stage"])
    except (KeyError, ConfigError) as e:
        return f"meta record invalid: {e}"

    zones = list(stage.zones)
    scenes = list(stage.scenes)
    zone_ids = {z.id for z in zones}
    trackers: dict[tuple[str, int], ZoneTracker] = {}
    show_state = ShowState(current_scene=scenes[0].id if scenes else "end")

    # Group records per frame, preserving order.
    frames: dict[int, list[dict]] = {}
    order: list[int] = []
    for rec in records[1:]:
        frame = rec.get("frame")
        if frame is None:
            continue
        if frame not in frames:
            frames[frame] = []
            order.append(frame)
        frames[frame].append(rec)

    for frame in order:
        recs = frames[frame]
        logged_events = [r for r in recs if r["kind"] == "zone_event"]
        logged_scenes = [r for r in recs if r["kind"] == "scene" and not r.get("forced")]
        forced_scenes = [r for r in recs if r["kind"] == "scene" and r.get("forced")]

        computed_events: list[ZoneEvent] = []
        for rec in recs:
            if rec["kind"] != "track":
                continue
            pos = Vec3(rec["x"], rec["y"], rec["z"])
            for zone in zones:
                key = (zone.id, rec["tag"])
                tracker = trackers.get(key) or ZoneTracker(zone.id, rec["tag"])
                tracker, event = zone_step(tracker, zone, pos, frame)
                trackers[key] = tracker
                if event is not None:
                    computed_events.append(event)

        expected = [rec_zone_event(e) for e in computed_events]
        if expected != logged_events:
            return f"frame {frame}: zone events diverge: log {logged_events} vs recomputed {expected}"

        for rec in forced_scenes:
            show_state = force_scene(show_state, scenes, rec["to"], frame)
        if scenes:
            show_state, transitions = show_step(show_state, scenes, computed_events, frame, zone_ids)
            expected_scenes = [rec_scene(t) for t in transitions]
            if expected_scenes != logged_scenes:
                return (
                    f"frame {frame}: scene transitions diverge: "
                    f"log {logged_scenes} vs recomputed {expected_scenes}"
                )
        elif logged_scenes:
            return f"frame {frame}: scene records present but no scenes configured"
    return None
