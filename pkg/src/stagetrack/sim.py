"""Deterministic stage simulator: scripted motion, LOS/NLOS ranging, IMU.

All randomness comes from one seeded generator with a fixed draw order: for
each frame, tag ids ascending, then that tag's anchors ascending (dropout
draw, then noise, then NLOS bias), then IMU noise per tag ascending. Identical
(config, script, noise, seed) inputs therefore produce identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .fusion import GRAVITY, ImuSample
from .geometry import Box, StageConfig, Vec3
from .ranging import RangeMeasurement
from .rng import Xoshiro256

# World magnetic field used for synthesized magnetometer samples, microtesla.
MAG_FIELD = Vec3(30.0, 0.0, -20.0)
# Walking pace used when an operator drags a tag, m/s.
DRAG_SPEED = 1.5

_QUALITY_LOS = 200
_QUALITY_NLOS = 50


@dataclass(frozen=True)
class NoiseModel:
    sigma_los: float = 0.25
    sigma_nlos: float = 0.60
    nlos_bias_mean: float = 0.40  # exponential positive bias
    dropout_los: float = 0.01
    dropout_nlos: float = 0.25
    imu_accel_sigma: float = 0.05

    def __post_init__(self):
        if min(self.sigma_los, self.sigma_nlos) <= 0:
            raise ValueError("sigmas must be > 0")
        for p in (self.dropout_los, self.dropout_nlos):
            if not 0.0 <= p <= 1.0:
                raise ValueError("dropout probabilities must be in [0, 1]")
        if self.nlos_bias_mean < 0 or self.imu_accel_sigma < 0:
            raise ValueError("bias mean and IMU sigma must be >= 0")

    @staticmethod
    def noise_free() -> "NoiseModel":
        return NoiseModel(
            sigma_los=1e-9,
            sigma_nlos=1e-9,
            nlos_bias_mean=0.0,
            dropout_los=0.0,
            dropout_nlos=0.0,
            imu_accel_sigma=0.0,
        )


@dataclass
class MotionScript:
    """Per-tag waypoint lists with linear interpolation and terminal hold."""

    waypoints: dict[int, list[tuple[float, Vec3]]]

    def __post_init__(self):
        for tag, points in self.waypoints.items():
            if not points:
                raise ConfigError(f"tag {tag} has an empty waypoint list")
            times = [t for t, _ in points]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError(f"tag {tag} waypoint times must strictly increase")

    @property
    def tag_ids(self) -> list[int]:
        return sorted(self.waypoints)

    def position(self, tag: int, t: float) -> Vec3:
        points = self.waypoints[tag]
        if t <= points[0][0]:
            return points[0][1]
        for (t0, p0), (t1, p1) in zip(points, points[1:]):
            if t <= t1:
                u = (t - t0) / (t1 - t0)
                return Vec3(
                    p0.x + u * (p1.x - p0.x),
                    p0.y + u * (p1.y - p0.y),
                    p0.z + u * (p1.z - p0.z),
                )
        return points[-1][1]


@dataclass
class SimFrameOutput:
    frame: int
    truth: dict[int, Vec3]
    measurements: list[RangeMeasurement]
    imu: dict[int, ImuSample]
    dropped: int


def segment_intersects_box(a: Vec3, b: Vec3, box: Box) -> bool:
    """Closed-segment vs closed-box intersection by the slab method; touching
    a face or corner counts as intersecting."""
    origin = (a.x, a.y, a.z)
    direction = (b.x - a.x, b.y - a.y, b.z - a.z)
    lo = (box.min.x, box.min.y, box.min.z)
    hi = (box.max.x, box.max.y, box.max.z)
    tmin, tmax = 0.0, 1.0
    for o, d, l, h in zip(origin, direction, lo, hi):
        if abs(d) < 1e-15:
            if o < l or o > h:
                return False
            continue
        t1 = (l - o) / d
        t2 = (h - o) / d
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
        if tmin > tmax:
            return False
    return True


class SimWorld:
    """Owns the generator and per-tag motion state across ticks."""

    def __init__(
        self,
        stage: StageConfig,
        script: MotionScript,
        noise: NoiseModel,
        seed: int,
        fps: float = 30.0,
    ):
        if fps <= 0:
            raise ConfigError("fps must be > 0")
        if len(stage.anchors) == 0:
            raise ConfigError("stage has no anchors")
        for tag, points in script.waypoints.items():
            for _, p in points:
                if not (0.0 <= p.x <= stage.width and 0.0 <= p.y <= stage.depth):
                    raise ConfigError(f"tag {tag} waypoint {p} outside the stage rectangle")
        self.stage = stage
        self.script = script
        self.noise = noise
        self.fps = fps
        self.rng = Xoshiro256(seed)
        self._positions: dict[int, Vec3] = {}
        self._velocities: dict[int, Vec3] = {}
        self._drag_targets: dict[int, tuple[float, float]] = {}

    def drag_tag(self, tag: int, x: float, y: float) -> None:
        """Override scripted motion: walk the tag toward (x, y) from now on."""
        if tag not in self.script.waypoints:
            raise ConfigError(f"unknown tag {tag}")
        x = min(max(x, 0.0), self.stage.width)
        y = min(max(y, 0.0), self.stage.depth)
        self._drag_targets[tag] = (x, y)

    def _advance_tag(self, tag: int, t: float, dt: float) -> tuple[Vec3, Vec3, Vec3]:
        """New position plus finite-difference velocity and acceleration."""
        if tag in self._drag_targets:
            tx, ty = self._drag_targets[tag]
            cur = self._positions.get(tag, self.script.position(tag, t))
            gap = math.hypot(tx - cur.x, ty - cur.y)
            step = DRAG_SPEED * dt
            if gap <= step or gap == 0.0:
                pos = Vec3(tx, ty, cur.z)
            else:
                pos = Vec3(
                    cur.x + (tx - cur.x) / gap * step,
                    cur.y + (ty - cur.y) / gap * step,
                    cur.z,
                )
        else:
            pos = self.script.position(tag, t)
        prev_pos = self._positions.get(tag)
        prev_vel = self._velocities.get(tag, Vec3(0, 0, 0))
        if prev_pos is None or dt == 0.0:
            vel = Vec3(0.0, 0.0, 0.0)
        else:
            vel = Vec3(
                (pos.x - prev_pos.x) / dt,
                (pos.y - prev_pos.y) / dt,
                (pos.z - prev_pos.z) / dt,
            )
        accel = Vec3(
            (vel.x - prev_vel.x) / dt if dt > 0 else 0.0,
            (vel.y - prev_vel.y) / dt if dt > 0 else 0.0,
            (vel.z - prev_vel.z) / dt if dt > 0 else 0.0,
        )
        self._positions[tag] = pos
        self._velocities[tag] = vel
        return pos, vel, accel

    def is_nlos(self, tag_pos: Vec3, anchor_pos: Vec3) -> bool:
        return any(segment_intersects_box(tag_pos, anchor_pos, box) for box in self.stage.occluders)

    def tick(self, frame: int) -> SimFrameOutput:
        """Produce one frame of truth, range measurements and IMU samples."""
        t = frame / self.fps
        dt = 1.0 / self.fps
        timestamp_ms = round(t * 1000.0)
        truth: dict[int, Vec3] = {}
        accels: dict[int, Vec3] = {}
        measurements: list[RangeMeasurement] = []
        dropped = 0

        for tag in self.script.tag_ids:
            pos, _, accel = self._advance_tag(tag, t, dt)
            truth[tag] = pos
            accels[tag] = accel
            for anchor in sorted(self.stage.anchors, key=lambda a: a.id):
                true_dist = pos.distance_to(anchor.position)
                if true_dist > anchor.max_range:
                    continue
                nlos = self.is_nlos(pos, anchor.position)
                dropout = self.noise.dropout_nlos if nlos else self.noise.dropout_los
                if self.rng.random() < dropout:
                    dropped += 1
                    continue
                sigma = self.noise.sigma_nlos if nlos else self.noise.sigma_los
                dist = true_dist + self.rng.gauss(0.0, sigma)
                if nlos and self.noise.nlos_bias_mean > 0:
                    dist += self.rng.expovariate(self.noise.nlos_bias_mean)
                measurements.append(
                    RangeMeasurement(
                        tag_id=tag,
                        anchor_id=anchor.id,
                        distance=max(dist, 0.0),
                        sigma=sigma,
                        quality=_QUALITY_NLOS if nlos else _QUALITY_LOS,
                        timestamp_ms=timestamp_ms,
                    )
                )

        imu: dict[int, ImuSample] = {}
        for tag in self.script.tag_ids:
            a = accels[tag]
            noise = [self.rng.gauss(0.0, self.noise.imu_accel_sigma) for _ in range(3)]
            imu[tag] = ImuSample(
                accel=Vec3(a.x + noise[0], a.y + noise[1], a.z + GRAVITY + noise[2]),
                gyro=Vec3(0.0, 0.0, 0.0),
                mag=MAG_FIELD,
                timestamp_ms=timestamp_ms,
            )
        return SimFrameOutput(frame=frame, truth=truth, measurements=measurements, imu=imu, dropped=dropped)


def sim_tick(world: SimWorld, frame: int) -> SimFrameOutput:
    return world.tick(frame)


def run_simulation(
    stage: StageConfig,
    script: MotionScript,
    noise: NoiseModel,
    seed: int,
    duration_s: float,
    fps: float = 30.0,
    solve_opts=None,
    filter_params=None,
    stop_at_end: bool = True,
) -> list[dict]:
    """Drive the full pipeline over a scripted run; returns the event log.

    With ``stop_at_end`` the run finishes as soon as the show reaches its end
    scene, so the log's last record is that final transition.
    """
    from .config import stage_to_dict
    from .eventlog import rec_meta, rec_truth
    from .pipeline import TrackingPipeline
    from .show import END
    from .solver import SolveOptions
    from .fusion import FilterParams

    world = SimWorld(stage, script, noise, seed, fps)
    pipeline = TrackingPipeline(
        stage,
        solve_opts or SolveOptions(),
        filter_params or FilterParams(),
        fps,
    )
    records: list[dict] = [rec_meta(stage_to_dict(stage), fps, seed, duration_s)]
    for frame in range(int(round(duration_s * fps))):
        out = world.tick(frame)
        for tag in sorted(out.truth):
            records.append(rec_truth(frame, tag, out.truth[tag]))
        records.extend(pipeline.process_frame(frame, out.measurements, out.imu))
        if stop_at_end and stage.scenes and pipeline.show_state.current_scene == END:
            break
    return records
