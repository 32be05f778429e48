"""Per-tag constant-velocity Kalman filter and IMU heading helpers.

The filter fuses solver fixes (loose coupling: positions, not raw ranges)
into a 6-state position/velocity track. A chi-square gate on the innovation
rejects teleport-like outliers; sustained rejection reinitializes the track.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalBreakdown, Unobservable
from .geometry import Vec3
from .solver import PositionFix

# Covariance used when a track is (re)initialized from a bare fix.
_REINIT_POS_VAR = 100.0  # m^2
_REINIT_VEL_VAR = 25.0  # (m/s)^2

GRAVITY = 9.81  # m/s^2, +z up


@dataclass(frozen=True)
class ImuSample:
    """Body-frame inertial sample. Accel is specific force (reads +g when level)."""

    accel: Vec3  # m/s^2
    gyro: Vec3  # rad/s
    mag: Vec3  # microtesla
    timestamp_ms: int = 0

    def __post_init__(self):
        if self.accel.distance_to(Vec3(0, 0, 0)) >= 160.0:
            raise ValueError("accel magnitude beyond 16 g sensor bound")


@dataclass(frozen=True)
class FilterParams:
    q_accel: float = 0.5  # white acceleration density, (m/s^2)^2
    r_pos: float = 0.01  # measurement variance floor, m^2
    gate_chi2: float = 11.34  # chi-square 99% with 3 dof
    reject_reset: int = 10

    def __post_init__(self):
        if min(self.q_accel, self.r_pos, self.gate_chi2) <= 0 or self.reject_reset <= 0:
            raise ValueError("all filter parameters must be positive")


@dataclass(frozen=True)
class TrackState:
    """Fused position/velocity estimate for one tag."""

    position: Vec3
    velocity: Vec3
    covariance: np.ndarray  # 6x6 over [x y z vx vy vz]
    last_update_ms: int = 0
    consecutive_rejects: int = 0

    def state_vector(self) -> np.ndarray:
        return np.concatenate([self.position.as_array(), self.velocity.as_array()])


def track_from_fix(fix: PositionFix, large_covariance: bool = False) -> TrackState:
    """Start (or restart) a track at a fix with zero velocity."""
    cov = np.zeros((6, 6))
    if large_covariance:
        cov[:3, :3] = np.eye(3) * _REINIT_POS_VAR
    else:
        cov[:3, :3] = fix.covariance + np.eye(3) * 1e-6
    cov[3:, 3:] = np.eye(3) * _REINIT_VEL_VAR
    return TrackState(
        position=fix.position,
        velocity=Vec3(0.0, 0.0, 0.0),
        covariance=cov,
        last_update_ms=fix.timestamp_ms,
    )


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def predict(
    track: TrackState,
    dt: float,
    accel_world: Vec3 | None = None,
    params: FilterParams = FilterParams(),
) -> TrackState:
    """Propagate the track by ``dt`` seconds under the constant-velocity model.

    A known world-frame acceleration (gravity already removed) contributes the
    usual half-a-t-squared position term; uncertainty grows with the discrete
    white-acceleration process noise scaled by ``q_accel``.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return track

    f = np.eye(6)
    f[0:3, 3:6] = np.eye(3) * dt
    x = f @ track.state_vector()
    if accel_world is not None:
        a = accel_world.as_array()
        x[0:3] += 0.5 * a * dt * dt
        x[3:6] += a * dt
    g = np.concatenate([np.full(3, 0.5 * dt * dt), np.full(3, dt)])
    q = np.zeros((6, 6))
    for i in range(3):
        idx = [i, i + 3]
        q[np.ix_(idx, idx)] += params.q_accel * np.outer(g[[i, i + 3]], g[[i, i + 3]])
    cov = _symmetrize(f @ track.covariance @ f.T + q)
    return replace(
        track,
        position=Vec3.from_array(x[0:3]),
        velocity=Vec3.from_array(x[3:6]),
        covariance=cov,
    )


def update_position(
    track: TrackState,
    fix: PositionFix,
    params: FilterParams = FilterParams(),
) -> tuple[TrackState, bool]:
    """Fuse a position fix into the track.

    The innovation's Mahalanobis distance is tested against ``gate_chi2``;
    rejected fixes leave the state untouched and bump the reject counter, and
    ``reject_reset`` consecutive rejections reinitialize the track at the fix.

    Raises NumericalBreakdown (carrying a reinitialized track) when the
    innovation covariance cannot be inverted.
    """
    h = np.zeros((3, 6))
    h[:, :3] = np.eye(3)
    r = np.array(fix.covariance, dtype=float, copy=True)
    for i in range(3):
        r[i, i] = max(r[i, i], params.r_pos)

    x = track.state_vector()
    p = track.covariance
    innovation = fix.position.as_array() - x[:3]
    s = h @ p @ h.T + r
    try:
        s_inv = np.linalg.inv(s)
        if not np.all(np.isfinite(s_inv)):
            raise np.linalg.LinAlgError("non-finite inverse")
    except np.linalg.LinAlgError:
        raise NumericalBreakdown(
            "innovation covariance not invertible",
            track=track_from_fix(fix, large_covariance=True),
        ) from None

    mahalanobis_sq = float(innovation @ s_inv @ innovation)
    if mahalanobis_sq > params.gate_chi2:
        rejects = track.consecutive_rejects + 1
        if rejects >= params.reject_reset:
            return track_from_fix(fix, large_covariance=True), False
        return replace(track, consecutive_rejects=rejects), False

    gain = p @ h.T @ s_inv
    x_new = x + gain @ innovation
    joseph = np.eye(6) - gain @ h
    cov = _symmetrize(joseph @ p @ joseph.T + gain @ r @ gain.T)
    return (
        TrackState(
            position=Vec3.from_array(x_new[:3]),
            velocity=Vec3.from_array(x_new[3:]),
            covariance=cov,
            last_update_ms=max(track.last_update_ms, fix.timestamp_ms),
            consecutive_rejects=0,
        ),
        True,
    )


def tilt_compensated_heading(imu: ImuSample) -> float:
    """Heading in radians, [-pi, pi), east positive, 0 along stage +x.

    The magnetometer vector is leveled using the gravity direction from the
    accelerometer (minimal rotation taking measured "up" to +z), then heading
    is the atan2 of its horizontal components.

    Raises Unobservable in free fall, magnetic blackout, or when the leveled
    field has no horizontal component.
    """
    accel = imu.accel.as_array()
    mag = imu.mag.as_array()
    a_norm = np.linalg.norm(accel)
    m_norm = np.linalg.norm(mag)
    if a_norm <= 1.0:
        raise Unobservable(f"gravity not observable: |accel| = {a_norm:.3f} m/s^2")
    if m_norm <= 5.0:
        raise Unobservable(f"magnetic blackout: |mag| = {m_norm:.3f} uT")

    up = accel / a_norm
    z = np.array([0.0, 0.0, 1.0])
    cos_tilt = float(np.clip(up @ z, -1.0, 1.0))
    axis = np.cross(up, z)
    axis_norm = np.linalg.norm(axis)
    if axis_norm < 1e-12:
        # Already level (or exactly inverted: rotate about x by pi).
        leveled = mag if cos_tilt > 0 else np.array([mag[0], -mag[1], -mag[2]])
    else:
        axis = axis / axis_norm
        angle = math.acos(cos_tilt)
        # Rodrigues rotation of the mag vector.
        leveled = (
            mag * math.cos(angle)
            + np.cross(axis, mag) * math.sin(angle)
            + axis * (axis @ mag) * (1.0 - math.cos(angle))
        )
    horizontal = math.hypot(leveled[0], leveled[1])
    if horizontal < 1e-9:
        raise Unobservable("magnetic field vertical after leveling; heading undefined")
    heading = math.atan2(leveled[1], leveled[0])
    if heading >= math.pi:
        heading -= 2.0 * math.pi
    return heading
