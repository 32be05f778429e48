"""Two-way-ranging distance computation and clock-drift simulation.

Single-sided TWR needs one round trip and inherits a bias proportional to
clock drift times the responder reply delay; double-sided TWR adds a second
leg whose asymmetric combination cancels that drift to first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

from .errors import NegativeTof

SPEED_OF_LIGHT = 299_792_458.0  # m/s

TwrMode = Literal["single", "double"]

# Floating-point round-off guard: |ToF| below this clamps to zero.
_TOF_CLAMP = 1e-12


@dataclass(frozen=True)
class ClockModel:
    """Local oscillator: offset in seconds, drift in parts per million."""

    offset: float = 0.0
    drift_ppm: float = 0.0

    def __post_init__(self):
        if abs(self.drift_ppm) >= 100.0:
            raise ValueError(f"crystal drift beyond sanity bound: {self.drift_ppm} ppm")

    def measure(self, true_duration: float) -> float:
        """Duration as read by this clock."""
        return true_duration * (1.0 + self.drift_ppm * 1e-6)


@dataclass(frozen=True)
class TwrExchange:
    """Timestamp durations of one ranging exchange, in local-clock seconds.

    ``ra``/``db`` are the initiator round time and responder reply delay of the
    first leg; ``rb``/``da`` the responder round time and initiator reply delay
    of the second leg (double mode only).
    """

    ra: float
    db: float
    rb: float = 0.0
    da: float = 0.0
    mode: TwrMode = "single"

    def __post_init__(self):
        if min(self.ra, self.db, self.rb, self.da) < 0:
            raise ValueError("exchange durations must be >= 0")


@dataclass(frozen=True)
class RangeMeasurement:
    """One tag-anchor distance estimate."""

    tag_id: int
    anchor_id: int
    distance: float
    sigma: float
    quality: int = 255
    timestamp_ms: int = 0

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError(f"distance must be >= 0, got {self.distance}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0 <= self.quality <= 255:
            raise ValueError(f"quality must be in 0..255, got {self.quality}")


def ss_twr_distance(ra: float, db: float) -> float:
    """Single-sided TWR: distance from one round time and one reply delay."""
    if db < 0 or ra < db:
        raise NegativeTof(f"round time {ra} s shorter than reply delay {db} s")
    tof = (ra - db) / 2.0
    return SPEED_OF_LIGHT * tof


def ds_twr_distance(exchange: TwrExchange) -> float:
    """Double-sided TWR with the asymmetric combination, robust to unequal
    reply delays and first-order clock drift."""
    if exchange.mode != "double":
        raise ValueError("ds_twr_distance needs a double-mode exchange")
    x = exchange
    denom = x.ra + x.rb + x.da + x.db
    if denom <= 0:
        raise NegativeTof("degenerate exchange: zero total duration")
    tof = (x.ra * x.rb - x.da * x.db) / denom
    if tof < -_TOF_CLAMP:
        raise NegativeTof(f"exchange implies time of flight {tof} s")
    if tof < 0:
        tof = 0.0
    return SPEED_OF_LIGHT * tof


def simulate_exchange(
    true_distance: float,
    initiator: ClockModel,
    responder: ClockModel,
    reply_delay: float,
    mode: TwrMode = "double",
) -> TwrExchange:
    """Noise-free timestamp exchange over ``true_distance``.

    Each true duration is converted to the local-clock reading of whichever
    side measures it; the configured reply delay is the true delay on both
    sides. Measurement noise is the simulator's job, not this function's.
    """
    if true_distance < 0:
        raise ValueError("true_distance must be >= 0")
    if not reply_delay > 0:
        raise ValueError("reply_delay must be > 0")
    tof = true_distance / SPEED_OF_LIGHT
    ra_true = 2.0 * tof + reply_delay
    if mode == "single":
        return TwrExchange(
            ra=initiator.measure(ra_true),
            db=responder.measure(reply_delay),
            mode="single",
        )
    rb_true = 2.0 * tof + reply_delay
    return TwrExchange(
        ra=initiator.measure(ra_true),
        db=responder.measure(reply_delay),
        rb=responder.measure(rb_true),
        da=initiator.measure(reply_delay),
        mode="double",
    )
