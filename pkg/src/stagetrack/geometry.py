"""Spatial types, stage configuration, DOP math and grid coverage analysis.

Coordinate convention is right-handed with x along stage width, y along stage
depth and z height above the floor, all in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Sequence

import numpy as np

from .errors import CoincidentPoint, DegenerateGeometry

if TYPE_CHECKING:
    from .show import SceneDef
    from .zones import ZoneDef

DopMode = Literal["planar", "full3d"]

# Condition number above which a normal matrix is treated as singular.
_COND_LIMIT = 1e12
# In-plane LOS norm below which an anchor counts as "directly overhead".
_MIN_PLANAR_NORM = 1e-6


@dataclass(frozen=True)
class Vec3:
    """Point or vector in stage coordinates (meters)."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"Vec3 components must be finite, got {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Vec3") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def horizontal_distance_to(self, other: "Vec3") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Anchor:
    """Fixed transceiver at a surveyed position."""

    id: int
    position: Vec3
    max_range: float = 30.0

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"anchor id must be non-negative, got {self.id}")
        if not self.max_range > 0:
            raise ValueError(f"anchor max_range must be > 0, got {self.max_range}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used for occluders."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y or self.min.z > self.max.z:
            raise ValueError("box min corner must be <= max corner on every axis")


@dataclass
class StageConfig:
    """Stage dimensions plus everything installed on it."""

    width: float = 10.42
    depth: float = 10.44
    anchors: list[Anchor] = field(default_factory=list)
    occluders: list[Box] = field(default_factory=list)
    zones: "list[ZoneDef]" = field(default_factory=list)
    scenes: "list[SceneDef]" = field(default_factory=list)

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0):
            raise ValueError("stage width and depth must be > 0")
        ids = [a.id for a in self.anchors]
        if len(ids) != len(set(ids)):
            raise ValueError(f"anchor ids must be unique, got {ids}")

    def anchor_by_id(self, anchor_id: int) -> Anchor:
        for a in self.anchors:
            if a.id == anchor_id:
                return a
        raise KeyError(f"no anchor with id {anchor_id}")


@dataclass(frozen=True)
class DopResult:
    """Dilution-of-precision figures at one evaluation point."""

    hdop: float
    vdop: float | None
    gdop: float


@dataclass(frozen=True)
class CoverageCell:
    anchors_in_range: int
    hdop: float | None
    covered: bool


@dataclass(frozen=True)
class CoverageGrid:
    """Per-cell coverage verdicts over the stage rectangle.

    ``cells[ix][iy]`` holds the cell whose center is at
    ``((ix + 0.5) * cell_size, (iy + 0.5) * cell_size)``.
    """

    cell_size: float
    nx: int
    ny: int
    cells: tuple
    covered_fraction: float

    def csv_rows(self):
        """Yield (x_idx, y_idx, anchors, hdop, covered) rows for the report."""
        for ix in range(self.nx):
            for iy in range(self.ny):
                c = self.cells[ix][iy]
                yield ix, iy, c.anchors_in_range, c.hdop, c.covered


def _los_rows(anchor_positions: Sequence[Vec3], point: Vec3, mode: DopMode) -> np.ndarray:
    """Unit line-of-sight rows from point to each anchor, plus the shared
    ranging-bias column that makes DOP blow up outside the anchor hull."""
    rows = []
    p = point.as_array()
    for a in anchor_positions:
        d = a.as_array() - p
        norm3 = np.linalg.norm(d)
        if norm3 < 1e-9:
            raise CoincidentPoint(f"evaluation point coincides with anchor at {a}")
        if mode == "planar":
            norm2 = math.hypot(d[0], d[1])
            if norm2 < _MIN_PLANAR_NORM:
                raise DegenerateGeometry("anchor directly overhead: no in-plane sightline")
            rows.append([d[0] / norm2, d[1] / norm2, 1.0])
        else:
            u = d / norm3
            rows.append([u[0], u[1], u[2], 1.0])
    return np.array(rows, dtype=float)


def dop(anchor_positions: Sequence[Vec3], point: Vec3, mode: DopMode = "planar") -> DopResult:
    """Dilution of precision of a range-based position solve at ``point``.

    The normal matrix is built from unit line-of-sight vectors augmented with a
    common ranging-bias term; planar mode keeps only the x,y components,
    renormalized in-plane. hdop/vdop/gdop are square roots of the corresponding
    trace blocks of its inverse.

    Raises CoincidentPoint when the point sits on an anchor and
    DegenerateGeometry when the geometry is rank deficient.
    """
    n_min = 3 if mode == "planar" else 4
    if len(anchor_positions) < n_min:
        raise DegenerateGeometry(
            f"{mode} DOP needs at least {n_min} anchors, got {len(anchor_positions)}"
        )
    h = _los_rows(anchor_positions, point, mode)
    normal = h.T @ h
    if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > _COND_LIMIT:
        raise DegenerateGeometry("normal matrix is singular (collinear or parallel sightlines)")
    q = np.linalg.inv(normal)
    hdop = math.sqrt(q[0, 0] + q[1, 1])
    vdop = math.sqrt(q[2, 2]) if mode == "full3d" else None
    gdop = math.sqrt(np.trace(q))
    return DopResult(hdop=hdop, vdop=vdop, gdop=gdop)


def coverage_map(
    stage: StageConfig,
    cell_size: float,
    hdop_max: float = 6.0,
    min_anchors: int = 3,
    eval_height: float = 1.0,
) -> CoverageGrid:
    """Grid the stage and mark each cell covered iff enough anchors are in
    range and the planar HDOP at the cell center stays under ``hdop_max``.

    Degenerate geometry at a cell marks it uncovered; it never aborts the map.
    """
    if not cell_size > 0:
        raise ValueError("cell_size must be > 0")
    if min_anchors < 3:
        raise ValueError("min_anchors must be >= 3")

    nx = math.ceil(stage.width / cell_size)
    ny = math.ceil(stage.depth / cell_size)
    columns = []
    covered_count = 0
    for ix in range(nx):
        column = []
        for iy in range(ny):
            center = Vec3((ix + 0.5) * cell_size, (iy + 0.5) * cell_size, eval_height)
            in_range = [
                a.position
                for a in stage.anchors
                if a.position.distance_to(center) <= a.max_range
            ]
            hdop_val: float | None = None
            if len(in_range) >= 3:
                try:
                    hdop_val = dop(in_range, center, "planar").hdop
                except (DegenerateGeometry, CoincidentPoint):
                    hdop_val = None
            covered = (
                len(in_range) >= min_anchors
                and hdop_val is not None
                and hdop_val <= hdop_max
            )
            if covered:
                covered_count += 1
            column.append(CoverageCell(len(in_range), hdop_val, covered))
        columns.append(tuple(column))
    return CoverageGrid(
        cell_size=cell_size,
        nx=nx,
        ny=ny,
        cells=tuple(columns),
        covered_fraction=covered_count / (nx * ny),
    )
