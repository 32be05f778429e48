import json

import pytest

from stagetrack.geometry import Anchor, StageConfig, Vec3
from stagetrack.show import Requirement, SceneDef
from stagetrack.zones import ZoneDef

STAGE_W = 10.42
STAGE_D = 10.44


def rectangle_anchors(width: float, depth: float, z: float = 3.0) -> list[Anchor]:
    """Four anchors on a centered rectangle, ids counterclockwise from (-,-)."""
    cx, cy = STAGE_W / 2, STAGE_D / 2
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    return [
        Anchor(i, Vec3(cx + sx * width / 2, cy + sy * depth / 2, z))
        for i, (sx, sy) in enumerate(corners)
    ]


@pytest.fixture
def paper_rectangle_stage() -> StageConfig:
    """The reconfigured 7.55 m x 5.70 m anchor rectangle on the default stage."""
    return StageConfig(anchors=rectangle_anchors(7.55, 5.70))


@pytest.fixture
def small_square_stage() -> StageConfig:
    """The initial 3 m x 3 m anchor square that failed to cover the stage."""
    return StageConfig(anchors=rectangle_anchors(3.0, 3.0))


def puzzle_stage() -> StageConfig:
    """Three zones, three scenes chained to the end marker."""
    zones = [
        ZoneDef("z1", Vec3(2.0, 2.0, 0)),
        ZoneDef("z2", Vec3(8.0, 2.0, 0)),
        ZoneDef("z3", Vec3(5.2, 8.0, 0)),
    ]
    scenes = [
        SceneDef("opening", (Requirement("z1"),), next="middle"),
        SceneDef("middle", (Requirement("z2"),), next="finale"),
        SceneDef("finale", (Requirement("z3"),), next="end"),
    ]
    return StageConfig(anchors=rectangle_anchors(7.55, 5.70), zones=zones, scenes=scenes)


def puzzle_script() -> dict:
    """Three cubes walking into their zones one after another."""
    return {
        "tags": [
            {
                "id": 1,
                "waypoints": [
                    {"t": 0.0, "x": 5.0, "y": 5.0, "z": 0.2},
                    {"t": 2.0, "x": 2.0, "y": 2.0, "z": 0.2},
                    {"t": 60.0, "x": 2.0, "y": 2.0, "z": 0.2},
                ],
            },
            {
                "id": 2,
                "waypoints": [
                    {"t": 0.0, "x": 5.5, "y": 5.0, "z": 0.2},
                    {"t": 4.0, "x": 5.5, "y": 5.0, "z": 0.2},
                    {"t": 8.0, "x": 8.0, "y": 2.0, "z": 0.2},
                    {"t": 60.0, "x": 8.0, "y": 2.0, "z": 0.2},
                ],
            },
            {
                "id": 3,
                "waypoints": [
                    {"t": 0.0, "x": 5.0, "y": 6.0, "z": 0.2},
                    {"t": 10.0, "x": 5.0, "y": 6.0, "z": 0.2},
                    {"t": 14.0, "x": 5.2, "y": 8.0, "z": 0.2},
                    {"t": 60.0, "x": 5.2, "y": 8.0, "z": 0.2},
                ],
            },
        ]
    }


def stage_config_json(stage_width=STAGE_W, rect_w=7.55, rect_d=5.70, max_range=30.0, **extra) -> dict:
    """Stage config dict in the external file schema."""
    cx, cy = STAGE_W / 2, STAGE_D / 2
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    cfg = {
        "stage": {"width_m": STAGE_W, "depth_m": STAGE_D},
        "anchors": [
            {
                "id": i,
                "x_m": cx + sx * rect_w / 2,
                "y_m": cy + sy * rect_d / 2,
                "z_m": 3.0,
                "max_range_m": max_range,
            }
            for i, (sx, sy) in enumerate(corners)
        ],
    }
    cfg.update(extra)
    return cfg


@pytest.fixture
def write_json(tmp_path):
    def _write(name: str, data: dict) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)

    return _write
