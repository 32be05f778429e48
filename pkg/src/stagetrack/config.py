"""JSON configuration: stage files, motion scripts, tuning sections.

Stage file schema (all lengths meters)::

    {
      "stage": {"width_m": 10.42, "depth_m": 10.44},
      "anchors": [{"id": 0, "x_m": 1.4, "y_m": 2.4, "z_m": 3.0, "max_range_m": 30.0}, ...],
      "occluders": [{"min": [x, y, z], "max": [x, y, z]}, ...],
      "zones": [{"id": "z1", "center_x_m": 2.0, "center_y_m": 2.0,
                 "outer_half_m": 0.325, "exit_half_m": 0.375, "dwell_frames": 100}, ...],
      "scenes": [{"id": "s1", "requirements": [{"zone": "z1", "tag": "any"}], "next": "s2"}, ...],
      "noise": {...}, "solver": {...}, "filter": {...}   # optional tuning sections
    }

Motion script schema::

    {"tags": [{"id": 1, "waypoints": [{"t": 0.0, "x": 1.0, "y": 2.0, "z": 0.2}, ...]}]}
"""

from __future__ import annotations

import json

from .errors import ConfigError
from .fusion import FilterParams
from .geometry import Anchor, Box, StageConfig, Vec3
from .show import END, Requirement, SceneDef, validate_scene_graph
from .sim import MotionScript, NoiseModel
from .solver import SolveOptions
from .zones import ZoneDef


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _vec3(value, context: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{context}: expected [x, y, z], got {value!r}")
    return Vec3(float(value[0]), float(value[1]), float(value[2]))


def stage_from_dict(data: dict) -> StageConfig:
    try:
        stage_section = _require(data, "stage", "config")
        width = float(_require(stage_section, "width_m", "stage"))
        depth = float(_require(stage_section, "depth_m", "stage"))

        anchors = []
        for i, a in enumerate(data.get("anchors", [])):
            anchors.append(
                Anchor(
                    id=int(_require(a, "id", f"anchors[{i}]")),
                    position=Vec3(
                        float(_require(a, "x_m", f"anchors[{i}]")),
                        float(_require(a, "y_m", f"anchors[{i}]")),
                        float(a.get("z_m", 3.0)),
                    ),
                    max_range=float(a.get("max_range_m", 30.0)),
                )
            )

        occluders = []
        for i, o in enumerate(data.get("occluders", [])):
            occluders.append(
                Box(
                    min=_vec3(_require(o, "min", f"occluders[{i}]"), f"occluders[{i}].min"),
                    max=_vec3(_require(o, "max", f"occluders[{i}]"), f"occluders[{i}].max"),
                )
            )

        zones = []
        for i, z in enumerate(data.get("zones", [])):
            zones.append(
                ZoneDef(
                    id=str(_require(z, "id", f"zones[{i}]")),
                    center=Vec3(
                        float(_require(z, "center_x_m", f"zones[{i}]")),
                        float(_require(z, "center_y_m", f"zones[{i}]")),
                        0.0,
                    ),
                    outer_half=float(z.get("outer_half_m", 0.325)),
                    exit_half=float(z.get("exit_half_m", 0.375)),
                    dwell_frames=int(z.get("dwell_frames", 100)),
                )
            )

        scenes = []
        for i, s in enumerate(data.get("scenes", [])):
            requirements = []
            for j, r in enumerate(s.get("requirements", [])):
                tag = r.get("tag", "any")
                requirements.append(
                    Requirement(
                        zone_id=str(_require(r, "zone", f"scenes[{i}].requirements[{j}]")),
                        tag=None if tag == "any" else int(tag),
                    )
                )
            scenes.append(
                SceneDef(
                    id=str(_require(s, "id", f"scenes[{i}]")),
                    requirements=tuple(requirements),
                    next=str(s.get("next", END)),
                )
            )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}") from None

    stage = StageConfig(width=width, depth=depth, anchors=anchors, occluders=occluders, zones=zones, scenes=scenes)
    zone_ids = {z.id for z in zones}
    if len(zone_ids) != len(zones):
        raise ConfigError("zone ids must be unique")
    validate_scene_graph(scenes, zone_ids)
    return stage


def stage_to_dict(stage: StageConfig) -> dict:
    return {
        "stage": {"width_m": stage.width, "depth_m": stage.depth},
        "anchors": [
            {
                "id": a.id,
                "x_m": a.position.x,
                "y_m": a.position.y,
                "z_m": a.position.z,
                "max_range_m": a.max_range,
            }
            for a in stage.anchors
        ],
        "occluders": [
            {"min": [o.min.x, o.min.y, o.min.z], "max": [o.max.x, o.max.y, o.max.z]}
            for o in stage.occluders
        ],
        "zones": [
            {
                "id": z.id,
                "center_x_m": z.center.x,
                "center_y_m": z.center.y,
                "outer_half_m": z.outer_half,
                "exit_half_m": z.exit_half,
                "dwell_frames": z.dwell_frames,
            }
            for z in stage.zones
        ],
        "scenes": [
            {
                "id": s.id,
                "requirements": [
                    {"zone": r.zone_id, "tag": "any" if r.tag is None else r.tag}
                    for r in s.requirements
                ],
                "next": s.next,
            }
            for s in stage.scenes
        ],
    }


def zone_from_dict(z: dict) -> ZoneDef:
    try:
        return ZoneDef(
            id=str(_require(z, "id", "zone")),
            center=Vec3(float(_require(z, "center_x_m", "zone")), float(_require(z, "center_y_m", "zone")), 0.0),
            outer_half=float(z.get("outer_half_m", 0.325)),
            exit_half=float(z.get("exit_half_m", 0.375)),
            dwell_frames=int(z.get("dwell_frames", 100)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid zone: {e}") from None


def noise_from_dict(data: dict | None) -> NoiseModel:
    if not data:
        return NoiseModel()
    try:
        return NoiseModel(**{k: float(v) for k, v in data.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid noise section: {e}") from None


def solver_options_from_dict(data: dict | None) -> SolveOptions:
    if not data:
        return SolveOptions()
    try:
        kwargs = dict(data)
        if "mode" in kwargs and kwargs["mode"] not in ("planar", "full3d"):
            raise ConfigError(f"unknown solve mode {kwargs['mode']!r}")
        return SolveOptions(**kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid solver section: {e}") from None


def filter_params_from_dict(data: dict | None) -> FilterParams:
    if not data:
        return FilterParams()
    try:
        return FilterParams(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid filter section: {e}") from None


def script_from_dict(data: dict) -> MotionScript:
    waypoints: dict[int, list[tuple[float, Vec3]]] = {}
    try:
        for entry in _require(data, "tags", "script"):
            tag = int(_require(entry, "id", "script tag"))
            points = []
            for wp in _require(entry, "waypoints", f"script tag {tag}"):
                points.append(
                    (
                        float(_require(wp, "t", "waypoint")),
                        Vec3(float(_require(wp, "x", "waypoint")), float(_require(wp, "y", "waypoint")), float(wp.get("z", 0.2))),
                    )
                )
            waypoints[tag] = points
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid script value: {e}") from None
    if not waypoints:
        raise ConfigError("script defines no tags")
    return MotionScript(waypoints)


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None


def load_stage_config(path) -> StageConfig:
    return stage_from_dict(_load_json(path))


def load_config_sections(path) -> dict:
    """Raw config dict, for access to the optional noise/solver/filter sections."""
    return _load_json(path)


def load_motion_script(path) -> MotionScript:
    return script_from_dict(_load_json(path))
