"""Scene-progression engine driven by zone occupancy.

A scene advances when every one of its zone requirements is simultaneously
occupied by a matching tag. Requirements are conjunctive; transitions never
roll back, and several scenes may cascade within a single frame if each is
instantly satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import UnknownScene, UnknownZone

# Terminal pseudo-scene id.
END = "end"


@dataclass(frozen=True)
class Requirement:
    """One zone that must be occupied; ``tag`` of None accepts any tag."""

    zone_id: str
    tag: int | None = None


@dataclass(frozen=True)
class SceneDef:
    id: str
    requirements: tuple[Requirement, ...]
    next: str = END

    def __post_init__(self):
        if self.id == END:
            raise ValueError(f"scene id {END!r} is reserved")


@dataclass(frozen=True)
class SceneTransition:
    from_scene: str
    to_scene: str
    frame: int
    forced: bool = False


@dataclass(frozen=True)
class ShowState:
    current_scene: str
    occupancy: "dict[tuple[str, int], bool]" = field(default_factory=dict)
    history: tuple[SceneTransition, ...] = ()


def validate_scene_graph(scenes: Sequence[SceneDef], zone_ids: set[str]) -> None:
    """Reject unknown references and cycles in the scene graph."""
    by_id = {s.id: s for s in scenes}
    if len(by_id) != len(scenes):
        raise UnknownScene("duplicate scene ids in configuration")
    for scene in scenes:
        for req in scene.requirements:
            if req.zone_id not in zone_ids:
                raise UnknownZone(f"scene {scene.id!r} requires unknown zone {req.zone_id!r}")
        if scene.next != END and scene.next not in by_id:
            raise UnknownScene(f"scene {scene.id!r} advances to unknown scene {scene.next!r}")
    for start in by_id:
        seen = set()
        cursor = start
        while cursor != END:
            if cursor in seen:
                raise UnknownScene(f"scene graph has a cycle through {cursor!r}")
            seen.add(cursor)
            cursor = by_id[cursor].next


def _satisfied(scene: SceneDef, occupancy: dict) -> bool:
    for req in scene.requirements:
        hit = any(
            occupied and zone_id == req.zone_id and (req.tag is None or tag_id == req.tag)
            for (zone_id, tag_id), occupied in occupancy.items()
        )
        if not hit:
            return False
    return True


def show_step(
    state: ShowState,
    scenes: Sequence[SceneDef],
    events,
    frame: int,
    zone_ids: set[str] | None = None,
) -> tuple[ShowState, list[SceneTransition]]:
    """Apply this frame's zone events and advance through any scene whose
    requirements are now met (cascading within the frame).

    When ``zone_ids`` is given, events referencing zones outside it raise
    UnknownZone.
    """
    by_id = {s.id: s for s in scenes}
    occupancy = dict(state.occupancy)
    for ev in events:
        if ev.frame != frame:
            raise ValueError(f"event frame {ev.frame} does not match step frame {frame}")
        if zone_ids is not None and ev.zone_id not in zone_ids:
            raise UnknownZone(f"event references unknown zone {ev.zone_id!r}")
        occupancy[(ev.zone_id, ev.tag_id)] = ev.kind.value == "latched"

    transitions: list[SceneTransition] = []
    current = state.current_scene
    while current != END:
        if current not in by_id:
            raise UnknownScene(f"current scene {current!r} is not configured")
        scene = by_id[current]
        if not _satisfied(scene, occupancy):
            break
        transition = SceneTransition(current, scene.next, frame)
        transitions.append(transition)
        current = scene.next

    return (
        ShowState(
            current_scene=current,
            occupancy=occupancy,
            history=state.history + tuple(transitions),
        ),
        transitions,
    )


def force_scene(state: ShowState, scenes: Sequence[SceneDef], scene_id: str, frame: int) -> ShowState:
    """Operator override: jump to a scene, keeping occupancy intact."""
    if scene_id != END and scene_id not in {s.id for s in scenes}:
        raise UnknownScene(f"cannot force unknown scene {scene_id!r}")
    transition = SceneTransition(state.current_scene, scene_id, frame, forced=True)
    return replace(
        state,
        current_scene=scene_id,
        history=state.history + (transition,),
    )
