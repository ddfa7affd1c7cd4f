"""Desk-scale 2D continuous navigation surrogate.

Exercises the discrete action set, detection-triggered interaction, and
the distance/step success rule without a 3D simulator. Worlds are flat
rectangles with axis-aligned rectangular obstacles; detections carry
pre-assigned image refs so the controller always sees a real image.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .core import NavEpisodeSpec, NavResult

FORWARD_STEP = 0.25  # metres
TURN_STEP = 15.0  # degrees


class Action(Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"
    ASK = "ask"


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class WorldObject:
    position: tuple[float, float]
    category: str
    instance_id: int
    image_ref: str
    is_target: bool = False


@dataclass(frozen=True)
class World:
    bounds: Rect
    obstacles: tuple[Rect, ...]
    objects: tuple[WorldObject, ...]
    detector_radius: float = 2.0
    detector_fov: float = 90.0

    def __post_init__(self):
        targets = [o for o in self.objects if o.is_target]
        if len(targets) != 1:
            raise ValueError(f"world must contain exactly one target, got {len(targets)}")

    @property
    def target(self) -> WorldObject:
        return next(o for o in self.objects if o.is_target)

    def free(self, x: float, y: float) -> bool:
        if not self.bounds.contains(x, y):
            return False
        return not any(ob.contains(x, y) for ob in self.obstacles)

    @staticmethod
    def from_dict(d: dict) -> "World":
        return World(
            bounds=Rect(*d["bounds"]),
            obstacles=tuple(Rect(*r) for r in d.get("obstacles", [])),
            objects=tuple(
                WorldObject(
                    position=tuple(o["position"]),
                    category=o["category"],
                    instance_id=o["instance_id"],
                    image_ref=o["image_ref"],
                    is_target=o.get("is_target", False),
                )
                for o in d["objects"]
            ),
            detector_radius=d.get("detector_radius", 2.0),
            detector_fov=d.get("detector_fov", 90.0),
        )

    @staticmethod
    def load(path) -> "World":
        with open(path, encoding="utf-8") as fh:
            return World.from_dict(json.load(fh))


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float  # degrees, 0 along +x, counter-clockwise positive
    steps: int = 0
    path_length: float = 0.0
    asks: int = 0

    def __post_init__(self):
        object.__setattr__(self, "heading", self.heading % 360.0)

    def distance_to(self, point: tuple[float, float]) -> float:
        return math.hypot(self.x - point[0], self.y - point[1])


def apply_action(s: AgentState, a: Action, w: World) -> AgentState:
    """Advance one step. A blocked forward move leaves the pose unchanged
    but still counts as a step (clamp-on-contact, zero sliding)."""
    if a is Action.FORWARD:
        rad = math.radians(s.heading)
        nx = s.x + FORWARD_STEP * math.cos(rad)
        ny = s.y + FORWARD_STEP * math.sin(rad)
        if w.free(nx, ny):
            moved = math.hypot(nx - s.x, ny - s.y)
            return replace(s, x=nx, y=ny, steps=s.steps + 1, path_length=s.path_length + moved)
        return replace(s, steps=s.steps + 1)
    if a is Action.TURN_LEFT:
        return replace(s, heading=(s.heading + TURN_STEP) % 360.0, steps=s.steps + 1)
    if a is Action.TURN_RIGHT:
        return replace(s, heading=(s.heading - TURN_STEP) % 360.0, steps=s.steps + 1)
    if a in (Action.STOP, Action.ASK):
        return replace(s, steps=s.steps + 1)
    raise ValueError(f"unknown action {a!r}")


def _angle_diff(a: float, b: float) -> float:
    """Signed smallest difference a-b in degrees, in (-180, 180]."""
    d = (a - b) % 360.0
    if d > 180.0:
        d -= 360.0
    return d


def detect(
    s: AgentState,
    w: World,
    category: Optional[str] = None,
    ignored: frozenset = frozenset(),
) -> Optional[WorldObject]:
    """Nearest object of the target's category inside the detector cone.
    Equidistant candidates tie-break on the smaller instance id."""
    category = category if category is not None else w.target.category
    best: Optional[WorldObject] = None
    best_key: Optional[tuple[float, int]] = None
    for obj in w.objects:
        if obj.category != category or obj.instance_id in ignored:
            continue
        dx, dy = obj.position[0] - s.x, obj.position[1] - s.y
        dist = math.hypot(dx, dy)
        if dist > w.detector_radius:
            continue
        bearing = math.degrees(math.atan2(dy, dx))
        if abs(_angle_diff(bearing, s.heading)) > w.detector_fov / 2.0:
            continue
        key = (dist, obj.instance_id)
        if best_key is None or key < best_key:
            best, best_key = obj, key
    return best


class Policy:
    """Exploration policy: proposes one action per step, or None when exhausted."""

    def propose(self, s: AgentState, w: World) -> Optional[Action]:
        raise NotImplementedError


def steer_towards(s: AgentState, point: tuple[float, float]) -> Action:
    """Turn in the shorter direction until roughly aligned, then go forward."""
    bearing = math.degrees(math.atan2(point[1] - s.y, point[0] - s.x))
    err = _angle_diff(bearing, s.heading)
    if err > TURN_STEP / 2.0:
        return Action.TURN_LEFT
    if err < -TURN_STEP / 2.0:
        return Action.TURN_RIGHT
    return Action.FORWARD


class WaypointPolicy(Policy):
    def __init__(self, waypoints: Sequence[tuple[float, float]], reach: float = 0.2):
        self._waypoints = [tuple(p) for p in waypoints]
        self._reach = reach

    def propose(self, s, w):
        while self._waypoints and s.distance_to(self._waypoints[0]) <= self._reach:
            self._waypoints.pop(0)
        if not self._waypoints:
            return None
        return steer_towards(s, self._waypoints[0])


class RandomWalkPolicy(Policy):
    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def propose(self, s, w):
        return self._rng.choices(
            [Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT], weights=[6, 1, 1]
        )[0]


class GreedyObjectPolicy(Policy):
    """Frontier stub: heads for the nearest not-yet-visited object of the
    target's category."""

    def __init__(self):
        self._visited: set[int] = set()

    def mark_visited(self, instance_id: int) -> None:
        self._visited.add(instance_id)

    def propose(self, s, w):
        candidates = [
            o for o in w.objects
            if o.category == w.target.category and o.instance_id not in self._visited
        ]
        if not candidates:
            return None
        nearest = min(candidates, key=lambda o: (s.distance_to(o.position), o.instance_id))
        return steer_towards(s, nearest.position)


# resolver(description, image_ref, context) -> object with .final, .ctx_out, .asks
Resolver = Callable[[str, str, tuple], object]


def run_nav_episode(
    w: World,
    spec: NavEpisodeSpec,
    policy: Policy,
    resolver: Resolver,
) -> NavResult:
    """Explore until a detection is accepted, then navigate to it and stop.

    Success requires a stop within the success radius of the target inside
    the step budget. Discarded instances stay suppressed for the episode.
    """
    state = AgentState(*spec.start_pose)
    ignored: set[int] = set()
    ctx: tuple = ()
    accepted: Optional[WorldObject] = None
    stopped = False

    while state.steps < spec.max_steps:
        det = detect(state, w, ignored=frozenset(ignored)) if accepted is None else None
        if det is not None:
            resolution = resolver(spec.description, det.image_ref, ctx)
            ctx = resolution.ctx_out
            state = replace(state, asks=state.asks + resolution.asks)
            if resolution.final == "accept":
                accepted = det
            else:
                ignored.add(det.instance_id)
                if isinstance(policy, GreedyObjectPolicy):
                    policy.mark_visited(det.instance_id)
                continue
        if accepted is not None:
            if state.distance_to(accepted.position) <= spec.success_radius:
                state = apply_action(state, Action.STOP, w)
                stopped = True
                break
            action = steer_towards(state, accepted.position)
        else:
            action = policy.propose(state, w)
            if action is None:
                break  # policy exhausted
        state = apply_action(state, action, w)

    success = (
        stopped
        and state.steps <= spec.max_steps
        and state.distance_to(spec.target_position) <= spec.success_radius
    )
    return NavResult(
        success=success,
        path_length=state.path_length,
        steps_used=state.steps,
        questions_asked=state.asks,
    )


def append_nav_result(path, result: NavResult) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")
