"""Per-episode mutable world state: agent pose, obstacles, kinematic stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .geometry import normalize_angle, point_oriented_rect_distance
from .walkmap import WalkableMap

SPEED_MIN = -0.10   # meters per step, backward
SPEED_MAX = 0.20    # meters per step, forward
YAW_LIMIT = 0.9425  # radians per step, ~54 degrees

AGENT_RADIUS = 0.35  # default footprint, roughly half a quadruped body length

OBSTACLE_SIZE_RANGE = (0.15, 0.5)   # cylinder radius / cuboid half-extent, meters
START_CLEARANCE = 1.5               # obstacle-free disc kept around episode start

PEDESTRIAN_SPEED = 0.12       # meters per step
PEDESTRIAN_RESEED_PERIOD = 25  # steps between heading re-draws


@dataclass
class Action:
    """One control step; components clamp to their bounds on construction."""

    speed: float
    yaw_delta: float

    def __post_init__(self):
        self.speed = min(max(float(self.speed), SPEED_MIN), SPEED_MAX)
        self.yaw_delta = min(max(float(self.yaw_delta), -YAW_LIMIT), YAW_LIMIT)


@dataclass
class AgentState:
    x: float
    y: float
    heading: float
    footprint_radius: float = AGENT_RADIUS

    def __post_init__(self):
        self.heading = normalize_angle(self.heading)
        if self.footprint_radius <= 0.0:
            raise ValueError("footprint_radius must be positive")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class Obstacle:
    """Cylinder or cuboid footprint, optionally drifting like a pedestrian."""

    kind: str  # "cylinder" | "cuboid"
    x: float
    y: float
    radius: float = 0.0          # cylinder
    half_w: float = 0.0          # cuboid
    half_h: float = 0.0
    yaw: float = 0.0
    speed: float = 0.0           # > 0 makes it a pedestrian
    heading: float = 0.0
    reseed_period: int = 0

    @property
    def is_pedestrian(self) -> bool:
        return self.speed > 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "x": self.x, "y": self.y, "radius": self.radius,
            "half_w": self.half_w, "half_h": self.half_h, "yaw": self.yaw,
            "speed": self.speed, "heading": self.heading,
            "reseed_period": self.reseed_period,
        }

    def contains(self, px: float, py: float) -> bool:
        if self.kind == "cylinder":
            dx, dy = px - self.x, py - self.y
            return dx * dx + dy * dy <= self.radius * self.radius
        return point_oriented_rect_distance(px, py, self.x, self.y,
                                            self.half_w, self.half_h, self.yaw) == 0.0

    def distance_to(self, px: float, py: float) -> float:
        """Distance from a point to the obstacle boundary (0 inside)."""
        if self.kind == "cylinder":
            return max(0.0, math.hypot(px - self.x, py - self.y) - self.radius)
        return point_oriented_rect_distance(px, py, self.x, self.y,
                                            self.half_w, self.half_h, self.yaw)


class CollisionReport(NamedTuple):
    hit: bool
    obstacle_id: Optional[int]


@dataclass
class WorldState:
    agent: AgentState
    obstacles: list[Obstacle]
    map: WalkableMap
    rng: np.random.Generator
    step_count: int = 0
    _obstacle_cache: dict = field(default_factory=dict, repr=False)

    def rng_state(self) -> dict:
        """Serializable snapshot of the generator state."""
        return self.rng.bit_generator.state

    def invalidate_obstacle_cache(self):
        self._obstacle_cache.clear()

    def obstacle_arrays(self):
        """Cached primitive arrays for vectorized sensing.

        Returns (circle centers+radii (C,3), rect segment rows (S,4)).
        Pedestrian motion invalidates the cache each step.
        """
        cached = self._obstacle_cache.get("arrays")
        if cached is not None:
            return cached
        circles = []
        rect_segments = []
        for ob in self.obstacles:
            if ob.kind == "cylinder":
                circles.append((ob.x, ob.y, ob.radius))
            else:
                corners = _rect_corners(ob)
                nxt = np.roll(corners, -1, axis=0)
                rect_segments.append(np.hstack([corners, nxt]))
        circ = np.array(circles) if circles else np.zeros((0, 3))
        segs = np.vstack(rect_segments) if rect_segments else np.zeros((0, 4))
        self._obstacle_cache["arrays"] = (circ, segs)
        return circ, segs

    def obstacle_bounds(self) -> np.ndarray:
        """Cached (x, y, bounding radius) per obstacle for broad-phase tests."""
        cached = self._obstacle_cache.get("bounds")
        if cached is not None:
            return cached
        rows = []
        for ob in self.obstacles:
            reach = ob.radius if ob.kind == "cylinder" else math.hypot(ob.half_w, ob.half_h)
            rows.append((ob.x, ob.y, reach))
        bounds = np.array(rows) if rows else np.zeros((0, 3))
        self._obstacle_cache["bounds"] = bounds
        return bounds


def _rect_corners(ob: Obstacle) -> np.ndarray:
    c, s = math.cos(ob.yaw), math.sin(ob.yaw)
    local = np.array([[-ob.half_w, -ob.half_h], [ob.half_w, -ob.half_h],
                      [ob.half_w, ob.half_h], [-ob.half_w, ob.half_h]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([ob.x, ob.y])


def populate_obstacles(wmap: WalkableMap, density: float, rng: np.random.Generator,
                       pedestrian_fraction: float = 0.0,
                       keep_clear=()) -> list[Obstacle]:
    """Scatter obstacles on walkable area at `density` per 100 m^2.

    Shapes alternate cylinder/cuboid. `keep_clear` is a sequence of (x, y)
    points around which a clearance disc stays empty.
    """
    if density < 0.0:
        raise ValueError("density must be >= 0")
    count = round(wmap.walkable_area() * density / 100.0)
    if count <= 0:
        return []
    obstacles: list[Obstacle] = []
    attempts = 0
    max_attempts = 200 * count
    while len(obstacles) < count and attempts < max_attempts:
        attempts += 1
        x, y = wmap.sample_walkable_point(rng)
        if any(math.hypot(x - cx, y - cy) < START_CLEARANCE for cx, cy in keep_clear):
            continue
        idx = len(obstacles)
        size = float(rng.uniform(*OBSTACLE_SIZE_RANGE))
        if idx % 2 == 0:
            ob = Obstacle(kind="cylinder", x=x, y=y, radius=size)
        else:
            size2 = float(rng.uniform(*OBSTACLE_SIZE_RANGE))
            yaw = float(rng.uniform(-math.pi, math.pi))
            ob = Obstacle(kind="cuboid", x=x, y=y, half_w=size, half_h=size2, yaw=yaw)
        if pedestrian_fraction > 0.0 and rng.uniform() < pedestrian_fraction:
            ob.speed = PEDESTRIAN_SPEED
            ob.heading = float(rng.uniform(-math.pi, math.pi))
            ob.reseed_period = PEDESTRIAN_RESEED_PERIOD
        obstacles.append(ob)
    return obstacles


def step_dynamics(state: WorldState, action: Action) -> WorldState:
    """Advance agent and pedestrians one step in place; rotate then translate."""
    agent = state.agent
    agent.heading = normalize_angle(agent.heading + action.yaw_delta)
    agent.x += action.speed * math.cos(agent.heading)
    agent.y += action.speed * math.sin(agent.heading)

    moved = False
    for ob in state.obstacles:
        if not ob.is_pedestrian:
            continue
        if ob.reseed_period > 0 and state.step_count % ob.reseed_period == 0:
            ob.heading = _walkable_heading(state, ob)
        nx = ob.x + ob.speed * math.cos(ob.heading)
        ny = ob.y + ob.speed * math.sin(ob.heading)
        if state.map.is_walkable(nx, ny):
            ob.x, ob.y = nx, ny
        moved = True
    if moved:
        state.invalidate_obstacle_cache()
    state.step_count += 1
    return state


def _walkable_heading(state: WorldState, ob: Obstacle, lookahead: float = 1.0,
                      tries: int = 8) -> float:
    """Random heading whose lookahead point stays walkable, if one is found."""
    heading = ob.heading
    for _ in range(tries):
        heading = float(state.rng.uniform(-math.pi, math.pi))
        if state.map.is_walkable(ob.x + lookahead * math.cos(heading),
                                 ob.y + lookahead * math.sin(heading)):
            break
    return heading


def collision_check(state: WorldState) -> CollisionReport:
    """Exact agent-disc vs obstacle-footprint intersection test."""
    agent = state.agent
    r = agent.footprint_radius
    bounds = state.obstacle_bounds()
    if len(bounds):
        # cheap reject on bounding discs before the exact per-shape test
        dx = bounds[:, 0] - agent.x
        dy = bounds[:, 1] - agent.y
        candidates = np.nonzero(dx * dx + dy * dy < (bounds[:, 2] + r) ** 2)[0]
    else:
        candidates = ()
    for idx in candidates:
        ob = state.obstacles[idx]
        if ob.distance_to(agent.x, agent.y) < r:
            return CollisionReport(True, int(idx))
    return CollisionReport(False, None)


def on_sidewalk(state: WorldState) -> bool:
    """True iff the agent center is inside the walkable area."""
    return state.map.is_walkable(state.agent.x, state.agent.y)
