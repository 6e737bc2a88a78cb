"""Privileged oracle teacher: geodesic distance field plus local steering.

The teacher stands behind the same Policy interface as any learned student,
so episode and evaluation code never special-cases it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoPathError
from .geometry import normalize_angle
from .gridnav import (
    NAV_RESOLUTION,
    OccupancyGrid,
    dijkstra_distances,
    eroded as gridnav_eroded,
    free_space_grid,
    line_of_sight,
)
from .sensors import Observation, PRIVILEGED_LIDAR_RAYS
from .walkmap import WalkableMap
from .world import AGENT_RADIUS, Action, SPEED_MAX, SPEED_MIN, YAW_LIMIT

FIELD_MARGIN = 0.18        # extra obstacle inflation beyond the agent radius
CLEARANCE_THRESHOLD = 0.8  # frontal range below which the teacher backs up
CLEARANCE_RELEASE = 1.2    # hysteresis factor: back up until threshold * this
FRONTAL_HALF_ANGLE = math.radians(23.0)
CORRIDOR_HALF_WIDTH = 0.35  # lateral band that counts as "in the way"
TURN_AWAY = 0.35           # extra yaw away from the blocking side while reversing
LOOKAHEAD = 1.2            # meters of descent path the teacher steers toward


class Policy:
    """Minimal policy interface: reset per episode, act per step."""

    def reset(self, context) -> None:
        pass

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError


class ConstantPolicy(Policy):
    """Emits a fixed action; useful as an interface smoke test."""

    def __init__(self, speed: float = 0.0, yaw_delta: float = 0.0):
        self.action = Action(speed, yaw_delta)

    def act(self, obs: Observation) -> Action:
        return self.action


class ScriptedPolicy(Policy):
    """Cycles through a fixed list of actions, ignoring observations."""

    def __init__(self, actions):
        if not actions:
            raise ValueError("need at least one action")
        self.actions = [Action(a[0], a[1]) if not isinstance(a, Action) else a
                        for a in actions]
        self._i = 0

    def reset(self, context) -> None:
        self._i = 0

    def act(self, obs: Observation) -> Action:
        a = self.actions[self._i % len(self.actions)]
        self._i += 1
        return a


@dataclass
class DistanceField:
    """Geodesic meters-to-goal on a uniform grid; inf marks blocked cells."""

    grid: OccupancyGrid
    values: np.ndarray           # (ny, nx) meters
    goal: tuple[float, float]

    def value_at_cell(self, row: int, col: int) -> float:
        if not self.grid.in_bounds(row, col):
            return math.inf
        return float(self.values[row, col])

    def distance_at(self, x: float, y: float) -> float:
        return self.value_at_cell(*self.grid.cell_of(x, y))

    def descent_direction(self, x: float, y: float) -> float:
        """Heading of steepest descent at (x, y).

        Bilinear interpolation over the four surrounding cell centers; falls
        back to the best finite neighbor when blocked cells corrupt the
        stencil. Raises NoPathError when the agent's cell has no finite value
        anywhere nearby.
        """
        grid, vals = self.grid, self.values
        res = grid.resolution
        u = (x - grid.minx) / res - 0.5
        v = (y - grid.miny) / res - 0.5
        c0 = int(math.floor(u))
        r0 = int(math.floor(v))
        fu = u - c0
        fv = v - r0
        q = [self.value_at_cell(r0, c0), self.value_at_cell(r0, c0 + 1),
             self.value_at_cell(r0 + 1, c0), self.value_at_cell(r0 + 1, c0 + 1)]
        if all(math.isfinite(t) for t in q):
            v00, v10, v01, v11 = q
            gx = ((v10 - v00) * (1.0 - fv) + (v11 - v01) * fv) / res
            gy = ((v01 - v00) * (1.0 - fu) + (v11 - v10) * fu) / res
            if gx != 0.0 or gy != 0.0:
                return math.atan2(-gy, -gx)
        return self._best_neighbor_direction(x, y)

    def _best_neighbor_direction(self, x: float, y: float, rings: int = 2) -> float:
        row, col = self.grid.cell_of(x, y)
        best = math.inf
        best_dir = None
        for dr in range(-rings, rings + 1):
            for dc in range(-rings, rings + 1):
                val = self.value_at_cell(row + dr, col + dc)
                if val < best:
                    cx, cy = self.grid.center_of(row + dr, col + dc)
                    d = math.hypot(cx - x, cy - y)
                    if (dr, dc) != (0, 0) or d > 1e-9:
                        best = val
                        best_dir = math.atan2(cy - y, cx - x)
        if best_dir is None or not math.isfinite(best):
            raise NoPathError("no finite distance-field value near the agent")
        return best_dir

    def lookahead_point(self, x: float, y: float,
                        lookahead: float = LOOKAHEAD) -> tuple[float, float]:
        """Farthest visible point on the descent path within `lookahead` meters.

        Walks cell-to-cell along the steepest finite descent and keeps the
        last path point with free line of sight from (x, y), so steering at
        it never cuts through blocked cells. Reaching the goal cell snaps to
        the exact goal. Raises NoPathError when no finite cell is adjacent to
        the agent.
        """
        grid, vals = self.grid, self.values
        row, col = grid.cell_of(x, y)
        if not (grid.in_bounds(row, col) and math.isfinite(vals[row, col])):
            # nudge onto the best nearby cell first
            direction = self._best_neighbor_direction(x, y)
            step = grid.resolution
            return (x + step * math.cos(direction), y + step * math.sin(direction))
        ny, nx = vals.shape
        px, py = x, y
        travelled = 0.0
        cur = (row, col)
        target = None
        while travelled < lookahead:
            best_val = vals[cur]
            nxt = None
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = cur[0] + dr, cur[1] + dc
                    if 0 <= rr < ny and 0 <= cc < nx and vals[rr, cc] < best_val:
                        best_val = vals[rr, cc]
                        nxt = (rr, cc)
            if nxt is None:
                # local minimum: the goal cell itself
                if target is None or line_of_sight(grid, x, y, self.goal[0], self.goal[1]):
                    return self.goal
                return target
            cx, cy = grid.center_of(*nxt)
            if target is None or line_of_sight(grid, x, y, cx, cy):
                candidate = (cx, cy)
                if target is None or candidate != target:
                    target = candidate
            else:
                break  # path curls out of sight; steer at the last visible point
            travelled += math.hypot(cx - px, cy - py)
            px, py = cx, cy
            cur = nxt
        return target if target is not None else (px, py)


def build_distance_field(wmap: WalkableMap, obstacles, goal: tuple[float, float],
                         resolution: float = NAV_RESOLUTION,
                         agent_radius: float = AGENT_RADIUS,
                         margin: float = FIELD_MARGIN,
                         start=None) -> DistanceField:
    """Dijkstra from the goal over agent-inflated free cells.

    Prefers a grid with one extra cell of wall margin; if that margin would
    leave the start disconnected (narrow passages), falls back to the plain
    inflated grid.
    """
    if not wmap.is_walkable(goal[0], goal[1]):
        raise NoPathError(f"goal {goal} is not on walkable area")
    grid = free_space_grid(wmap, obstacles, resolution=resolution,
                           inflate=agent_radius + margin)
    plain = _field_on_grid(grid, goal)
    if plain is None:
        raise NoPathError(f"no free cell near goal {goal}")
    safe = _field_on_grid(gridnav_eroded(grid), goal)
    if safe is None or start is None:
        return safe or plain
    d_safe = _distance_near(safe, start)
    d_plain = _distance_near(plain, start)
    # take the wall-margin field only when it does not force a real detour
    if math.isfinite(d_safe) and (not math.isfinite(d_plain)
                                  or d_safe <= 1.15 * d_plain + 1.0):
        return safe
    return plain


def _distance_near(field: DistanceField, point, rings: int = 2) -> float:
    """Smallest start-to-goal estimate over cells within `rings` of the point.

    The exact start cell may sit inside the wall margin; the agent can step
    sideways onto the path, so judge connectivity on the neighborhood.
    """
    row, col = field.grid.cell_of(point[0], point[1])
    best = math.inf
    for dr in range(-rings, rings + 1):
        for dc in range(-rings, rings + 1):
            val = field.value_at_cell(row + dr, col + dc)
            if math.isfinite(val):
                cx, cy = field.grid.center_of(row + dr, col + dc)
                best = min(best, val + math.hypot(cx - point[0], cy - point[1]))
    return best


def _field_on_grid(grid: OccupancyGrid, goal) -> DistanceField | None:
    cell = grid.cell_of(goal[0], goal[1])
    if not (grid.in_bounds(*cell) and grid.free[cell]):
        cell = _nearest_free_cell(grid, cell)
        if cell is None:
            return None
    return DistanceField(grid=grid, values=dijkstra_distances(grid, cell), goal=goal)


def _nearest_free_cell(grid: OccupancyGrid, cell, max_rings: int = 6):
    row, col = cell
    for ring in range(1, max_rings + 1):
        best = None
        for dr in range(-ring, ring + 1):
            for dc in range(-ring, ring + 1):
                if max(abs(dr), abs(dc)) != ring:
                    continue
                rr, cc = row + dr, col + dc
                if grid.in_bounds(rr, cc) and grid.free[rr, cc]:
                    d = dr * dr + dc * dc
                    if best is None or d < best[0]:
                        best = (d, (rr, cc))
        if best is not None:
            return best[1]
    return None


def _frontal_rays(n_rays: int, half_angle: float):
    k = np.arange(n_rays)
    ang = 2.0 * math.pi * k / n_rays
    ang = np.where(ang > math.pi, ang - 2.0 * math.pi, ang)
    idx = np.nonzero(np.abs(ang) <= half_angle)[0]
    return idx, np.cos(ang[idx]), np.sin(ang[idx])


_FRONTAL64, _FRONTAL64_COS, _FRONTAL64_SIN = _frontal_rays(
    PRIVILEGED_LIDAR_RAYS, FRONTAL_HALF_ANGLE)


def _rear_rays(n_rays: int, half_angle: float):
    k = np.arange(n_rays)
    ang = 2.0 * math.pi * k / n_rays
    rel = np.abs(normalize_vec(ang - math.pi))
    idx = np.nonzero(rel <= half_angle)[0]
    back = ang[idx] - math.pi
    return idx, np.cos(back), np.sin(back)


def normalize_vec(a: np.ndarray) -> np.ndarray:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


_REAR64, _REAR64_COS, _REAR64_SIN = _rear_rays(PRIVILEGED_LIDAR_RAYS, FRONTAL_HALF_ANGLE)
REAR_MIN_CLEARANCE = 0.3  # backing room required before the reflex may reverse


def rear_clearance(lidar: np.ndarray) -> float:
    """Backward distance to the nearest hit in the reversing corridor."""
    r = lidar[_REAR64]
    back = r * _REAR64_COS
    lat = r * _REAR64_SIN
    in_band = np.abs(lat) < CORRIDOR_HALF_WIDTH
    if not in_band.any():
        return math.inf
    return float(back[in_band].min())


def frontal_clearance(lidar: np.ndarray) -> tuple[float, float]:
    """(forward distance, lateral offset) of the nearest hit in the travel corridor.

    Hits whose lateral offset exceeds the corridor half-width pass by and do
    not count. Returns (inf, 0.0) when the corridor is clear.
    """
    r = lidar[_FRONTAL64]
    fwd = r * _FRONTAL64_COS
    lat = r * _FRONTAL64_SIN
    in_band = np.abs(lat) < CORRIDOR_HALF_WIDTH
    if not in_band.any():
        return math.inf, 0.0
    i = int(np.argmin(np.where(in_band, fwd, np.inf)))
    return float(fwd[i]), float(lat[i])


def corridor_clearance(lidar: np.ndarray, rel_bearing: float) -> float:
    """Nearest hit depth inside a footprint-wide corridor toward a bearing."""
    n = len(lidar)
    ang = 2.0 * math.pi * np.arange(n) / n - rel_bearing
    ahead = np.cos(ang)
    keep = ahead > 0.0
    fwd = lidar * ahead
    lat = lidar * np.sin(ang)
    in_band = keep & (np.abs(lat) < CORRIDOR_HALF_WIDTH)
    if not in_band.any():
        return math.inf
    return float(fwd[in_band].min())


def _teacher_step(field: DistanceField, obs: Observation, pose,
                  engaged: bool = False, wmap: WalkableMap | None = None) -> tuple[Action, bool]:
    """Steering core; returns the action and whether the back-up reflex is on.

    Steers toward a line-of-sight lookahead point on the descent path. Speed
    is the maximum scaled by the cosine of the residual misalignment after
    this step's turn, floored at zero. Frontal clearance below the threshold
    switches to reversing while turning away from the blocking side, unless
    the goal itself is closer than the obstruction; hysteresis keeps the
    reflex on until the corridor clears with margin. With a map handle, steps
    whose landing point would leave the walkable area are vetoed to a pivot.
    """
    x, y, heading = pose
    gx, gy = field.goal
    goal_dist = math.hypot(gx - x, gy - y)

    homing = False
    if goal_dist <= LOOKAHEAD and obs.privileged is not None:
        bearing = normalize_angle(math.atan2(gy - y, gx - x) - heading)
        if corridor_clearance(obs.privileged.lidar, bearing) > goal_dist:
            homing = True  # the corridor to the goal is empty: go straight in
    if homing:
        tx, ty = gx, gy
    else:
        tx, ty = field.lookahead_point(x, y, lookahead=min(LOOKAHEAD, max(goal_dist, 0.3)))
        if math.hypot(tx - x, ty - y) < 1e-9:
            tx, ty = gx, gy
    if math.hypot(tx - x, ty - y) < 1e-9:
        return Action(0.0, 0.0), False  # sitting on the goal
    desired = math.atan2(ty - y, tx - x)

    misalign = normalize_angle(desired - heading)
    yaw = min(max(misalign, -YAW_LIMIT), YAW_LIMIT)
    residual = misalign - yaw
    speed = SPEED_MAX * max(math.cos(residual), 0.0)
    if goal_dist < 0.6:
        speed = min(speed, max(0.08, 0.6 * goal_dist))  # tighter final turns

    reflex = False
    if obs.privileged is not None and len(obs.privileged.lidar) == PRIVILEGED_LIDAR_RAYS:
        clearance, hit_lat = frontal_clearance(obs.privileged.lidar)
        threshold = CLEARANCE_THRESHOLD * (CLEARANCE_RELEASE if engaged else 1.0)
        if clearance < threshold and clearance < goal_dist:
            reflex = True
            speed = SPEED_MIN
            if rear_clearance(obs.privileged.lidar) < REAR_MIN_CLEARANCE:
                speed = 0.0  # no room behind: pivot in place instead
            if abs(misalign) <= TURN_AWAY:
                # path agrees with heading, so the blocker is off-plan
                # (pedestrian, corner graze): bias the turn away from it
                away = TURN_AWAY if hit_lat <= 0.0 else -TURN_AWAY
                yaw = min(max(misalign + away, -YAW_LIMIT), YAW_LIMIT)

    if wmap is not None and speed != 0.0:
        nh = normalize_angle(heading + yaw)
        if not wmap.is_walkable(x + speed * math.cos(nh), y + speed * math.sin(nh)):
            speed = 0.0  # landing point would leave the sidewalk: pivot instead
    if speed == 0.0 and yaw == 0.0 and goal_dist > 1e-9:
        # no-op actions deadlock; rotate toward the path until something clears
        yaw = YAW_LIMIT if misalign >= 0.0 else -YAW_LIMIT
    return Action(speed, yaw), reflex


def teacher_act(field: DistanceField, obs: Observation, pose) -> Action:
    """Single stateless steering step (no reflex hysteresis)."""
    return _teacher_step(field, obs, pose, engaged=False)[0]


class OracleTeacher(Policy):
    """Geometric stand-in for a learned privileged teacher."""

    def __init__(self, agent_radius: float = AGENT_RADIUS, margin: float = FIELD_MARGIN):
        self.agent_radius = agent_radius
        self.margin = margin
        self.field: DistanceField | None = None
        self._map: WalkableMap | None = None
        self._engaged = False

    def reset(self, context) -> None:
        self._engaged = False
        self._map = context.map
        self.field = build_distance_field(
            context.map, context.obstacles, context.goal,
            agent_radius=self.agent_radius, margin=self.margin,
            start=(context.start[0], context.start[1]),
        )

    def act(self, obs: Observation) -> Action:
        if self.field is None:
            raise RuntimeError("reset() must run before act()")
        if obs.privileged is None:
            raise ValueError("oracle teacher needs the privileged observation")
        action, self._engaged = _teacher_step(self.field, obs, obs.privileged.pose,
                                              engaged=self._engaged, wmap=self._map)
        return action
