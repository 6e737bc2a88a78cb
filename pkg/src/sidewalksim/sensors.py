"""Observation rendering: BEV occupancy stack, simulated LiDAR, goal polar.

All renderers are pure functions of (world, parameters). The BEV and the
point-classification helpers share arithmetic with the scalar map queries so
that vectorized output matches per-point brute force exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import geometry
from .world import WorldState, AgentState

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pure-numpy fallback keeps everything functional
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap

BEV_SIZE = 128
BEV_EXTENT = 18.0                      # meters covered, agent-centered
BEV_RESOLUTION = BEV_EXTENT / BEV_SIZE  # 0.140625 m per pixel
BEV_STACK = 4                          # current frame + three previous

PRIVILEGED_LIDAR_RAYS = 64
PRIVILEGED_LIDAR_MAX_RANGE = 9.0       # keeps rays informative inside the BEV square
REALISTIC_LIDAR_RAYS = 272
REALISTIC_LIDAR_MAX_RANGE = 6.0

GPS_SIGMA_POS = 0.5      # meters, isotropic noise on the localized position
GPS_LATENCY_STEPS = 3

# body-frame pixel-center offsets: forward along rows (up), rightward along cols
_PIX = np.arange(BEV_SIZE, dtype=float)
_FWD = ((BEV_SIZE / 2.0) - _PIX)[:, None] * BEV_RESOLUTION * np.ones((1, BEV_SIZE))
_RIGHT = (_PIX - (BEV_SIZE / 2.0))[None, :] * BEV_RESOLUTION * np.ones((BEV_SIZE, 1))


class GoalPolar(NamedTuple):
    distance: float
    bearing: float


@dataclass
class PrivilegedObs:
    bev: Optional[np.ndarray]   # (4, 128, 128) uint8, channel 0 = current
    lidar: np.ndarray           # (64,) ranges
    goal: GoalPolar             # exact
    pose: tuple[float, float, float]  # ground-truth (x, y, heading)


@dataclass
class RealisticObs:
    lidar: np.ndarray           # (272,) ranges capped at 6 m
    goal: GoalPolar             # GPS-corrupted


@dataclass
class Observation:
    privileged: Optional[PrivilegedObs] = None
    realistic: Optional[RealisticObs] = None


def bev_pixel_world_coords(agent: AgentState):
    """World coordinates of all pixel centers, heading-up, agent at (64, 64)."""
    c, s = math.cos(agent.heading), math.sin(agent.heading)
    wx = agent.x + _FWD * c + _RIGHT * s
    wy = agent.y + _FWD * s - _RIGHT * c
    return wx, wy


def render_bev_frame(world: WorldState) -> np.ndarray:
    """Current-step binary occupancy frame, (128, 128) uint8."""
    wx, wy = bev_pixel_world_coords(world.agent)
    flat_x, flat_y = wx.ravel(), wy.ravel()
    good = world.map.contains_points(flat_x, flat_y)

    minx, maxx = float(flat_x.min()), float(flat_x.max())
    miny, maxy = float(flat_y.min()), float(flat_y.max())
    for ob in world.obstacles:
        if ob.kind == "cylinder":
            reach = ob.radius
        else:
            reach = math.hypot(ob.half_w, ob.half_h)
        if (ob.x + reach < minx or ob.x - reach > maxx
                or ob.y + reach < miny or ob.y - reach > maxy):
            continue
        # restrict the membership test to pixels inside the obstacle's bbox
        box = ((flat_x >= ob.x - reach) & (flat_x <= ob.x + reach)
               & (flat_y >= ob.y - reach) & (flat_y <= ob.y + reach) & good)
        if not box.any():
            continue
        dx = flat_x[box] - ob.x
        dy = flat_y[box] - ob.y
        if ob.kind == "cylinder":
            inside = dx * dx + dy * dy <= ob.radius * ob.radius
        else:
            oc, osn = math.cos(ob.yaw), math.sin(ob.yaw)
            lx = dx * oc + dy * osn
            ly = -dx * osn + dy * oc
            inside = (np.abs(lx) <= ob.half_w) & (np.abs(ly) <= ob.half_h)
        hit = np.zeros_like(good)
        hit[box] = inside
        good &= ~hit
    return good.reshape(BEV_SIZE, BEV_SIZE).astype(np.uint8)


def render_bev(world: WorldState, history=None) -> np.ndarray:
    """Stacked BEV (4, 128, 128): current frame plus up to three previous.

    `history` holds earlier frames, most recent first; missing history
    duplicates the current frame (episode start).
    """
    current = render_bev_frame(world)
    frames = [current]
    past = list(history) if history is not None else []
    for i in range(BEV_STACK - 1):
        frames.append(past[i] if i < len(past) else current)
    return np.stack(frames)


class BevHistory:
    """Rolling store of previous BEV frames, owned by one episode."""

    def __init__(self):
        self._frames = deque(maxlen=BEV_STACK - 1)

    def push(self, frame: np.ndarray):
        self._frames.appendleft(frame)

    def frames(self):
        return list(self._frames)

    def clear(self):
        self._frames.clear()


_RAY_UNIT_CACHE: dict = {}


def _ray_units(n_rays: int):
    cached = _RAY_UNIT_CACHE.get(n_rays)
    if cached is None:
        base = 2.0 * math.pi * np.arange(n_rays) / n_rays
        cached = (np.cos(base), np.sin(base))
        _RAY_UNIT_CACHE[n_rays] = cached
    return cached


@njit(cache=True)
def _raycast_loop(ox, oy, dir_x, dir_y, max_range, circles, rect_segs,
                  edges, edge_poly, n_poly):  # pragma: no cover - compiled
    n = dir_x.size
    n_edges = edges.shape[0]
    out = np.empty(n)
    ts = np.empty(n_edges + 1)
    parity = np.zeros(n_poly, dtype=np.int64)
    for k in range(n):
        dx = dir_x[k]
        dy = dir_y[k]
        t_cap = max_range
        for i in range(circles.shape[0]):
            fx = ox - circles[i, 0]
            fy = oy - circles[i, 1]
            b = fx * dx + fy * dy
            c = fx * fx + fy * fy - circles[i, 2] * circles[i, 2]
            if c <= 0.0:
                t_cap = 0.0
                continue
            disc = b * b - c
            if disc < 0.0:
                continue
            t = -b - math.sqrt(disc)
            if 0.0 <= t < t_cap:
                t_cap = t
        for i in range(rect_segs.shape[0]):
            ex = rect_segs[i, 2] - rect_segs[i, 0]
            ey = rect_segs[i, 3] - rect_segs[i, 1]
            fx = rect_segs[i, 0] - ox
            fy = rect_segs[i, 1] - oy
            denom = dx * ey - dy * ex
            if denom == 0.0:
                continue
            t = (fx * ey - fy * ex) / denom
            s = (fx * dy - fy * dx) / denom
            if 0.0 <= s <= 1.0 and 0.0 <= t < t_cap:
                t_cap = t
        # collect walkable-boundary crossings within the cap
        m = 0
        for i in range(n_edges):
            ex = edges[i, 2] - edges[i, 0]
            ey = edges[i, 3] - edges[i, 1]
            fx = edges[i, 0] - ox
            fy = edges[i, 1] - oy
            denom = dx * ey - dy * ex
            if denom == 0.0:
                continue
            t = (fx * ey - fy * ex) / denom
            s = (fx * dy - fy * dx) / denom
            if 0.0 <= s <= 1.0 and 0.0 <= t <= t_cap:
                ts[m] = t
                m += 1
        # insertion sort: crossing counts per ray are tiny
        for i in range(1, m):
            key = ts[i]
            j = i - 1
            while j >= 0 and ts[j] > key:
                ts[j + 1] = ts[j]
                j -= 1
            ts[j + 1] = key
        ts[m] = t_cap
        # probe each interval midpoint for union membership
        result = t_cap
        left = 0.0
        for j in range(m + 1):
            mid = (left + ts[j]) * 0.5
            px = ox + mid * dx
            py = oy + mid * dy
            for p in range(n_poly):
                parity[p] = 0
            for i in range(n_edges):
                ay = edges[i, 1]
                by = edges[i, 3]
                if (ay <= py) != (by <= py):
                    t = (py - ay) / (by - ay)
                    if px < edges[i, 0] + t * (edges[i, 2] - edges[i, 0]):
                        parity[edge_poly[i]] ^= 1
            inside = False
            for p in range(n_poly):
                if parity[p] == 1:
                    inside = True
                    break
            if not inside:
                result = left if left < t_cap else t_cap
                break
            left = ts[j]
        out[k] = result
    return out


def _raycast_numpy(world, ox, oy, dirs, n_rays, max_range):
    """Vectorized reference implementation of the union-boundary raycast."""
    circles, rect_segs = world.obstacle_arrays()
    edges, edge_onehot, _ = world.map.edges_near(ox, oy, max_range)
    n_rect = len(rect_segs)

    # one segment battery covers obstacle rectangles and map edges together
    all_segs = np.vstack([rect_segs, edges]) if n_rect else edges
    seg_t = geometry.rays_segments_t(ox, oy, dirs, all_segs)

    t_cap = np.full(n_rays, float(max_range))
    if n_rect:
        t_cap = np.minimum(t_cap, seg_t[:, :n_rect].min(axis=1))
    if len(circles):
        t_c = geometry.ray_circle_t(
            ox, oy, dirs[:, 0:1], dirs[:, 1:2],
            circles[None, :, 0], circles[None, :, 1], circles[None, :, 2],
        )
        t_cap = np.minimum(t_cap, t_c.min(axis=1))

    crossings = seg_t[:, n_rect:]
    crossings = np.where(crossings <= t_cap[:, None], crossings, np.inf)
    order = np.sort(crossings, axis=1)
    finite = np.isfinite(order)
    n_cross = int(finite.sum(axis=1).max(initial=0)) if finite.size else 0
    order = np.minimum(order[:, :n_cross], t_cap[:, None])

    # probe the midpoint of every inter-crossing interval: [0, t1, ..., tC, cap]
    padded = np.empty((n_rays, n_cross + 2))
    padded[:, 0] = 0.0
    padded[:, 1:n_cross + 1] = order
    padded[:, n_cross + 1] = t_cap
    mids = (padded[:, :-1] + padded[:, 1:]) * 0.5
    px = ox + mids * dirs[:, 0:1]
    py = oy + mids * dirs[:, 1:2]
    blocked = ~world.map.contains_points_bulk(
        px.ravel(), py.ravel(), edges, edge_onehot).reshape(mids.shape)
    hit_any = blocked.any(axis=1)
    first = np.argmax(blocked, axis=1)
    t_boundary = np.where(hit_any, padded[np.arange(n_rays), first], np.inf)
    return np.minimum(t_cap, t_boundary)


def raycast(world: WorldState, n_rays: int, max_range: float,
            use_compiled: bool = True) -> np.ndarray:
    """Ranges to the nearest obstacle boundary or walkable-area boundary.

    Ray k leaves at heading + 2*pi*k/n_rays. Obstacle surfaces use analytic
    ray-circle / ray-segment intersections; the walkable-union boundary is the
    first inter-crossing interval whose midpoint is not walkable. Ranges clamp
    to max_range. An origin already inside an obstacle or off the walkable
    area reads 0 on every ray.

    The compiled kernel and the numpy path implement the same algorithm; the
    tests cross-check them against each other and a marching oracle.
    """
    if n_rays < 1 or max_range <= 0.0:
        raise ValueError("n_rays >= 1 and max_range > 0 required")
    agent = world.agent
    ox, oy = agent.x, agent.y
    cb, sb = _ray_units(n_rays)
    ch, sh = math.cos(agent.heading), math.sin(agent.heading)
    dirs = np.empty((n_rays, 2))
    dirs[:, 0] = ch * cb - sh * sb  # cos(heading + base)
    dirs[:, 1] = sh * cb + ch * sb  # sin(heading + base)

    bounds = world.obstacle_bounds()
    if len(bounds):
        dx = bounds[:, 0] - ox
        dy = bounds[:, 1] - oy
        if bool((dx * dx + dy * dy <= bounds[:, 2] ** 2).any()):
            for ob in world.obstacles:
                if ob.contains(ox, oy):
                    return np.zeros(n_rays)

    if _HAVE_NUMBA and use_compiled:
        circles, rect_segs = world.obstacle_arrays()
        edges, _, edge_poly = world.map.edges_near(ox, oy, max_range)
        return _raycast_loop(ox, oy, dirs[:, 0], dirs[:, 1], float(max_range),
                             circles, rect_segs, edges, edge_poly,
                             len(world.map.polygons))
    return _raycast_numpy(world, ox, oy, dirs, n_rays, max_range)


class GpsNoiseModel:
    """Latency-delayed, Gaussian-corrupted localization of the agent position."""

    def __init__(self, sigma_pos: float = GPS_SIGMA_POS,
                 latency_steps: int = GPS_LATENCY_STEPS,
                 rng: Optional[np.random.Generator] = None):
        if sigma_pos < 0.0 or latency_steps < 0:
            raise ValueError("sigma_pos >= 0 and latency_steps >= 0 required")
        self.sigma_pos = float(sigma_pos)
        self.latency_steps = int(latency_steps)
        self.rng = rng if rng is not None else np.random.default_rng()
        self._history: deque = deque(maxlen=self.latency_steps + 1)

    def reset(self):
        self._history.clear()

    def localize(self, x: float, y: float) -> tuple[float, float]:
        """Push the true position, return the delayed noisy estimate."""
        self._history.append((x, y))
        dx_, dy_ = self._history[0]  # oldest available, up to latency_steps back
        nx = self.sigma_pos * float(self.rng.standard_normal())
        ny = self.sigma_pos * float(self.rng.standard_normal())
        return (dx_ + nx, dy_ + ny)


def compute_gdd(agent: AgentState, goal: tuple[float, float],
                gps: Optional[GpsNoiseModel] = None) -> GoalPolar:
    """Goal distance and bearing in the agent's polar frame.

    With a GPS model, the agent position is replaced by its delayed noisy
    estimate before the same computation; the heading stays exact.
    """
    ax, ay = agent.x, agent.y
    if gps is not None:
        ax, ay = gps.localize(ax, ay)
    dx = goal[0] - ax
    dy = goal[1] - ay
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return GoalPolar(0.0, 0.0)
    return GoalPolar(dist, geometry.normalize_angle(math.atan2(dy, dx) - agent.heading))
