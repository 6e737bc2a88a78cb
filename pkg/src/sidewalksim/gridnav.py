"""Occupancy-grid helpers: free-space rasterization, BFS connectivity, Dijkstra fields."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .walkmap import WalkableMap

NAV_RESOLUTION = 0.25  # meters per cell for reachability and planning grids


@dataclass
class OccupancyGrid:
    """Boolean free-space raster over the map bounds; True = traversable."""

    free: np.ndarray       # (ny, nx)
    minx: float
    miny: float
    resolution: float

    @property
    def shape(self):
        return self.free.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the containing cell; may be out of bounds."""
        col = int(math.floor((x - self.minx) / self.resolution))
        row = int(math.floor((y - self.miny) / self.resolution))
        return row, col

    def in_bounds(self, row: int, col: int) -> bool:
        ny, nx = self.free.shape
        return 0 <= row < ny and 0 <= col < nx

    def center_of(self, row: int, col: int) -> tuple[float, float]:
        return (self.minx + (col + 0.5) * self.resolution,
                self.miny + (row + 0.5) * self.resolution)


def free_space_grid(wmap: WalkableMap, obstacles=(), resolution: float = NAV_RESOLUTION,
                    inflate: float = 0.0) -> OccupancyGrid:
    """Rasterize walkable-minus-obstacles, inflating obstacle footprints by `inflate`."""
    minx, miny, maxx, maxy = wmap.bounds
    nx = max(1, int(math.ceil((maxx - minx) / resolution)))
    ny = max(1, int(math.ceil((maxy - miny) / resolution)))
    xs = minx + (np.arange(nx) + 0.5) * resolution
    ys = miny + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    free = wmap.contains_points(gx.ravel(), gy.ravel()).reshape(ny, nx)

    for ob in obstacles:
        if ob.kind == "cylinder":
            reach = ob.radius + inflate
        else:
            reach = math.hypot(ob.half_w, ob.half_h) + inflate
        c0 = max(0, int((ob.x - reach - minx) / resolution) - 1)
        c1 = min(nx, int((ob.x + reach - minx) / resolution) + 2)
        r0 = max(0, int((ob.y - reach - miny) / resolution) - 1)
        r1 = min(ny, int((ob.y + reach - miny) / resolution) + 2)
        if c0 >= c1 or r0 >= r1:
            continue
        sub_x = gx[r0:r1, c0:c1]
        sub_y = gy[r0:r1, c0:c1]
        if ob.kind == "cylinder":
            near = (sub_x - ob.x) ** 2 + (sub_y - ob.y) ** 2 <= reach * reach
        else:
            oc, osn = math.cos(ob.yaw), math.sin(ob.yaw)
            dx = sub_x - ob.x
            dy = sub_y - ob.y
            lx = dx * oc + dy * osn
            ly = -dx * osn + dy * oc
            qx = np.clip(lx, -ob.half_w, ob.half_w)
            qy = np.clip(ly, -ob.half_h, ob.half_h)
            near = (lx - qx) ** 2 + (ly - qy) ** 2 <= inflate * inflate
        free[r0:r1, c0:c1] &= ~near
    return OccupancyGrid(free=free, minx=minx, miny=miny, resolution=resolution)


def line_of_sight(grid: OccupancyGrid, x0: float, y0: float, x1: float, y1: float) -> bool:
    """True when the segment crosses only free cells (sampled at 1/3 cell)."""
    dist = math.hypot(x1 - x0, y1 - y0)
    free = grid.free
    ny, nx = free.shape
    n = max(1, int(math.ceil(dist / (grid.resolution / 3.0))))
    for i in range(n + 1):
        t = i / n
        x = x0 + t * (x1 - x0)
        y = y0 + t * (y1 - y0)
        col = int(math.floor((x - grid.minx) / grid.resolution))
        row = int(math.floor((y - grid.miny) / grid.resolution))
        if not (0 <= row < ny and 0 <= col < nx) or not free[row, col]:
            return False
    return True


def eroded(grid: OccupancyGrid) -> OccupancyGrid:
    """Grid with one cell of boundary margin shaved off the free space."""
    padded = np.pad(grid.free, 1, constant_values=False)
    out = grid.free.copy()
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            out &= padded[1 + dr:padded.shape[0] - 1 + dr,
                          1 + dc:padded.shape[1] - 1 + dc]
    return OccupancyGrid(free=out, minx=grid.minx, miny=grid.miny,
                         resolution=grid.resolution)


_NEIGHBORS8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def bfs_connected(grid: OccupancyGrid, start_cell, goal_cell) -> bool:
    """8-connected flood fill; endpoints must be free cells."""
    if not (grid.in_bounds(*start_cell) and grid.in_bounds(*goal_cell)):
        return False
    free = grid.free
    if not (free[start_cell] and free[goal_cell]):
        return False
    if start_cell == goal_cell:
        return True
    seen = np.zeros_like(free)
    seen[start_cell] = True
    queue = deque([start_cell])
    ny, nx = free.shape
    while queue:
        r, c = queue.popleft()
        for dr, dc in _NEIGHBORS8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < ny and 0 <= cc < nx and free[rr, cc] and not seen[rr, cc]:
                if (rr, cc) == goal_cell:
                    return True
                seen[rr, cc] = True
                queue.append((rr, cc))
    return False


def interpolate_distance(grid: OccupancyGrid, dist: np.ndarray,
                         x: float, y: float) -> float:
    """Bilinear distance lookup; falls back to the containing cell when the
    stencil touches blocked or out-of-grid cells."""
    res = grid.resolution
    u = (x - grid.minx) / res - 0.5
    v = (y - grid.miny) / res - 0.5
    c0 = int(math.floor(u))
    r0 = int(math.floor(v))
    q = []
    for dr in (0, 1):
        for dc in (0, 1):
            r, c = r0 + dr, c0 + dc
            q.append(dist[r, c] if grid.in_bounds(r, c) else math.inf)
    if all(math.isfinite(t) for t in q):
        fu = u - c0
        fv = v - r0
        v00, v01, v10, v11 = q  # (r0,c0), (r0,c0+1), (r0+1,c0), (r0+1,c0+1)
        return ((v00 * (1 - fu) + v01 * fu) * (1 - fv)
                + (v10 * (1 - fu) + v11 * fu) * fv)
    cell = grid.cell_of(x, y)
    if grid.in_bounds(*cell):
        return float(dist[cell])
    return math.inf


def dijkstra_distances(grid: OccupancyGrid, source_cell) -> np.ndarray:
    """Geodesic meters from every free cell to the source; inf where unreachable.

    8-connected, diagonal moves cost sqrt(2) * resolution.
    """
    free = grid.free
    ny, nx = free.shape
    dist = np.full((ny, nx), np.inf)
    if not grid.in_bounds(*source_cell) or not free[source_cell]:
        return dist
    straight = grid.resolution
    diagonal = math.sqrt(2.0) * grid.resolution
    dist[source_cell] = 0.0
    heap = [(0.0, source_cell[0], source_cell[1])]
    while heap:
        d, r, c = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        for dr, dc in _NEIGHBORS8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < ny and 0 <= cc < nx and free[rr, cc]:
                nd = d + (diagonal if dr and dc else straight)
                if nd < dist[rr, cc]:
                    dist[rr, cc] = nd
                    heapq.heappush(heap, (nd, rr, cc))
    return dist
