"""Walkable-area maps: buffered sidewalk polygons plus a uniform grid index.

A WalkableMap is immutable after construction. Coordinates are quantized to
1e-6 m at construction so that the JSON cache round-trips losslessly.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import geometry
from .errors import GeometryError, MapFormatError

MAP_SCHEMA_VERSION = 1
DEFAULT_CELL_SIZE = 1.0

SIDEWALK_WIDTH_RANGE = (2.0, 5.0)  # meters, uniform sampling range


class SidewalkNetwork:
    """Centerline polylines with per-polyline widths, in local meters."""

    def __init__(self, polylines):
        self.polylines = []
        for verts, width in polylines:
            verts = [(float(x), float(y)) for x, y in verts]
            if len(verts) < 2:
                raise GeometryError("polyline needs at least 2 vertices")
            for a, b in zip(verts[:-1], verts[1:]):
                if a == b:
                    raise GeometryError("consecutive duplicate vertices in polyline")
            self.polylines.append((verts, float(width)))

    def __len__(self):
        return len(self.polylines)


class WalkableMap:
    """Union of simple polygons with a uniform grid index for point queries."""

    def __init__(self, polygons, cell_size: float = DEFAULT_CELL_SIZE, origin=(0.0, 0.0)):
        if cell_size <= 0.0:
            raise GeometryError("cell_size must be positive")
        quantized = []
        for poly in polygons:
            arr = np.round(np.asarray(poly, dtype=float), 6)
            if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] != 2:
                raise MapFormatError("polygon must be an (N>=3, 2) vertex list")
            if not np.isfinite(arr).all():
                raise GeometryError("polygon has non-finite vertices")
            arr.setflags(write=False)
            quantized.append(arr)
        if not quantized:
            raise GeometryError("map needs at least one polygon")
        self.polygons = quantized
        self.cell_size = float(cell_size)
        self.origin = (float(origin[0]), float(origin[1]))

        allv = np.vstack(self.polygons)
        self.bounds = (
            float(allv[:, 0].min()),
            float(allv[:, 1].min()),
            float(allv[:, 0].max()),
            float(allv[:, 1].max()),
        )
        self._bboxes = np.array(
            [
                [p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()]
                for p in self.polygons
            ]
        )
        # flattened edge list for raycasting: rows (x1, y1, x2, y2)
        edges = []
        edge_poly = []
        for pid, p in enumerate(self.polygons):
            nxt = np.roll(p, -1, axis=0)
            edges.append(np.hstack([p, nxt]))
            edge_poly.append(np.full(len(p), pid))
        self._edges = np.vstack(edges)
        self._edge_poly = np.concatenate(edge_poly)
        # dense edge -> polygon indicator for crossing-parity queries
        self._edge_onehot = np.zeros((len(self._edge_poly), len(self.polygons)))
        self._edge_onehot[np.arange(len(self._edge_poly)), self._edge_poly] = 1.0
        areas = np.array([geometry.polygon_area(p) for p in self.polygons])
        total = areas.sum()
        self._area_weights = areas / total if total > 0 else None
        self._grid = self._build_grid()

    def _build_grid(self):
        grid: dict[tuple[int, int], list[int]] = {}
        minx, miny = self.bounds[0], self.bounds[1]
        cs = self.cell_size
        for pid, (bx0, by0, bx1, by1) in enumerate(self._bboxes):
            i0 = int(math.floor((bx0 - minx) / cs))
            i1 = int(math.floor((bx1 - minx) / cs))
            j0 = int(math.floor((by0 - miny) / cs))
            j1 = int(math.floor((by1 - miny) / cs))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    grid.setdefault((i, j), []).append(pid)
        return grid

    def _cell(self, x: float, y: float):
        cs = self.cell_size
        return (
            int(math.floor((x - self.bounds[0]) / cs)),
            int(math.floor((y - self.bounds[1]) / cs)),
        )

    def candidate_polygons(self, x: float, y: float) -> list[int]:
        return self._grid.get(self._cell(x, y), [])

    def is_walkable(self, x: float, y: float) -> bool:
        """True iff the point lies inside at least one polygon (grid-indexed)."""
        for pid in self.candidate_polygons(x, y):
            if geometry.point_in_polygon(x, y, self.polygons[pid]):
                return True
        return False

    def polygons_in_region(self, minx, miny, maxx, maxy) -> list[int]:
        """Ids of polygons whose bbox intersects the query box."""
        b = self._bboxes
        hit = (b[:, 0] <= maxx) & (b[:, 2] >= minx) & (b[:, 1] <= maxy) & (b[:, 3] >= miny)
        return list(np.nonzero(hit)[0])

    def contains_points(self, px: np.ndarray, py: np.ndarray, polygon_ids=None) -> np.ndarray:
        """Vectorized union membership for many points.

        Uses the same per-polygon arithmetic as is_walkable, so the two paths
        classify identically.
        """
        if polygon_ids is None:
            minx, maxx = float(px.min()), float(px.max())
            miny, maxy = float(py.min()), float(py.max())
            polygon_ids = self.polygons_in_region(minx, miny, maxx, maxy)
        inside = np.zeros(px.shape, dtype=bool)
        for pid in polygon_ids:
            bx0, by0, bx1, by1 = self._bboxes[pid]
            box = (px >= bx0) & (px <= bx1) & (py >= by0) & (py <= by1) & ~inside
            if not box.any():
                continue
            sub = geometry.points_in_polygon(px[box], py[box], self.polygons[pid])
            inside[box] |= sub
        return inside

    def edges_near(self, x: float, y: float, radius: float):
        """Edges within a box around (x, y): (rows (E, 4), parity matrix, poly ids).

        Crossing-parity queries stay exact as long as every edge of any
        polygon that can contain a query point is present; an edge-level bbox
        cut would break that, so the cut is per polygon here and the parity
        kernel gets the full edge set of each retained polygon.
        """
        b = self._bboxes
        near = (
            (b[:, 0] <= x + radius)
            & (b[:, 2] >= x - radius)
            & (b[:, 1] <= y + radius)
            & (b[:, 3] >= y - radius)
        )
        mask = near[self._edge_poly]
        return self._edges[mask], self._edge_onehot[mask], self._edge_poly[mask]

    @staticmethod
    def contains_points_bulk(px: np.ndarray, py: np.ndarray,
                             edges: np.ndarray, edge_onehot: np.ndarray) -> np.ndarray:
        """Union membership for few points against a pre-gathered edge set.

        One vectorized crossing test over all (point, edge) pairs, reduced to
        per-polygon parity via the edge indicator matrix; elementwise
        arithmetic matches points_in_polygon, so classifications agree
        exactly. Intended for probe batches much smaller than a BEV frame.
        """
        if edges.size == 0:
            return np.zeros(px.shape, dtype=bool)
        ax, ay = edges[:, 0], edges[:, 1]
        bx, by = edges[:, 2], edges[:, 3]
        pyc = py[:, None]
        pxc = px[:, None]
        crossing = (ay <= pyc) != (by <= pyc)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (pyc - ay) / (by - ay)
            crossing &= pxc < ax + t * (bx - ax)
        counts = crossing.astype(float) @ edge_onehot
        return (counts.astype(np.int64) & 1).any(axis=1)

    def sample_walkable_point(self, rng, max_tries: int = 200) -> tuple[float, float]:
        """Uniform-ish walkable point: area-weighted polygon, then bbox rejection."""
        if self._area_weights is None:
            raise GeometryError("map has no area to sample from")
        for _ in range(max_tries):
            pid = int(rng.choice(len(self.polygons), p=self._area_weights))
            bx0, by0, bx1, by1 = self._bboxes[pid]
            x = float(rng.uniform(bx0, bx1))
            y = float(rng.uniform(by0, by1))
            if geometry.point_in_polygon(x, y, self.polygons[pid]):
                return (x, y)
        raise GeometryError("failed to sample a walkable point")

    def walkable_area(self, resolution: float = 0.25) -> float:
        """Union area estimated by counting walkable cell centers."""
        minx, miny, maxx, maxy = self.bounds
        nx = max(1, int(math.ceil((maxx - minx) / resolution)))
        ny = max(1, int(math.ceil((maxy - miny) / resolution)))
        xs = minx + (np.arange(nx) + 0.5) * resolution
        ys = miny + (np.arange(ny) + 0.5) * resolution
        gx, gy = np.meshgrid(xs, ys)
        inside = self.contains_points(gx.ravel(), gy.ravel())
        return float(inside.sum()) * resolution * resolution

    def to_dict(self) -> dict:
        return {
            "version": MAP_SCHEMA_VERSION,
            "origin": [self.origin[0], self.origin[1]],
            "cell_size": self.cell_size,
            "polygons": [[[float(x), float(y)] for x, y in p] for p in self.polygons],
            "bounds": list(self.bounds),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WalkableMap":
        if not isinstance(data, dict) or data.get("version") != MAP_SCHEMA_VERSION:
            raise MapFormatError(
                f"unsupported map version {data.get('version')!r}, expected {MAP_SCHEMA_VERSION}"
            )
        for key in ("origin", "cell_size", "polygons", "bounds"):
            if key not in data:
                raise MapFormatError(f"map file missing field {key!r}")
        polys = data["polygons"]
        if not isinstance(polys, list) or not polys:
            raise MapFormatError("polygons must be a non-empty list")
        for p in polys:
            if len(p) < 3:
                raise MapFormatError("polygon with fewer than 3 vertices")
        return cls(polys, cell_size=float(data["cell_size"]), origin=tuple(data["origin"]))

    def __eq__(self, other):
        if not isinstance(other, WalkableMap):
            return NotImplemented
        return (
            self.cell_size == other.cell_size
            and self.origin == other.origin
            and self.bounds == other.bounds
            and len(self.polygons) == len(other.polygons)
            and all(np.array_equal(a, b) for a, b in zip(self.polygons, other.polygons))
        )


def build_walkable_map(net: SidewalkNetwork, cell_size: float = DEFAULT_CELL_SIZE,
                       origin=(0.0, 0.0)) -> WalkableMap:
    """Buffer every polyline of the network and index the resulting polygons."""
    if len(net) == 0:
        raise GeometryError("empty sidewalk network")
    polygons = []
    for verts, width in net.polylines:
        try:
            polygons.extend(geometry.buffer_polyline(verts, width))
        except ValueError as exc:
            raise GeometryError(str(exc)) from exc
    return WalkableMap(polygons, cell_size=cell_size, origin=origin)


def generate_synthetic_map(kind: str, length: float, width: float | None = None,
                           seed: int = 0, cell_size: float = DEFAULT_CELL_SIZE) -> WalkableMap:
    """Deterministic test maps: straight corridor, L-shape, or street grid.

    width=None draws per-polyline widths from the sidewalk range with the
    given seed; an explicit width is used verbatim.
    """
    if length <= 0.0 or (width is not None and width <= 0.0):
        raise GeometryError("length and width must be positive")
    rng = np.random.default_rng(seed)

    def next_width() -> float:
        if width is not None:
            return width
        return float(rng.uniform(*SIDEWALK_WIDTH_RANGE))

    if kind == "corridor":
        cw = next_width()
        lines = [([(0.0, cw / 2.0), (length, cw / 2.0)], cw)]
    elif kind == "L-shape":
        cw = next_width()
        lines = [([(0.0, 0.0), (length, 0.0), (length, length)], cw)]
    elif kind == "grid":
        # three streets each way spanning a square block layout
        lines = []
        for frac in (0.0, 0.5, 1.0):
            y = frac * length
            lines.append(([(0.0, y), (length, y)], next_width()))
            x = frac * length
            lines.append(([(x, 0.0), (x, length)], next_width()))
    else:
        raise GeometryError(f"unknown synthetic map kind {kind!r}")
    return build_walkable_map(SidewalkNetwork(lines), cell_size=cell_size)


def save_map(wmap: WalkableMap, path) -> None:
    with open(path, "w") as f:
        json.dump(wmap.to_dict(), f, separators=(",", ":"))
        f.write("\n")


def load_map(path) -> WalkableMap:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise MapFormatError(f"invalid JSON in map file: {exc}") from exc
    return WalkableMap.from_dict(data)
