"""Global object path planning on a clearance-aware costmap.

The costmap marks cells within r_safety of any obstacle boundary or of the
arena walls as lethal and adds a linear cost gradient in the clearance band
(r_safety, 1.5*r_safety] so A* trades path length against clearance. The
planned grid path is simplified with Ramer-Douglas-Peucker into key
waypoints that define straight pushing segments.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Footprint, to_object_points

DEFAULT_RESOLUTION = 0.1
DEFAULT_C_MAX = 10.0
DEFAULT_RDP_EPSILON = 0.25

_SQRT2 = math.sqrt(2.0)


class PlannerError(Exception):
    pass


class NoPath(PlannerError):
    """Start and goal are disconnected on the costmap."""


class StartInLethal(NoPath):
    pass


class GoalInLethal(NoPath):
    pass


class CoincidentPoints(PlannerError):
    """Target direction is undefined for (near-)coincident points."""


@dataclass
class Costmap:
    """Grid of traversal costs over the arena; [row, col] indexes [y, x]."""

    resolution: float
    width: int
    height: int
    cost: np.ndarray
    lethal: np.ndarray
    r_safety: float
    c_max: float

    def cell_of(self, point) -> tuple[int, int]:
        ix = int(point[0] / self.resolution)
        iy = int(point[1] / self.resolution)
        return min(max(ix, 0), self.width - 1), min(max(iy, 0), self.height - 1)

    def center_of(self, ix: int, iy: int) -> np.ndarray:
        return np.array([(ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution])

    def is_lethal(self, point) -> bool:
        ix, iy = self.cell_of(point)
        return bool(self.lethal[iy, ix])


@dataclass
class ObjectPath:
    """Planned waypoints; `simplified` holds the RDP key waypoints."""

    waypoints: np.ndarray
    simplified: np.ndarray | None = None
    cells: list[tuple[int, int]] = field(default_factory=list)

    @property
    def length(self) -> float:
        d = np.diff(self.waypoints, axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def build_costmap(
    arena,
    obstacles,
    r_safety: float,
    resolution: float = DEFAULT_RESOLUTION,
    c_max: float = DEFAULT_C_MAX,
) -> Costmap:
    """Rasterize clearance costs for an arena with posed obstacle footprints.

    `arena` is (width, height) in meters with the origin at the bottom-left
    corner; `obstacles` is a list of (Footprint, pose) pairs.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    aw, ah = float(arena[0]), float(arena[1])
    nx = max(1, int(round(aw / resolution)))
    ny = max(1, int(round(ah / resolution)))
    xs = (np.arange(nx) + 0.5) * resolution
    ys = (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    pxs = gx.ravel()
    pys = gy.ravel()

    d_obs = np.full(pxs.shape, np.inf)
    for footprint, pose in obstacles:
        local = to_object_points(pose, np.column_stack([pxs, pys]))
        if footprint.is_circle:
            d = np.hypot(local[:, 0], local[:, 1]) - footprint.radius
        else:
            d = kernels.poly_signed_distance_batch(
                np.ascontiguousarray(footprint.vertices), local[:, 0], local[:, 1]
            )
        d_obs = np.minimum(d_obs, d)

    d_wall = np.minimum.reduce([pxs, aw - pxs, pys, ah - pys])
    lethal = (d_obs <= r_safety) | (d_wall <= r_safety)

    band = (d_obs > r_safety) & (d_obs <= 1.5 * r_safety)
    cost = np.zeros(pxs.shape)
    cost[band] = c_max * (1.5 * r_safety - d_obs[band]) / (0.5 * r_safety)
    cost[lethal] = 0.0

    return Costmap(
        resolution=resolution,
        width=nx,
        height=ny,
        cost=cost.reshape(ny, nx),
        lethal=lethal.reshape(ny, nx),
        r_safety=r_safety,
        c_max=c_max,
    )


_MOVES = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2),
)


def grid_astar(lethal: np.ndarray, cost: np.ndarray, start, goal, resolution: float):
    """8-connected A* over a lethal/cost grid; returns cell path or None.

    Move cost is step_length * (1 + cost of the entered cell); diagonal
    moves through two lethal orthogonal neighbors are forbidden. Ties on f
    expand the cell with lower (y, x) first.
    """
    ny, nx = lethal.shape
    sx, sy = start
    gx_, gy_ = goal
    g = np.full((ny, nx), np.inf)
    g[sy, sx] = 0.0
    parent = {}
    h0 = _octile(sx, sy, gx_, gy_, resolution)
    heap = [(h0, sy, sx)]
    closed = np.zeros((ny, nx), dtype=bool)
    while heap:
        _, cy, cx = heapq.heappop(heap)
        if closed[cy, cx]:
            continue
        closed[cy, cx] = True
        if (cx, cy) == (gx_, gy_):
            path = [(cx, cy)]
            while (cx, cy) in parent:
                cx, cy = parent[(cx, cy)]
                path.append((cx, cy))
            path.reverse()
            return path
        gc = g[cy, cx]
        for dx, dy, step in _MOVES:
            tx, ty = cx + dx, cy + dy
            if tx < 0 or ty < 0 or tx >= nx or ty >= ny:
                continue
            if lethal[ty, tx] or closed[ty, tx]:
                continue
            if dx != 0 and dy != 0 and (lethal[cy, tx] or lethal[ty, cx]):
                continue
            ng = gc + step * resolution * (1.0 + cost[ty, tx])
            if ng < g[ty, tx]:
                g[ty, tx] = ng
                parent[(tx, ty)] = (cx, cy)
                heapq.heappush(heap, (ng + _octile(tx, ty, gx_, gy_, resolution), ty, tx))
    return None


def _octile(x0, y0, x1, y1, resolution):
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    return resolution * (max(dx, dy) + (_SQRT2 - 1.0) * min(dx, dy))


def plan_object_path(costmap: Costmap, start, goal) -> ObjectPath:
    """Minimal (length + accumulated cell cost) path from start to goal."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    s = costmap.cell_of(start)
    t = costmap.cell_of(goal)
    if costmap.lethal[s[1], s[0]]:
        raise StartInLethal(f"start {start.tolist()} lies in a lethal cell")
    if costmap.lethal[t[1], t[0]]:
        raise GoalInLethal(f"goal {goal.tolist()} lies in a lethal cell")
    cells = grid_astar(costmap.lethal, costmap.cost, s, t, costmap.resolution)
    if cells is None:
        raise NoPath("start and goal are disconnected")
    waypoints = np.array([costmap.center_of(ix, iy) for ix, iy in cells])
    waypoints[0] = start
    waypoints[-1] = goal
    if len(waypoints) == 1:  # start and goal share a cell
        waypoints = np.vstack([start, goal])
    return ObjectPath(waypoints=waypoints, cells=cells)


def rdp(points: np.ndarray, epsilon: float) -> np.ndarray:
    """Ramer-Douglas-Peucker polyline simplification, endpoints preserved."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        return pts.copy()
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        first, last = stack.pop()
        a, b = pts[first], pts[last]
        seg = b - a
        seg_len = math.hypot(seg[0], seg[1])
        best_d = -1.0
        best_i = -1
        for i in range(first + 1, last):
            if seg_len < 1e-12:
                d = math.hypot(*(pts[i] - a))
            else:
                d = abs(seg[0] * (pts[i][1] - a[1]) - seg[1] * (pts[i][0] - a[0])) / seg_len
            if d > best_d:
                best_d = d
                best_i = i
        if best_d > epsilon:
            keep[best_i] = True
            stack.append((first, best_i))
            stack.append((best_i, last))
    return pts[keep]


def simplify_path(path: ObjectPath, rdp_epsilon: float = DEFAULT_RDP_EPSILON) -> np.ndarray:
    """Simplify the path into key waypoints (stored on path.simplified)."""
    if len(path.waypoints) < 2:
        raise PlannerError("path needs at least 2 waypoints")
    path.simplified = rdp(path.waypoints, rdp_epsilon)
    return path.simplified


def target_direction(object_pos, key_waypoint) -> float:
    """Bearing from the object center to the next key waypoint, (-pi, pi]."""
    dx = float(key_waypoint[0]) - float(object_pos[0])
    dy = float(key_waypoint[1]) - float(object_pos[1])
    if math.hypot(dx, dy) < 1e-9:
        raise CoincidentPoints("object center coincides with the waypoint")
    phi = math.atan2(dy, dx)
    if phi <= -math.pi:
        phi = math.pi
    return phi


def angular_tolerance(d_repl: float, d_wp: float) -> float:
    """Maximum allowed angle between net push and target direction.

    Shrinks with distance to the key waypoint so a feasible configuration
    can cover the whole segment without deviating more than d_repl.
    """
    return math.atan2(d_repl, d_wp)


def point_to_path_distance(polyline: np.ndarray, point) -> float:
    """Minimum distance from a point to a waypoint polyline."""
    return kernels.polyline_min_distance(
        np.ascontiguousarray(polyline, dtype=float), float(point[0]), float(point[1])
    )
