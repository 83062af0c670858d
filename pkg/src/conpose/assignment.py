"""Robot-to-contact-point matching and switch planning.

Robots and the contact points of a newly selected configuration are
projected onto a circle around the object center. A split angle whose two
semicircles contain equal robot and contact-point counts is selected;
numbering both sets clockwise from the split and pairing equal ranks yields
an order-preserving (non-crossing) assignment whose projected travel arcs
stay within half the circle.

Switch execution is planned on a fine local grid around the object: one A*
path per robot to its standoff pose. Robots may switch concurrently when
every path is shorter than half the object perimeter and at most one robot
starts at or targets a concave-corner region; otherwise they move one at a
time in clockwise index order, each path detouring around the still-parked
robots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DEFAULT_ROBOT_RADIUS,
    Footprint,
    to_object_points,
    to_world_points,
    wrap_angle,
)
from .planner import grid_astar

LOCAL_RESOLUTION = 0.05
_JITTER = 1e-6


class AssignmentError(Exception):
    pass


class NoValidSplit(AssignmentError):
    """No split angle balances the semicircles, even after jitter."""


class LocalNoPath(AssignmentError):
    """A robot cannot reach its standoff pose on the local grid."""


@dataclass
class MatchingResult:
    """Order-preserving robot-to-contact-point assignment on the circle."""

    assignment: dict[int, int]
    split_angle: float
    arcs: np.ndarray
    robot_positions: np.ndarray
    cp_positions: np.ndarray
    object_center: np.ndarray
    concurrent_ok: bool | None = None


def _clockwise_rank(angles: np.ndarray, alpha: float) -> np.ndarray:
    """Indices sorted by clockwise angular distance from alpha."""
    dist = np.mod(alpha - angles, 2.0 * math.pi)
    return np.argsort(dist, kind="stable")


def _semicircle_counts(angles: np.ndarray, alpha: float) -> int:
    return int(np.count_nonzero(np.mod(angles - alpha, 2.0 * math.pi) < math.pi))


def _candidate_splits(robot_angles, cp_angles) -> np.ndarray:
    events = np.unique(np.mod(np.concatenate([robot_angles, cp_angles]), math.pi))
    if len(events) == 1:
        return np.array([wrap_half(events[0] + 0.5 * math.pi)])
    mids = 0.5 * (events[:-1] + events[1:])
    last = 0.5 * (events[-1] + events[0] + math.pi)
    return np.mod(np.concatenate([mids, [last]]), math.pi)


def wrap_half(a: float) -> float:
    return float(np.mod(a, math.pi))


def match(robot_positions, cp_positions, object_center) -> MatchingResult:
    """Assign each robot to one contact point of the new configuration.

    Among every balanced split angle the one minimizing the robots' total
    projected arc travel is used (ties go to the smaller angle), which keeps
    the assignment invariant under global rotation of all inputs.
    """
    robots = np.atleast_2d(np.asarray(robot_positions, dtype=float))
    cps = np.atleast_2d(np.asarray(cp_positions, dtype=float))
    center = np.asarray(object_center, dtype=float)
    if len(robots) != len(cps) or len(robots) == 0:
        raise AssignmentError("robot and contact point counts must match")
    rel_r = robots - center
    if np.any(np.hypot(rel_r[:, 0], rel_r[:, 1]) < 1e-9):
        raise AssignmentError("a robot sits exactly at the object center")
    r_ang = np.arctan2(rel_r[:, 1], rel_r[:, 0])
    rel_c = cps - center
    c_ang = np.arctan2(rel_c[:, 1], rel_c[:, 0])

    result = _match_angles(r_ang, c_ang)
    if result is None:
        jitter = _JITTER * (np.arange(len(r_ang)) + 1.0)
        result = _match_angles(r_ang + jitter, c_ang + 2.0 * jitter)
        if result is None:
            raise NoValidSplit("no balanced split even after jitter")
    alpha, assignment = result
    arcs = np.array(
        [abs(wrap_angle(c_ang[assignment[i]] - r_ang[i])) for i in range(len(r_ang))]
    )
    return MatchingResult(
        assignment=assignment,
        split_angle=alpha,
        arcs=arcs,
        robot_positions=robots.copy(),
        cp_positions=cps.copy(),
        object_center=center.copy(),
    )


def _match_angles(r_ang: np.ndarray, c_ang: np.ndarray):
    best = None
    for alpha in sorted(_candidate_splits(r_ang, c_ang)):
        if _semicircle_counts(r_ang, alpha) != _semicircle_counts(c_ang, alpha):
            continue
        r_rank = _clockwise_rank(r_ang, alpha)
        c_rank = _clockwise_rank(c_ang, alpha)
        assignment = {int(r_rank[k]): int(c_rank[k]) for k in range(len(r_ang))}
        travel = sum(
            abs(wrap_angle(c_ang[assignment[i]] - r_ang[i])) for i in range(len(r_ang))
        )
        if best is None or travel < best[0] - 1e-12:
            best = (travel, float(alpha), assignment)
    if best is None:
        return None
    return best[1], best[2]


@dataclass
class SwitchPlan:
    """Per-robot standoff targets and local paths plus the execution mode."""

    standoffs: np.ndarray
    headings: np.ndarray
    paths: list[np.ndarray | None]
    mode: str
    order: list[int]
    concurrent_ok: bool
    path_lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        self.path_lengths = np.array(
            [0.0 if p is None else _polyline_length(p) for p in self.paths]
        )


def _polyline_length(pts: np.ndarray) -> float:
    if pts is None or len(pts) < 2:
        return 0.0
    d = np.diff(pts, axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def resolution_margin(grid) -> float:
    return grid.resolution


def standoff_pose(footprint: Footprint, object_pose, cp_world) -> tuple[np.ndarray, float]:
    """Robot center pose docking the given boundary point: body touching the
    boundary at the contact point, heading along the pushing direction."""
    local = to_object_points(object_pose, cp_world)[0]
    q, inward = footprint.closest_boundary(local)
    heading = wrap_angle(inward + float(object_pose[2]))
    q_world = to_world_points(object_pose, q)[0]
    u = np.array([math.cos(heading), math.sin(heading)])
    return q_world - DEFAULT_ROBOT_RADIUS * u, heading


class _LocalGrid:
    """Occupancy grid around the object for switch-path planning."""

    def __init__(self, footprint, object_pose, obstacles, robot_radius,
                 extra_points, arena=None, resolution=LOCAL_RESOLUTION):
        self.resolution = resolution
        margin = 8.0 * robot_radius + 0.5
        pts = to_world_points(object_pose, footprint.boundary_samples(0.1))
        lo = np.min(np.vstack([pts, extra_points]), axis=0) - margin
        hi = np.max(np.vstack([pts, extra_points]), axis=0) + margin
        if arena is not None:
            lo = np.maximum(lo, [0.0, 0.0])
            hi = np.minimum(hi, [float(arena[0]), float(arena[1])])
        self.origin = lo
        nx = max(2, int(math.ceil((hi[0] - lo[0]) / resolution)))
        ny = max(2, int(math.ceil((hi[1] - lo[1]) / resolution)))
        xs = lo[0] + (np.arange(nx) + 0.5) * resolution
        ys = lo[1] + (np.arange(ny) + 0.5) * resolution
        gx, gy = np.meshgrid(xs, ys)
        world = np.column_stack([gx.ravel(), gy.ravel()])
        # free cells keep a margin beyond the touching distance so switch
        # paths glide around the object without transmitting contact forces
        # even when pure pursuit cuts corners; start and standoff points are
        # snapped to the nearest free cell
        clearance = robot_radius + 0.1
        occ = self._signed(footprint, object_pose, world) < clearance
        for fp, pose in obstacles:
            occ |= self._signed(fp, pose, world) < clearance
        self.lethal = occ.reshape(ny, nx)
        self.cost = np.zeros_like(self.lethal, dtype=float)
        self.nx, self.ny = nx, ny

    @staticmethod
    def _signed(footprint, pose, world_pts):
        from . import kernels

        local = to_object_points(pose, world_pts)
        if footprint.is_circle:
            return np.hypot(local[:, 0], local[:, 1]) - footprint.radius
        return kernels.poly_signed_distance_batch(
            np.ascontiguousarray(footprint.vertices), local[:, 0], local[:, 1]
        )

    def block_discs(self, centers, radius) -> np.ndarray:
        """Lethal mask with extra discs stamped in (parked robots)."""
        extra = self.lethal.copy()
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        for c in centers:
            extra |= (gx - c[0]) ** 2 + (gy - c[1]) ** 2 < radius**2
        return extra

    def cell_of(self, point):
        ix = int((point[0] - self.origin[0]) / self.resolution)
        iy = int((point[1] - self.origin[1]) / self.resolution)
        return min(max(ix, 0), self.nx - 1), min(max(iy, 0), self.ny - 1)

    def center_of(self, ix, iy):
        return self.origin + (np.array([ix, iy]) + 0.5) * self.resolution

    def nearest_free(self, cell, lethal, max_cells=12):
        ix, iy = cell
        if not lethal[iy, ix]:
            return cell
        for ring in range(1, max_cells + 1):
            best = None
            for dy in range(-ring, ring + 1):
                for dx in range(-ring, ring + 1):
                    if max(abs(dx), abs(dy)) != ring:
                        continue
                    tx, ty = ix + dx, iy + dy
                    if 0 <= tx < self.nx and 0 <= ty < self.ny and not lethal[ty, tx]:
                        d = dx * dx + dy * dy
                        if best is None or d < best[0]:
                            best = (d, tx, ty)
            if best is not None:
                return best[1], best[2]
        return None

    def plan(self, start, goal, lethal=None) -> np.ndarray | None:
        lethal = self.lethal if lethal is None else lethal
        s = self.nearest_free(self.cell_of(start), lethal)
        t = self.nearest_free(self.cell_of(goal), lethal)
        if s is None or t is None:
            return None
        cells = grid_astar(lethal, self.cost, s, t, self.resolution)
        if cells is None:
            return None
        path = np.array([self.center_of(ix, iy) for ix, iy in cells])
        path[0] = start
        path[-1] = goal
        return self._shortcut(path, lethal)

    def _shortcut(self, path: np.ndarray, lethal: np.ndarray) -> np.ndarray:
        """Greedy line-of-sight smoothing of a grid path."""
        if len(path) < 3:
            return path
        out = [path[0]]
        i = 0
        while i < len(path) - 1:
            j = len(path) - 1
            while j > i + 1 and not self._segment_free(path[i], path[j], lethal):
                j -= 1
            out.append(path[j])
            i = j
        return np.array(out)

    def _segment_free(self, a, b, lethal) -> bool:
        length = float(np.hypot(*(b - a)))
        n = max(2, int(math.ceil(length / (0.5 * self.resolution))))
        for t in np.linspace(0.0, 1.0, n):
            ix, iy = self.cell_of(a + t * (b - a))
            if lethal[iy, ix]:
                return False
        return True


def plan_switch(
    matching: MatchingResult,
    footprint: Footprint,
    object_pose,
    obstacles,
    robot_radius: float = DEFAULT_ROBOT_RADIUS,
    arena=None,
) -> SwitchPlan:
    """Plan standoff targets and collision-aware switch execution.

    Concurrent execution requires every path to stay under half the object
    perimeter and at most one robot to start at or target a concave-corner
    region; otherwise robots move sequentially in clockwise index order,
    each avoiding the currently parked robots.
    """
    n = len(matching.robot_positions)
    pose = np.asarray(object_pose, dtype=float)
    standoffs = np.zeros((n, 2))
    headings = np.zeros(n)
    for i in range(n):
        cp = matching.cp_positions[matching.assignment[i]]
        standoffs[i], headings[i] = standoff_pose(footprint, pose, cp)

    extra = np.vstack([matching.robot_positions, standoffs])
    grid = _LocalGrid(footprint, pose, obstacles, robot_radius, extra, arena)

    concave = footprint.concave_vertices()
    concave_world = (
        to_world_points(pose, concave) if len(concave) else np.empty((0, 2))
    )

    def _near_concave(p) -> bool:
        if len(concave_world) == 0:
            return False
        d = np.hypot(concave_world[:, 0] - p[0], concave_world[:, 1] - p[1])
        return bool(np.min(d) <= 2.0 * robot_radius + robot_radius)

    movers = [
        i for i in range(n)
        if float(np.hypot(*(standoffs[i] - matching.robot_positions[i]))) >= 1e-6
    ]
    stationary = [matching.robot_positions[i] for i in range(n) if i not in movers]
    base_lethal = (
        grid.block_discs(stationary, 2.0 * robot_radius + resolution_margin(grid))
        if stationary else None
    )
    paths: list[np.ndarray | None] = [None] * n
    for i in movers:
        start = matching.robot_positions[i]
        path = grid.plan(start, standoffs[i], base_lethal)
        if path is None and base_lethal is not None:
            path = grid.plan(start, standoffs[i])  # parked-aware detour failed
        if path is None:
            raise LocalNoPath(f"robot {i} cannot reach its standoff pose")
        paths[i] = path

    half_perimeter = 0.5 * footprint.perimeter
    lengths = [0.0 if p is None else _polyline_length(p) for p in paths]
    concave_involved = sum(
        1 for i in range(n)
        if _near_concave(matching.robot_positions[i]) or _near_concave(standoffs[i])
    )
    concurrent_ok = all(l < half_perimeter for l in lengths) and concave_involved <= 1
    matching.concurrent_ok = concurrent_ok

    order = sorted(range(n), key=lambda i: _clockwise_order_key(matching, i))
    if not concurrent_ok:
        # sequential: each mover detours around robots still parked at
        # their old spots and robots already parked at new standoffs
        seq_paths: list[np.ndarray | None] = list(paths)
        moved: list[int] = []
        stamp = 2.0 * robot_radius + resolution_margin(grid)
        for i in order:
            if paths[i] is None:
                moved.append(i)
                continue
            parked = [
                (standoffs[j] if j in moved else matching.robot_positions[j])
                for j in range(n) if j != i
            ]
            lethal = grid.block_discs(parked, stamp)
            path = grid.plan(matching.robot_positions[i], standoffs[i], lethal)
            if path is None:
                path = paths[i]  # parked-aware detour failed; keep direct path
            seq_paths[i] = path
            moved.append(i)
        paths = seq_paths

    return SwitchPlan(
        standoffs=standoffs,
        headings=headings,
        paths=paths,
        mode="concurrent" if concurrent_ok else "sequential",
        order=order,
        concurrent_ok=concurrent_ok,
    )


def _clockwise_order_key(matching: MatchingResult, i: int) -> float:
    rel = matching.robot_positions[i] - matching.object_center
    ang = math.atan2(rel[1], rel[0])
    return float(np.mod(matching.split_angle - ang, 2.0 * math.pi))
