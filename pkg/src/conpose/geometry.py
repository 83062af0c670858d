"""Object footprints and candidate contact-point generation.

A footprint is either a simple counter-clockwise polygon or a circle, with
the centroid pinned to the object-frame origin (uniform mass is assumed, so
the geometric center and center of mass coincide). The boundary is
discretized into equidistant candidate contact points; each candidate
carries the inward boundary normal as its pushing direction and the torque
it exerts about the object center per unit pushing force.

Angle convention: right-handed, z-up; counter-clockwise torques are
positive. Angles are wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

TWO_PI = 2.0 * math.pi

#: Default minimum boundary-segment width, meters. Roughly 1.5x the robot
#: diameter so a single robot fits inside one segment.
DEFAULT_W_MIN = 0.5

#: TurtleBot-class robot body radius, meters.
DEFAULT_ROBOT_RADIUS = 0.17


class GeometryError(Exception):
    """Base class for footprint and candidate-generation failures."""


class DegenerateFootprint(GeometryError):
    """Polygon with (near-)zero area, too few vertices, or self-intersection."""


class NoCandidates(GeometryError):
    """Boundary discretization produced no candidate contact points."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_world_points(pose, points: np.ndarray) -> np.ndarray:
    """Rigid transform of object-frame points into the world frame."""
    pose = np.asarray(pose, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return pts @ rotation(pose[2]).T + pose[:2]


def to_object_points(pose, points: np.ndarray) -> np.ndarray:
    """Inverse rigid transform of world points into the object frame."""
    pose = np.asarray(pose, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return (pts - pose[:2]) @ rotation(pose[2])


def _polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _polygon_centroid(verts: np.ndarray) -> np.ndarray:
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return np.array([cx, cy])


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0


def _is_simple(verts: np.ndarray) -> bool:
    n = len(verts)
    for i in range(n):
        a1, a2 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, verts[j], verts[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class Footprint:
    """Planar object shape: CCW polygon vertices or a circle radius.

    The constructor classmethods recenter the shape so the centroid sits at
    the object-frame origin. Instances are immutable and safe to share
    across threads.
    """

    vertices: np.ndarray | None = None
    radius: float | None = None
    height: float = 0.5
    density: float = 1.0

    @classmethod
    def polygon(cls, vertices, height: float = 0.5, density: float = 1.0) -> "Footprint":
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DegenerateFootprint("polygon needs at least 3 planar vertices")
        area = _polygon_area(verts)
        if abs(area) < 1e-12:
            raise DegenerateFootprint("polygon area is zero")
        if area < 0.0:
            verts = verts[::-1].copy()
        if not _is_simple(verts):
            raise DegenerateFootprint("polygon is self-intersecting")
        verts = verts - _polygon_centroid(verts)
        verts.setflags(write=False)
        return cls(vertices=verts, radius=None, height=height, density=density)

    @classmethod
    def circle(cls, radius: float, height: float = 0.5, density: float = 1.0) -> "Footprint":
        if radius <= 0.0:
            raise DegenerateFootprint("circle radius must be positive")
        return cls(vertices=None, radius=float(radius), height=height, density=density)

    @property
    def is_circle(self) -> bool:
        return self.radius is not None

    @property
    def circumradius(self) -> float:
        if self.is_circle:
            return float(self.radius)
        return float(np.max(np.hypot(self.vertices[:, 0], self.vertices[:, 1])))

    @property
    def perimeter(self) -> float:
        if self.is_circle:
            return TWO_PI * self.radius
        d = np.diff(np.vstack([self.vertices, self.vertices[:1]]), axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @property
    def area(self) -> float:
        if self.is_circle:
            return math.pi * self.radius**2
        return abs(_polygon_area(self.vertices))

    def signed_distance(self, point) -> float:
        """Signed distance from an object-frame point to the boundary (< 0 inside)."""
        px, py = float(point[0]), float(point[1])
        if self.is_circle:
            return math.hypot(px, py) - self.radius
        return kernels.poly_signed_distance(self.vertices, px, py)

    def closest_boundary(self, point):
        """Closest object-frame boundary point and the inward normal angle there."""
        px, py = float(point[0]), float(point[1])
        if self.is_circle:
            r = math.hypot(px, py)
            if r < 1e-12:
                return np.array([self.radius, 0.0]), math.pi
            q = np.array([px, py]) * (self.radius / r)
            return q, wrap_angle(math.atan2(-q[1], -q[0]))
        cx, cy, edge = kernels.poly_closest_point(self.vertices, px, py)
        return np.array([cx, cy]), self._edge_inward_angle(edge)

    def _edge_inward_angle(self, edge: int) -> float:
        a = self.vertices[edge]
        b = self.vertices[(edge + 1) % len(self.vertices)]
        # CCW polygon: (-dy, dx) points into the interior
        return wrap_angle(math.atan2(b[0] - a[0], -(b[1] - a[1])))

    def concave_vertices(self) -> np.ndarray:
        """Object-frame positions of reflex (concave) vertices; empty for circles."""
        if self.is_circle:
            return np.empty((0, 2))
        v = self.vertices
        prev = np.roll(v, 1, axis=0)
        nxt = np.roll(v, -1, axis=0)
        e1 = v - prev
        e2 = nxt - v
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        return v[cross < -1e-12]

    def boundary_samples(self, spacing: float = 0.05) -> np.ndarray:
        """Dense object-frame boundary points, roughly `spacing` apart."""
        if self.is_circle:
            n = max(8, int(math.ceil(self.perimeter / spacing)))
            ang = np.linspace(0.0, TWO_PI, n, endpoint=False)
            return np.column_stack([np.cos(ang), np.sin(ang)]) * self.radius
        pts = []
        verts = self.vertices
        for i in range(len(verts)):
            a, b = verts[i], verts[(i + 1) % len(verts)]
            seg = b - a
            length = float(np.hypot(seg[0], seg[1]))
            n = max(1, int(math.ceil(length / spacing)))
            t = np.arange(n) / n
            pts.append(a + t[:, None] * seg)
        return np.vstack(pts)


@dataclass(frozen=True)
class ContactPoint:
    """Boundary point with inward-normal pushing direction, object frame."""

    position: np.ndarray
    pushing_direction: float
    unit_torque: float
    concave_flag: bool = False


@dataclass
class CandidateSet:
    """Ordered candidate contact points with stable indices for one episode."""

    points: list[ContactPoint]
    source_footprint: Footprint
    w_segment_used: list[float | None]
    positions: np.ndarray = field(init=False)
    directions: np.ndarray = field(init=False)
    unit_torques: np.ndarray = field(init=False)
    concave_flags: np.ndarray = field(init=False)

    def __post_init__(self):
        self.positions = np.array([p.position for p in self.points], dtype=float)
        self.directions = np.array([p.pushing_direction for p in self.points])
        self.unit_torques = np.array([p.unit_torque for p in self.points])
        self.concave_flags = np.array([p.concave_flag for p in self.points], dtype=bool)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class WorldCandidateSet:
    """Candidate set rigidly transformed into the world frame.

    Iterating yields (position, pushing_direction) pairs in candidate-index
    order; torques are pose-invariant and carried over unchanged.
    """

    positions: np.ndarray
    directions: np.ndarray
    unit_torques: np.ndarray
    concave_flags: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int):
        return self.positions[i], self.directions[i]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def _unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def _cross2(a, b) -> float:
    return float(a[0]) * float(b[1]) - float(a[1]) * float(b[0])


def generate_contact_points(
    footprint: Footprint,
    w_min: float = DEFAULT_W_MIN,
    robot_radius: float = DEFAULT_ROBOT_RADIUS,
) -> CandidateSet:
    """Discretize the footprint boundary into candidate contact points.

    Every polygon edge of length L >= w_min is split into floor(L / w_min)
    equal segments; the midpoint of each becomes a candidate. Shorter edges
    yield none. A circle boundary is treated as one closed curve divided
    into floor(2*pi*r / w_min) equal arcs.

    Candidates whose robot placement disc would penetrate the footprint
    (which happens near concave corners) are shifted along their edge away
    from the corner by robot_radius, or dropped if still infeasible.
    Candidates within 2*robot_radius of a concave vertex are flagged.
    """
    if w_min <= 0.0:
        raise ValueError("w_min must be positive")
    if footprint.is_circle:
        n = int(footprint.perimeter / w_min)
        if n < 1:
            raise NoCandidates("circle perimeter shorter than w_min")
        points = []
        for m in range(n):
            theta = TWO_PI * m / n
            pos = footprint.radius * _unit(theta)
            direction = wrap_angle(theta + math.pi)
            points.append(ContactPoint(pos, direction, 0.0, False))
        return CandidateSet(points, footprint, [footprint.perimeter / n])

    verts = footprint.vertices
    concave = footprint.concave_vertices()
    points: list[ContactPoint] = []
    widths: list[float | None] = []
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        seg = b - a
        length = float(np.hypot(seg[0], seg[1]))
        k = int(length / w_min + 1e-12)
        if k < 1:
            widths.append(None)
            continue
        w_seg = length / k
        widths.append(w_seg)
        e_dir = seg / length
        inward = wrap_angle(math.atan2(seg[0], -seg[1]))
        for j in range(k):
            pos = a + (j + 0.5) * w_seg * e_dir
            cp = _make_candidate(footprint, pos, inward, concave, robot_radius, a, b)
            if cp is not None:
                points.append(cp)
    if not points:
        raise NoCandidates("every edge is shorter than w_min")
    points = _drop_too_close(points, w_min)
    return CandidateSet(points, footprint, widths)


def _make_candidate(footprint, pos, inward, concave, robot_radius, edge_a, edge_b):
    u = _unit(inward)
    if _disc_fits(footprint, pos, u, robot_radius):
        return ContactPoint(pos, inward, _cross2(pos, u),
                            _near_concave(pos, concave, robot_radius))
    # shift along the edge, away from the nearest concave corner
    if len(concave) == 0:
        return None
    d = np.hypot(concave[:, 0] - pos[0], concave[:, 1] - pos[1])
    corner = concave[int(np.argmin(d))]
    edge_vec = edge_b - edge_a
    edge_len = float(np.hypot(edge_vec[0], edge_vec[1]))
    e_dir = edge_vec / edge_len
    away = e_dir if np.dot(pos - corner, e_dir) >= 0.0 else -e_dir
    shifted = pos + away * robot_radius
    t = float(np.dot(shifted - edge_a, e_dir))
    if t < 0.0 or t > edge_len:
        return None
    if not _disc_fits(footprint, shifted, u, robot_radius):
        return None
    return ContactPoint(shifted, inward, _cross2(shifted, u),
                        _near_concave(shifted, concave, robot_radius))


def _disc_fits(footprint, pos, inward_unit, robot_radius) -> bool:
    center = pos - robot_radius * inward_unit
    return footprint.signed_distance(center) >= robot_radius - 1e-9


def _near_concave(pos, concave, robot_radius) -> bool:
    if len(concave) == 0:
        return False
    d = np.hypot(concave[:, 0] - pos[0], concave[:, 1] - pos[1])
    return bool(np.min(d) <= 2.0 * robot_radius)


def _drop_too_close(points, w_min):
    kept: list[ContactPoint] = []
    for p in points:
        ok = True
        for q in kept:
            if float(np.hypot(*(p.position - q.position))) < 0.5 * w_min:
                ok = False
                break
        if ok:
            kept.append(p)
    return kept


def distance_to_boundary(footprint: Footprint, world_point, object_pose) -> float:
    """Signed distance from a world point to the posed boundary (< 0 inside)."""
    local = to_object_points(object_pose, world_point)[0]
    return footprint.signed_distance(local)


def closest_boundary_world(footprint: Footprint, world_point, object_pose):
    """Closest boundary point and inward normal angle, both in world frame."""
    pose = np.asarray(object_pose, dtype=float)
    local = to_object_points(pose, world_point)[0]
    q, inward = footprint.closest_boundary(local)
    return to_world_points(pose, q)[0], wrap_angle(inward + pose[2])


def to_world(candidates: CandidateSet, object_pose) -> WorldCandidateSet:
    """Transform a candidate set into the world frame, preserving indices."""
    pose = np.asarray(object_pose, dtype=float)
    positions = to_world_points(pose, candidates.positions)
    directions = np.array([wrap_angle(d + pose[2]) for d in candidates.directions])
    return WorldCandidateSet(
        positions=positions,
        directions=directions,
        unit_torques=candidates.unit_torques.copy(),
        concave_flags=candidates.concave_flags.copy(),
    )
