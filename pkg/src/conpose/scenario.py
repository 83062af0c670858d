"""Scenario definition, JSON loading, validation, and fleet scaling.

A scenario file describes the arena, posed obstacle footprints, the pushed
object with its start pose and goal point, the robot fleet, and optional
parameter overrides. Footprints are written as
``{"circle": {"radius": r}}`` or ``{"polygon": {"vertices": [[x, y], ...]}}``.

For fleets larger than four robots, arena, obstacle, and object dimensions
(and all positions) are scaled by N/4 so feasible pushing configurations
keep existing at every fleet size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import DEFAULT_ROBOT_RADIUS, DEFAULT_W_MIN, Footprint

BUNDLED_SCENES = ("scene1", "scene2", "scene3", "scene4", "scene5")
BUNDLED_SHAPES = ("cuboid", "cylinder", "tshape")


class ParseError(Exception):
    pass


class ValidationError(Exception):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


@dataclass
class ScenarioParams:
    """Physics and selection knobs; every value has a working default."""

    w_min: float = DEFAULT_W_MIN
    robot_radius: float = DEFAULT_ROBOT_RADIUS
    resolution: float = 0.1
    rdp_epsilon: float = 0.25
    c_max: float = 10.0
    r_safety: float | None = None  # None: object circumradius + robot diameter


@dataclass
class Scenario:
    name: str
    arena: np.ndarray
    obstacles: list[tuple[Footprint, np.ndarray]]
    object_footprint: Footprint
    start_pose: np.ndarray
    goal: np.ndarray
    n_robots: int
    robot_poses: np.ndarray | None = None
    seed: int = 0
    shape_name: str = "custom"
    scale: float = 1.0
    params: ScenarioParams = field(default_factory=ScenarioParams)

    @property
    def r_safety(self) -> float:
        if self.params.r_safety is not None:
            return self.params.r_safety
        return self.object_footprint.circumradius + 2.0 * self.params.robot_radius

    def initial_robot_poses(self) -> np.ndarray:
        """Configured robot start poses, or a deterministic arc placement
        behind the object relative to the goal."""
        if self.robot_poses is not None:
            return np.array(self.robot_poses, dtype=float)
        n = self.n_robots
        away = math.atan2(
            self.start_pose[1] - self.goal[1], self.start_pose[0] - self.goal[0]
        )
        ring = self.object_footprint.circumradius + self.params.robot_radius + 0.3
        if n == 1:
            offsets = [0.0]
        else:
            offsets = np.linspace(-0.6, 0.6, n)
        poses = np.zeros((n, 3))
        for i, off in enumerate(offsets):
            ang = away + off
            poses[i, 0] = self.start_pose[0] + ring * math.cos(ang)
            poses[i, 1] = self.start_pose[1] + ring * math.sin(ang)
            poses[i, 2] = math.atan2(
                self.start_pose[1] - poses[i, 1], self.start_pose[0] - poses[i, 0]
            )
        return poses

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "arena": {"width": float(self.arena[0]), "height": float(self.arena[1])},
            "obstacles": [
                {"footprint": footprint_to_json(fp), "pose": np.asarray(p).tolist()}
                for fp, p in self.obstacles
            ],
            "object": {
                "footprint": footprint_to_json(self.object_footprint),
                "start": np.asarray(self.start_pose).tolist(),
                "goal": np.asarray(self.goal).tolist(),
            },
            "n_robots": self.n_robots,
            "robot_poses": None
            if self.robot_poses is None
            else np.asarray(self.robot_poses).tolist(),
            "seed": self.seed,
            "shape": self.shape_name,
            "scale": self.scale,
        }


def footprint_from_json(d: dict, where: str = "footprint") -> Footprint:
    if not isinstance(d, dict) or len(d) != 1:
        raise ValidationError(where, "expected one of 'circle' or 'polygon'")
    if "circle" in d:
        try:
            return Footprint.circle(float(d["circle"]["radius"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{where}.circle", str(exc)) from exc
    if "polygon" in d:
        try:
            return Footprint.polygon(d["polygon"]["vertices"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{where}.polygon", str(exc)) from exc
    raise ValidationError(where, f"unknown footprint kind {list(d)[0]!r}")


def footprint_to_json(fp: Footprint) -> dict:
    if fp.is_circle:
        return {"circle": {"radius": fp.radius}}
    return {"polygon": {"vertices": fp.vertices.tolist()}}


def _scene_text(name_or_path: str) -> tuple[str, str]:
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return p.read_text(encoding="utf-8"), p.stem
    asset = resources.files("conpose.assets.scenes").joinpath(f"{name_or_path}.json")
    if asset.is_file():
        return asset.read_text(encoding="utf-8"), name_or_path
    raise ParseError(f"scenario {name_or_path!r} is neither a file nor a bundled scene")


def load_shape(name: str) -> Footprint:
    asset = resources.files("conpose.assets.shapes").joinpath(f"{name}.json")
    if not asset.is_file():
        raise ParseError(f"unknown shape {name!r}")
    return footprint_from_json(json.loads(asset.read_text(encoding="utf-8")))


def load_scenario(
    path: str,
    n_robots: int | None = None,
    shape: str | None = None,
    seed: int | None = None,
) -> Scenario:
    """Parse, override, scale, and validate a scenario."""
    text, default_name = _scene_text(path)
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError("scenario root must be a JSON object")

    try:
        arena = np.array(
            [float(raw["arena"]["width"]), float(raw["arena"]["height"])]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("arena", str(exc)) from exc
    if arena[0] <= 0 or arena[1] <= 0:
        raise ValidationError("arena", "width and height must be positive")

    obstacles = []
    for i, od in enumerate(raw.get("obstacles", [])):
        fp = footprint_from_json(od.get("footprint"), f"obstacles[{i}].footprint")
        pose = np.asarray(od.get("pose", [0.0, 0.0, 0.0]), dtype=float)
        if pose.shape != (3,):
            raise ValidationError(f"obstacles[{i}].pose", "expected [x, y, theta]")
        obstacles.append((fp, pose))

    obj = raw.get("object")
    if not isinstance(obj, dict):
        raise ValidationError("object", "missing object section")
    shape_name = raw.get("shape", "custom")
    if shape is not None:
        footprint = load_shape(shape)
        shape_name = shape
    else:
        footprint = footprint_from_json(obj.get("footprint"), "object.footprint")
    start = np.asarray(obj.get("start", []), dtype=float)
    if start.shape != (3,):
        raise ValidationError("object.start", "expected [x, y, theta]")
    goal = np.asarray(obj.get("goal", []), dtype=float)
    if goal.shape != (2,):
        raise ValidationError("object.goal", "expected [x, y]")

    n = int(n_robots if n_robots is not None else raw.get("n_robots", 3))
    if n < 1:
        raise ValidationError("n_robots", "need at least one robot")
    robot_poses = raw.get("robot_poses")
    if robot_poses is not None:
        robot_poses = np.asarray(robot_poses, dtype=float)
        if robot_poses.ndim != 2 or robot_poses.shape[1] != 3:
            raise ValidationError("robot_poses", "expected [[x, y, theta], ...]")

    params = ScenarioParams()
    for key, val in (raw.get("params") or {}).items():
        if not hasattr(params, key):
            raise ValidationError(f"params.{key}", "unknown parameter")
        setattr(params, key, float(val))

    scenario = Scenario(
        name=raw.get("name", default_name),
        arena=arena,
        obstacles=obstacles,
        object_footprint=footprint,
        start_pose=start,
        goal=goal,
        n_robots=n,
        robot_poses=robot_poses,
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        shape_name=shape_name,
        params=params,
    )
    scenario = _apply_scale(scenario)
    _validate(scenario)
    return scenario


def _apply_scale(sc: Scenario) -> Scenario:
    s = max(1.0, sc.n_robots / 4.0)
    if s == 1.0:
        return sc
    def scale_fp(fp: Footprint) -> Footprint:
        if fp.is_circle:
            return Footprint.circle(fp.radius * s, fp.height, fp.density)
        return Footprint.polygon(fp.vertices * s, fp.height, fp.density)

    obstacles = [
        (scale_fp(fp), np.array([p[0] * s, p[1] * s, p[2]])) for fp, p in sc.obstacles
    ]
    robot_poses = None
    if sc.robot_poses is not None:
        robot_poses = sc.robot_poses.copy()
        robot_poses[:, :2] *= s
    return replace(
        sc,
        arena=sc.arena * s,
        obstacles=obstacles,
        object_footprint=scale_fp(sc.object_footprint),
        start_pose=np.array([sc.start_pose[0] * s, sc.start_pose[1] * s, sc.start_pose[2]]),
        goal=sc.goal * s,
        robot_poses=robot_poses,
        scale=s,
    )


def _point_in_obstacle(sc: Scenario, point) -> bool:
    from .geometry import distance_to_boundary

    return any(
        distance_to_boundary(fp, point, pose) <= 0.0 for fp, pose in sc.obstacles
    )


def _validate(sc: Scenario) -> None:
    for label, p in (("object.start", sc.start_pose[:2]), ("object.goal", sc.goal)):
        if not (0.0 < p[0] < sc.arena[0] and 0.0 < p[1] < sc.arena[1]):
            raise ValidationError(label, "outside the arena")
        if _point_in_obstacle(sc, p):
            raise ValidationError(label, "inside an obstacle")
    poses = sc.initial_robot_poses()
    if len(poses) != sc.n_robots:
        raise ValidationError("robot_poses", "pose count does not match n_robots")
    r = sc.params.robot_radius
    for i, p in enumerate(poses):
        if not (0.0 < p[0] < sc.arena[0] and 0.0 < p[1] < sc.arena[1]):
            raise ValidationError(f"robot_poses[{i}]", "outside the arena")
        if _point_in_obstacle(sc, p[:2]):
            raise ValidationError(f"robot_poses[{i}]", "inside an obstacle")
        for j in range(i):
            if float(np.hypot(*(p[:2] - poses[j][:2]))) < 2.0 * r:
                raise ValidationError(
                    f"robot_poses[{i}]", f"collides with robot {j} at spawn"
                )
