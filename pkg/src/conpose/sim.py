"""Deterministic fixed-step quasi-static pushing world.

Robots are differential-drive discs integrated with the exact unicycle arc
update. The object is a quasi-static surrogate: its linear velocity is
proportional to the net contact force and its angular velocity to the net
contact torque about the center. A robot transmits a unit force along its
body heading whenever its disc touches the boundary and its heading stays
within pi/3 of the local inward normal; per-step Gaussian slip noise on the
force directions models contact uncertainty.

``run_episode`` closes the loop: select a pushing configuration for the
current key waypoint, match and switch robots to it, push until the
waypoint is reached, the object deviates from the planned path, or progress
stalls, then re-select - until the object center reaches the goal.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry, planner
from .assignment import LocalNoPath, SwitchPlan, match, plan_switch
from .geometry import (
    Footprint,
    closest_boundary_world,
    distance_to_boundary,
    to_world,
    wrap_angle,
)
from .scenario import Scenario
from .selection import MalformedProposal, SelectionOutcome
from .planner import angular_tolerance, point_to_path_distance, target_direction

MODE_PUSHING = "pushing"
MODE_SWITCHING = "switching"
MODE_REALIGNING = "realigning"
MODE_IDLE = "idle"

V_MAX_PUSH = 0.2
V_MAX_SWITCH = 0.1
OMEGA_MAX = 1.0

#: Disc-edge clearance band within which a robot counts as touching, meters.
CONTACT_TOL = 0.01

#: Maximum heading error against the local inward normal for force transfer.
CONTACT_CONE = math.pi / 3.0

DOCK_TOL = 0.08


@dataclass
class SimConfig:
    dt: float = 0.05
    mobility_gain: float = 0.05
    rotation_gain: float = 0.1
    slip_noise_std: float = 0.05
    d_repl: float = 0.5
    t_repl: float = 20.0
    goal_tolerance: float = 0.5
    max_configs: int = 10
    rng_seed: int = 0
    k_v: float = 1.0
    k_w1: float = 2.0
    k_w2: float = 2.0
    align_threshold: float = math.pi / 6.0
    wp_reached_tol: float = 0.3
    progress_eps: float = 0.05
    max_total_configs: int = 80
    max_sim_time: float = 3600.0
    switch_timeout: float = 360.0
    realign_timeout: float = 8.0
    log_interval: float = 1.0
    record_walltime: bool = False
    i_max: int = 5


@dataclass
class RobotState:
    pose: np.ndarray
    assigned_cp: int | None = None
    mode: str = MODE_IDLE
    v: float = 0.0
    omega: float = 0.0


@dataclass
class ObjectState:
    pose: np.ndarray
    twist: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class EpisodeRecord:
    """Per-episode metrics and trajectory log."""

    success: bool = False
    z: int = 0
    t_sel: list[tuple[int, float]] = field(default_factory=list)
    t_exe: float = 0.0
    t_sw: list[float] = field(default_factory=list)
    failure_cause: str | None = None
    trajectory: list[dict] = field(default_factory=list)
    k_waypoints: int = 0
    m_candidates: int = 0
    path: list | None = None
    key_waypoints: list | None = None
    candidates_world0: list | None = None
    scenario: dict | None = None
    selector: str = ""
    initializer: str = ""
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "z": self.z,
            "t_sel": [[int(e), float(w)] for e, w in self.t_sel],
            "t_exe": self.t_exe,
            "t_sw": list(self.t_sw),
            "failure_cause": self.failure_cause,
            "trajectory": self.trajectory,
            "k_waypoints": self.k_waypoints,
            "m_candidates": self.m_candidates,
            "path": self.path,
            "key_waypoints": self.key_waypoints,
            "candidates_world0": self.candidates_world0,
            "scenario": self.scenario,
            "selector": self.selector,
            "initializer": self.initializer,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        rec = cls()
        for key, val in d.items():
            if hasattr(rec, key):
                setattr(rec, key, val)
        rec.t_sel = [(int(e), float(w)) for e, w in rec.t_sel]
        return rec


def step_robot(
    state: RobotState,
    v: float,
    omega: float,
    dt: float,
    footprint: Footprint | None = None,
    object_pose=None,
    obstacles=(),
    robot_radius: float = geometry.DEFAULT_ROBOT_RADIUS,
    arena=None,
) -> RobotState:
    """Integrate one unicycle step and resolve body overlap.

    Uses the exact constant-twist arc (not forward Euler) so long curved
    segments match the closed-form trajectory. Speed limits depend on the
    robot mode; |omega| is capped at OMEGA_MAX. If world geometry is given,
    the robot disc is projected out of the object, obstacles, and arena.
    """
    v_max = V_MAX_SWITCH if state.mode in (MODE_SWITCHING, MODE_REALIGNING) else V_MAX_PUSH
    v = min(max(v, -v_max), v_max)
    omega = min(max(omega, -OMEGA_MAX), OMEGA_MAX)
    x, y, th = float(state.pose[0]), float(state.pose[1]), float(state.pose[2])
    if abs(omega) < 1e-12:
        x += v * math.cos(th) * dt
        y += v * math.sin(th) * dt
    else:
        th1 = th + omega * dt
        r = v / omega
        x += r * (math.sin(th1) - math.sin(th))
        y += -r * (math.cos(th1) - math.cos(th))
    th = wrap_angle(th + omega * dt)
    pose = np.array([x, y, th])
    if footprint is not None:
        # a pushing robot leans into the boundary; a repositioning robot is
        # deflected just outside the contact band so gliding past the object
        # transmits no force
        eps = 0.0 if state.mode == MODE_PUSHING else 1.5 * CONTACT_TOL
        pose = _resolve_overlap(
            pose, footprint, object_pose, obstacles, robot_radius, arena, eps
        )
    return replace(state, pose=pose, v=v, omega=omega)


def _resolve_overlap(pose, footprint, object_pose, obstacles, robot_radius, arena, eps=0.0):
    p = pose[:2]
    bodies = [(footprint, object_pose)] if footprint is not None else []
    bodies += list(obstacles)
    for fp, body_pose in bodies:
        reach = fp.circumradius + robot_radius + 0.2
        if abs(p[0] - body_pose[0]) > reach or abs(p[1] - body_pose[1]) > reach:
            continue
        d = distance_to_boundary(fp, p, body_pose)
        if d < robot_radius + eps:
            q, inward = closest_boundary_world(fp, p, body_pose)
            out = np.array([-math.cos(inward), -math.sin(inward)])
            p = q + out * (robot_radius + eps)
    if arena is not None:
        p[0] = min(max(p[0], robot_radius), float(arena[0]) - robot_radius)
        p[1] = min(max(p[1], robot_radius), float(arena[1]) - robot_radius)
    return np.array([p[0], p[1], pose[2]])


def push_control(
    robot: RobotState,
    cp_world: np.ndarray,
    cp_direction: float,
    footprint: Footprint,
    object_pose,
    cfg: SimConfig,
) -> tuple[float, float]:
    """P-control toward the assigned contact point.

    Maintaining boundary contact is prioritized over holding the exact
    contact point: linear speed follows the distance to the boundary, while
    the angular command blends alignment with the pushing direction and the
    bearing toward the contact point. While the pushing-direction error
    exceeds the alignment threshold the controller emits a pure turn step
    (v = 0), so curved tracking alternates between turning and pushing.

    A robot that has drifted far from its contact point steers by bearing
    alone until it returns; in a turn step whose two angular terms nearly
    cancel, the direction term alone drives the turn so the robot cannot
    freeze with both errors large.
    """
    x, y, th = robot.pose
    e_dir = wrap_angle(cp_direction - th)
    dx, dy = cp_world[0] - x, cp_world[1] - y
    d_cp = math.hypot(dx, dy)
    e_bearing = 0.0 if d_cp < 1e-9 else wrap_angle(math.atan2(dy, dx) - th)

    far = 4.0 * geometry.DEFAULT_ROBOT_RADIUS
    if d_cp > far:
        # lost the contact point: drive back by bearing first
        omega = min(max(cfg.k_w2 * e_bearing, -OMEGA_MAX), OMEGA_MAX)
        if abs(e_bearing) > cfg.align_threshold:
            return 0.0, omega
        d = distance_to_boundary(footprint, (x, y), object_pose)
        return min(max(cfg.k_v * d, 0.0), V_MAX_PUSH), omega

    omega = cfg.k_w1 * e_dir + cfg.k_w2 * e_bearing
    if abs(e_dir) > cfg.align_threshold:
        if abs(omega) < 0.25 * cfg.k_w1 * abs(e_dir):  # terms cancel
            omega = cfg.k_w1 * e_dir
        return 0.0, min(max(omega, -OMEGA_MAX), OMEGA_MAX)
    omega = min(max(omega, -OMEGA_MAX), OMEGA_MAX)
    d = distance_to_boundary(footprint, (x, y), object_pose)
    v = min(max(cfg.k_v * d, 0.0), V_MAX_PUSH)
    return v, omega


def pure_pursuit(
    robot: RobotState,
    path: np.ndarray,
    lookahead: float | None = None,
    v_max: float = V_MAX_SWITCH,
    goal_tol: float = 0.05,
) -> tuple[float, float]:
    """Adaptive pure pursuit toward the lookahead point on a path.

    The lookahead distance grows linearly with the current speed, clamped
    to [0.2, 0.6] m; speed is scaled down with path curvature. When the
    lookahead point falls behind the robot it turns in place first.
    """
    path = np.atleast_2d(np.asarray(path, dtype=float))
    x, y, th = robot.pose
    if math.hypot(path[-1, 0] - x, path[-1, 1] - y) <= goal_tol:
        return 0.0, 0.0
    if lookahead is None:
        lookahead = min(max(0.2 + 2.0 * abs(robot.v), 0.2), 0.6)
    target = _lookahead_point(path, (x, y), lookahead, 0)[0]
    err = wrap_angle(math.atan2(target[1] - y, target[0] - x) - th)
    if abs(err) > 0.5 * math.pi:
        return 0.0, min(max(2.0 * err, -OMEGA_MAX), OMEGA_MAX)
    curvature = 2.0 * math.sin(err) / lookahead
    v = v_max / (1.0 + 2.0 * abs(curvature))
    omega = min(max(v * curvature * 2.0 + 1.0 * err, -OMEGA_MAX), OMEGA_MAX)
    return v, omega


def _lookahead_point(path, pos, lookahead, start_idx):
    """Lookahead target and nearest segment index, scanning forward only."""
    px, py = pos
    best_d2 = math.inf
    best_i = start_idx
    best_t = 0.0
    for i in range(start_idx, len(path) - 1):
        ax, ay = path[i]
        ex, ey = path[i + 1, 0] - ax, path[i + 1, 1] - ay
        len2 = ex * ex + ey * ey
        t = 0.0 if len2 <= 0.0 else min(max(((px - ax) * ex + (py - ay) * ey) / len2, 0.0), 1.0)
        dx, dy = px - (ax + t * ex), py - (ay + t * ey)
        d2 = dx * dx + dy * dy
        if d2 < best_d2:
            best_d2 = d2
            best_i = i
            best_t = t
    if len(path) == 1:
        return path[0], 0
    # walk the remaining arc length from the nearest point
    remaining = lookahead
    i, t = best_i, best_t
    cur = np.array([path[i, 0] + t * (path[i + 1, 0] - path[i, 0]),
                    path[i, 1] + t * (path[i + 1, 1] - path[i, 1])])
    while i < len(path) - 1:
        seg_end = path[i + 1]
        step = float(np.hypot(*(seg_end - cur)))
        if step >= remaining and step > 0.0:
            return cur + (seg_end - cur) * (remaining / step), best_i
        remaining -= step
        cur = seg_end
        i += 1
    return path[-1], best_i


class PurePursuitTracker:
    """Pure pursuit with forward-progress memory for self-approaching paths."""

    def __init__(self, path: np.ndarray, goal_tol: float = DOCK_TOL):
        self.path = np.atleast_2d(np.asarray(path, dtype=float))
        self.goal_tol = goal_tol
        self.index = 0

    def done(self, robot: RobotState) -> bool:
        x, y, _ = robot.pose
        return math.hypot(self.path[-1, 0] - x, self.path[-1, 1] - y) <= self.goal_tol

    def control(self, robot: RobotState) -> tuple[float, float]:
        if self.done(robot):
            return 0.0, 0.0
        x, y, th = robot.pose
        lookahead = min(max(0.2 + 2.0 * abs(robot.v), 0.2), 0.6)
        window_end = min(self.index + 40, len(self.path) - 1)
        sub = self.path[self.index:window_end + 1]
        target, rel_idx = _lookahead_point(sub, (x, y), lookahead, 0)
        self.index += rel_idx
        err = wrap_angle(math.atan2(target[1] - y, target[0] - x) - th)
        if abs(err) > 0.5 * math.pi:
            return 0.0, min(max(2.0 * err, -OMEGA_MAX), OMEGA_MAX)
        curvature = 2.0 * math.sin(err) / lookahead
        v = V_MAX_SWITCH / (1.0 + 2.0 * abs(curvature))
        omega = min(max(v * curvature * 2.0 + 1.0 * err, -OMEGA_MAX), OMEGA_MAX)
        return v, omega


def detect_contacts(
    robots: list[RobotState],
    footprint: Footprint,
    object_pose,
    robot_radius: float,
) -> list[tuple[np.ndarray, float]]:
    """Contact points and force directions of robots currently pushing.

    A robot transmits force iff its disc edge is within CONTACT_TOL of the
    boundary and its heading is within CONTACT_CONE of the local inward
    normal. The force acts at the closest boundary point, directed along
    the inward normal there (single-point contact transmits no tangential
    force from a round body).
    """
    contacts = []
    for robot in robots:
        p = robot.pose[:2]
        d_edge = distance_to_boundary(footprint, p, object_pose) - robot_radius
        if abs(d_edge) > CONTACT_TOL:
            continue
        q, inward = closest_boundary_world(footprint, p, object_pose)
        if abs(wrap_angle(robot.pose[2] - inward)) > CONTACT_CONE:
            continue
        contacts.append((q, float(inward)))
    return contacts


def step_object(
    obj: ObjectState,
    contacts: list[tuple[np.ndarray, float]],
    footprint: Footprint,
    obstacles,
    cfg: SimConfig,
    rng: np.random.Generator,
    boundary_samples: np.ndarray | None = None,
    arena=None,
) -> ObjectState:
    """Quasi-static object update from the applied contact forces.

    Twist is proportional to the accumulated wrench; each force direction
    is perturbed by slip noise when configured. Contact with an obstacle or
    an arena wall cancels the inward normal component of the motion
    (sliding allowed).
    """
    fx = fy = tau = 0.0
    cx, cy = float(obj.pose[0]), float(obj.pose[1])
    for point, direction in contacts:
        if cfg.slip_noise_std > 0.0:
            direction = direction + rng.normal(0.0, cfg.slip_noise_std)
        ux, uy = math.cos(direction), math.sin(direction)
        fx += ux
        fy += uy
        tau += (point[0] - cx) * uy - (point[1] - cy) * ux
    vx = cfg.mobility_gain * fx
    vy = cfg.mobility_gain * fy
    w = cfg.rotation_gain * tau
    if vx == 0.0 and vy == 0.0 and w == 0.0:
        return replace(obj, twist=np.zeros(3))
    if arena is not None and boundary_samples is not None:
        vx, vy = _slide_on_walls(obj.pose, boundary_samples, arena, vx, vy)
    new_pose = np.array(
        [cx + vx * cfg.dt, cy + vy * cfg.dt, wrap_angle(obj.pose[2] + w * cfg.dt)]
    )
    if obstacles:
        hit, normal = _object_obstacle_hit(footprint, new_pose, obstacles, boundary_samples)
        if hit:
            vn = vx * normal[0] + vy * normal[1]
            if vn < 0.0:
                vx -= vn * normal[0]
                vy -= vn * normal[1]
            new_pose = np.array(
                [cx + vx * cfg.dt, cy + vy * cfg.dt, wrap_angle(obj.pose[2] + w * cfg.dt)]
            )
            hit, _ = _object_obstacle_hit(footprint, new_pose, obstacles, boundary_samples)
            if hit:
                return replace(obj, twist=np.zeros(3))
    return ObjectState(pose=new_pose, twist=np.array([vx, vy, w]))


def _slide_on_walls(pose, boundary_samples, arena, vx, vy):
    """Cancel velocity components that would push the object into a wall."""
    world = geometry.to_world_points(pose, boundary_samples)
    if vx < 0.0 and float(np.min(world[:, 0])) <= 0.0:
        vx = 0.0
    if vx > 0.0 and float(np.max(world[:, 0])) >= float(arena[0]):
        vx = 0.0
    if vy < 0.0 and float(np.min(world[:, 1])) <= 0.0:
        vy = 0.0
    if vy > 0.0 and float(np.max(world[:, 1])) >= float(arena[1]):
        vy = 0.0
    return vx, vy


def _object_obstacle_hit(footprint, pose, obstacles, boundary_samples):
    if boundary_samples is None:
        boundary_samples = footprint.boundary_samples(0.1)
    world = geometry.to_world_points(pose, boundary_samples)
    for fp, obs_pose in obstacles:
        coarse = math.hypot(pose[0] - obs_pose[0], pose[1] - obs_pose[1])
        if coarse > footprint.circumradius + fp.circumradius + 0.3:
            continue
        local = geometry.to_object_points(obs_pose, world)
        if fp.is_circle:
            d = np.hypot(local[:, 0], local[:, 1]) - fp.radius
        else:
            from . import kernels

            d = kernels.poly_signed_distance_batch(
                np.ascontiguousarray(fp.vertices), local[:, 0], local[:, 1]
            )
        i = int(np.argmin(d))
        if d[i] < 0.0:
            q, _ = closest_boundary_world(fp, world[i], obs_pose)
            # contact normal points from the obstacle toward the object center
            away = pose[:2] - q
            norm = float(np.hypot(away[0], away[1]))
            if norm < 1e-9:
                away = np.array([1.0, 0.0])
                norm = 1.0
            return True, away / norm
    return False, None


class _Episode:
    """Mutable state of one closed-loop pushing episode."""

    def __init__(self, scenario: Scenario, selector, cfg: SimConfig):
        self.sc = scenario
        self.selector = selector
        self.cfg = cfg
        self.rng = np.random.default_rng(
            np.random.SeedSequence([int(scenario.seed), int(cfg.rng_seed)])
        )
        self.footprint = scenario.object_footprint
        self.robot_radius = scenario.params.robot_radius
        self.obj = ObjectState(pose=np.array(scenario.start_pose, dtype=float))
        self.robots = [
            RobotState(pose=np.array(p, dtype=float))
            for p in scenario.initial_robot_poses()
        ]
        self.t = 0.0
        self.record = EpisodeRecord(
            scenario=scenario.to_dict(),
            selector=getattr(selector, "method", "custom"),
            initializer=getattr(selector, "initializer_name", ""),
            seed=scenario.seed,
        )
        self._next_log = 0.0
        self._boundary = self.footprint.boundary_samples(0.1)
        self._mode = "select"

    # -- world stepping -----------------------------------------------------

    def step_world(self, commands, apply_forces=True) -> float:
        """Advance every robot with its command, then the object.

        Returns the smallest pairwise robot distance observed before disc
        separation (the switch loop treats interpenetration as a collision).
        """
        for robot, (v, w) in zip(self.robots, commands):
            new = step_robot(
                robot, v, w, self.cfg.dt, self.footprint, self.obj.pose,
                self.sc.obstacles, self.robot_radius, self.sc.arena,
            )
            robot.pose = new.pose
            robot.v = new.v
            robot.omega = new.omega
        min_pair = self._separate_robots()
        if apply_forces:
            contacts = detect_contacts(
                self.robots, self.footprint, self.obj.pose, self.robot_radius
            )
            self.obj = step_object(
                self.obj, contacts, self.footprint, self.sc.obstacles,
                self.cfg, self.rng, self._boundary, self.sc.arena,
            )
            for robot in self.robots:
                eps = 0.0 if robot.mode == MODE_PUSHING else 1.5 * CONTACT_TOL
                robot.pose = _resolve_overlap(
                    robot.pose, self.footprint, self.obj.pose,
                    self.sc.obstacles, self.robot_radius, self.sc.arena, eps,
                )
        self.t += self.cfg.dt
        self._log_state()
        return min_pair

    def _separate_robots(self) -> float:
        """Push overlapping robot discs apart symmetrically; rigid bodies."""
        n = len(self.robots)
        min_dist = math.inf
        for i in range(n):
            for j in range(i + 1, n):
                pi = self.robots[i].pose
                pj = self.robots[j].pose
                dx, dy = pj[0] - pi[0], pj[1] - pi[1]
                d = math.hypot(dx, dy)
                min_dist = min(min_dist, d)
                overlap = 2.0 * self.robot_radius - d
                if overlap > 0.0:
                    if d < 1e-9:
                        dx, dy, d = 1.0, 0.0, 1.0
                    push = 0.5 * overlap / d
                    pi[0] -= dx * push
                    pi[1] -= dy * push
                    pj[0] += dx * push
                    pj[1] += dy * push
        return min_dist

    def _log_state(self):
        if self.t + 1e-9 < self._next_log:
            return
        self._next_log += self.cfg.log_interval
        self.record.trajectory.append(
            {
                "t": round(self.t, 6),
                "object": [round(float(v), 6) for v in self.obj.pose],
                "robots": [[round(float(v), 6) for v in r.pose] for r in self.robots],
                "config": list(self.active_config) if self.active_config else [],
                "mode": self._mode,
            }
        )

    # -- episode ------------------------------------------------------------

    def run(self) -> EpisodeRecord:
        cfg = self.cfg
        sc = self.sc
        rec = self.record
        try:
            costmap = planner.build_costmap(
                sc.arena, sc.obstacles, sc.r_safety,
                sc.params.resolution, sc.params.c_max,
            )
            path = planner.plan_object_path(costmap, sc.start_pose[:2], sc.goal)
            key_wps = planner.simplify_path(path, sc.params.rdp_epsilon)
        except planner.PlannerError as exc:
            rec.failure_cause = f"planning:{type(exc).__name__}"
            return rec
        self.path = path
        rec.k_waypoints = len(key_wps)
        rec.path = path.waypoints.tolist()
        rec.key_waypoints = key_wps.tolist()

        candidates = geometry.generate_contact_points(
            self.footprint, sc.params.w_min, self.robot_radius
        )
        self.candidates = candidates
        rec.m_candidates = len(candidates)
        rec.candidates_world0 = geometry.to_world(
            candidates, self.obj.pose
        ).positions.tolist()

        self.active_config = None
        self.wp_index = 1 if len(key_wps) > 1 else 0
        no_progress_streak = 0

        while True:
            if self._goal_reached():
                rec.success = True
                break
            if self.t > cfg.max_sim_time:
                rec.failure_cause = "timeout"
                break
            if rec.z >= cfg.max_total_configs:
                rec.failure_cause = "max_configs"
                break

            # --- select -----------------------------------------------------
            wp = self._current_wp(key_wps)
            phi = target_direction(self.obj.pose[:2], wp)
            d_wp = float(np.hypot(*(wp - self.obj.pose[:2])))
            eps = angular_tolerance(cfg.d_repl, d_wp)
            world_cands = to_world(candidates, self.obj.pose)
            t0 = time.perf_counter()
            try:
                outcome: SelectionOutcome = self.selector(
                    world_cands, phi, eps, sc.n_robots, self.rng
                )
            except MalformedProposal:
                rec.failure_cause = "malformed_proposal"
                break
            wall = time.perf_counter() - t0 if cfg.record_walltime else 0.0
            rec.z += 1
            rec.t_sel.append((outcome.evaluations_used, wall))
            if outcome.configuration is None:
                rec.failure_cause = "selection_failure"
                break

            # --- switch -----------------------------------------------------
            t_switch_start = self.t
            try:
                ok = self._execute_switch(world_cands, outcome.configuration.indices)
            except LocalNoPath:
                # a robot is boxed in right now: keep pushing on the old
                # assignment and let the triggers force another attempt
                if any(r.assigned_cp is None for r in self.robots):
                    rec.t_sw.append(self.t - t_switch_start)
                    rec.failure_cause = "local_no_path"
                    break
                ok = True
            rec.t_sw.append(self.t - t_switch_start)
            if not ok:
                break  # failure cause already recorded

            # --- push -------------------------------------------------------
            trigger = self._push_until_trigger(key_wps)
            if trigger == "goal":
                rec.success = True
                break
            if trigger in ("timeout", "out_of_arena"):
                rec.failure_cause = trigger
                break
            if trigger == "no_progress":
                no_progress_streak += 1
                if no_progress_streak >= cfg.max_configs:
                    rec.failure_cause = "no_progress"
                    break
            else:
                no_progress_streak = 0

        rec.t_exe = self.t
        return rec

    def _goal_reached(self) -> bool:
        return (
            float(np.hypot(*(self.sc.goal - self.obj.pose[:2])))
            <= self.cfg.goal_tolerance
        )

    def _current_wp(self, key_wps) -> np.ndarray:
        # skip key waypoints that are already within reach
        while self.wp_index < len(key_wps) - 1:
            d = float(np.hypot(*(key_wps[self.wp_index] - self.obj.pose[:2])))
            if d > self.cfg.wp_reached_tol:
                break
            self.wp_index += 1
        return key_wps[min(self.wp_index, len(key_wps) - 1)]

    def _execute_switch(self, world_cands, config_indices) -> bool:
        """Realign, then move every robot to its newly assigned standoff."""
        cfg = self.cfg
        indices = list(config_indices)
        cp_world = np.array([world_cands.positions[i] for i in indices])
        robot_pos = np.array([r.pose[:2] for r in self.robots])
        matching = match(robot_pos, cp_world, self.obj.pose[:2])
        plan = plan_switch(
            matching, self.footprint, self.obj.pose, self.sc.obstacles,
            self.robot_radius, self.sc.arena,
        )
        self._mode = "realign"

        # realign heading with the current (old) contact point before moving
        old_headings = [
            None if r.assigned_cp is None
            else float(world_cands.directions[r.assigned_cp])
            for r in self.robots
        ]
        self._realign([h for h in old_headings], cfg.realign_timeout)

        for i, robot in enumerate(self.robots):
            robot.assigned_cp = indices[matching.assignment[i]]
        self.active_config = tuple(sorted(indices))
        self._mode = "switch"
        trackers = [
            None if plan.paths[i] is None else PurePursuitTracker(plan.paths[i])
            for i in range(len(self.robots))
        ]
        groups = (
            [list(plan.order)] if plan.mode == "concurrent"
            else [[i] for i in plan.order]
        )
        deadline = self.t + cfg.switch_timeout
        timed_out = False
        for group in groups:
            while not timed_out:
                if self.t > deadline:
                    # give up repositioning; pushing control walks the
                    # stragglers back to their contact points
                    timed_out = True
                    break
                moving = [
                    i for i in group
                    if trackers[i] is not None and not trackers[i].done(self.robots[i])
                ]
                if not moving:
                    break
                commands = []
                for i, robot in enumerate(self.robots):
                    if i in moving:
                        robot.mode = MODE_SWITCHING
                        v, w = trackers[i].control(robot)
                        if self._should_yield(i, moving):
                            v = 0.0
                        commands.append((v, w))
                    else:
                        robot.mode = MODE_IDLE
                        commands.append((0.0, 0.0))
                min_pair = self.step_world(commands)
                # light brushes are resolved physically; a deep overlap
                # attempt while repositioning counts as a crash
                if min_pair < 2.0 * self.robot_radius - 0.05:
                    self.record.failure_cause = "robot_collision"
                    return False

        # final realign onto the new pushing direction
        self._realign(list(plan.headings), cfg.realign_timeout)
        for robot in self.robots:
            robot.mode = MODE_PUSHING
        return True

    def _realign(self, headings, timeout: float) -> None:
        """Rotate robots in place toward their target heading (None skips)."""
        deadline = self.t + timeout
        while self.t < deadline:
            commands = []
            pending = False
            for robot, target in zip(self.robots, headings):
                robot.mode = MODE_REALIGNING
                if target is None:
                    commands.append((0.0, 0.0))
                    continue
                err = wrap_angle(target - robot.pose[2])
                if abs(err) > self.cfg.align_threshold:
                    pending = True
                    omega = min(max(self.cfg.k_w1 * err, -OMEGA_MAX), OMEGA_MAX)
                    commands.append((0.0, omega))
                else:
                    commands.append((0.0, 0.0))
            if not pending:
                break
            self.step_world(commands)

    def _should_yield(self, i: int, moving: list[int]) -> bool:
        """Lower-priority concurrent movers pause when too close to another."""
        pi = self.robots[i].pose[:2]
        for j in moving:
            if j == i:
                continue
            d = float(np.hypot(*(self.robots[j].pose[:2] - pi)))
            if d < 2.6 * self.robot_radius and moving.index(j) < moving.index(i):
                return True
        return False

    def _assigned_cp_world(self, idx: int) -> tuple[np.ndarray, float]:
        """World pose of one candidate under the current object pose."""
        ox, oy, oth = self.obj.pose
        c, s = math.cos(oth), math.sin(oth)
        px, py = self.candidates.positions[idx]
        pos = np.array([ox + c * px - s * py, oy + s * px + c * py])
        return pos, wrap_angle(float(self.candidates.directions[idx]) + oth)

    def _push_until_trigger(self, key_wps) -> str:
        """Push with the active configuration until a re-selection trigger."""
        cfg = self.cfg
        self._mode = "push"
        # legs that start beyond the threshold (residual deviation from the
        # previous leg) may keep pushing, but bounded: they re-trigger once
        # the deviation grows by half a threshold over the leg's start
        dev_start = point_to_path_distance(self.path.waypoints, self.obj.pose[:2])
        deviation_armed = dev_start <= 0.9 * cfg.d_repl
        window_start = self.t
        window_dist = float(np.hypot(*(self.sc.goal - self.obj.pose[:2])))
        while True:
            if self.t > cfg.max_sim_time:
                return "timeout"
            commands = []
            for robot in self.robots:
                robot.mode = MODE_PUSHING
                cp_pos, cp_dir = self._assigned_cp_world(robot.assigned_cp)
                commands.append(
                    push_control(robot, cp_pos, cp_dir, self.footprint, self.obj.pose, cfg)
                )
            self.step_world(commands)

            center = self.obj.pose[:2]
            if not (
                0.0 <= center[0] <= self.sc.arena[0]
                and 0.0 <= center[1] <= self.sc.arena[1]
            ):
                return "out_of_arena"
            if self._goal_reached():
                return "goal"

            # (i) key waypoint reached
            wp = key_wps[min(self.wp_index, len(key_wps) - 1)]
            if float(np.hypot(*(wp - center))) <= cfg.wp_reached_tol:
                self.wp_index = min(self.wp_index + 1, len(key_wps) - 1)
                return "waypoint"

            # (ii) deviation from the planned path, with re-arm hysteresis
            dev = point_to_path_distance(self.path.waypoints, center)
            if deviation_armed and dev > cfg.d_repl:
                return "deviation"
            if not deviation_armed:
                if dev > dev_start + 0.5 * cfg.d_repl:
                    return "deviation"
                if dev < 0.9 * cfg.d_repl:
                    deviation_armed = True

            # (iii) no measurable progress toward the goal within t_repl
            if self.t - window_start >= cfg.t_repl:
                d_now = float(np.hypot(*(self.sc.goal - center)))
                if window_dist - d_now < cfg.progress_eps:
                    return "no_progress"
                window_start = self.t
                window_dist = d_now


def run_episode(scenario: Scenario, selector, cfg: SimConfig | None = None) -> EpisodeRecord:
    """Run one closed-loop pushing episode and collect its metrics."""
    cfg = cfg or SimConfig()
    return _Episode(scenario, selector, cfg).run()
