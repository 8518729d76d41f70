"""Deterministic hallway world: corridor, scripted pedestrians, events, episodes.

Pedestrians follow a preferred velocity along their lane and are pushed
by capped inverse-square repulsion from walls, each other and the robot.
The robot integrates its commanded twist exactly.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Pose2, Twist, arc, wrap_angle
from .errors import ConfigError
from .planner import PlannerConfig, execute_cycle
from .world import Cell, OccupancyGrid, inflate

EVENT_KINDS = ("Collision", "PersonalSpaceEntry", "HumanPathChange", "GoalReached", "Timeout")
PAPER_LENGTHS = (25.0, 50.0, 100.0)


@dataclass(frozen=True)
class ScenarioConfig:
    corridor_length: float = 50.0
    corridor_width: float = 3.0
    n_humans_same_dir: int = 3
    n_humans_opposing: int = 3
    human_speed: float = 1.0
    human_radius: float = 0.25
    robot_radius: float = 0.2
    robot_start: Pose2 | None = None   # None: 1 m from the near cap, in the robot lane
    robot_goal: Pose2 | None = None    # None: 1 m from the far cap, same lane
    sim_dt: float = 0.05
    max_episode_time: float = 240.0
    rng_seed: int = 0
    resolution: float = 0.1
    spawn_clearance: float = 4.0       # no pedestrian closer than this to the robot start
    spawn_spacing: float = 1.0         # min centre distance between pedestrians at spawn
    lane_jitter: float = 0.15
    k_rep: float = 0.3
    k_rep_wall: float = 0.05
    rep_range: float = 1.5
    rep_cap: float = 4.0
    tau: float = 0.5
    lookahead: float = 2.0
    personal_space: float = 0.5
    path_change_angle: float = 30.0    # degrees
    path_change_time: float = 0.5
    path_change_radius: float = 2.0

    def validate(self):
        if not (self.corridor_length > 2 and self.corridor_width > 4 * self.human_radius):
            raise ConfigError("corridor too small", "corridor_length")
        if not 0.0 <= self.human_speed <= 3.5:
            raise ConfigError(f"human_speed must lie in [0, 3.5], got {self.human_speed}", "human_speed")
        if min(self.n_humans_same_dir, self.n_humans_opposing) < 0:
            raise ConfigError("human counts must be non-negative", "n_humans_same_dir")
        if not self.sim_dt > 0:
            raise ConfigError("sim_dt must be positive", "sim_dt")
        if self.max_episode_time < 0:
            raise ConfigError("max_episode_time must be non-negative", "max_episode_time")
        if not self.resolution > 0:
            raise ConfigError("resolution must be positive", "resolution")

    @property
    def lane_y(self) -> tuple[float, float]:
        """(robot/same-direction lane, opposing lane) centre lines."""
        return (0.25 * self.corridor_width, 0.75 * self.corridor_width)

    def start_pose(self) -> Pose2:
        return self.robot_start or Pose2(1.0, self.lane_y[0], 0.0)

    def goal_pose(self) -> Pose2:
        return self.robot_goal or Pose2(self.corridor_length - 1.0, self.lane_y[0], 0.0)


@dataclass(frozen=True)
class SimEvent:
    kind: str
    time: float
    agent_id: int = -1


@dataclass
class Humans:
    ids: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    pref_speed: np.ndarray
    direction: np.ndarray  # +1 walks toward +x, -1 toward -x
    lane_y: np.ndarray
    active: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)


def corridor_grid(length, width, resolution=0.1) -> OccupancyGrid:
    """Walled corridor; interior is [0, length] x [0, width], walls one cell thick."""
    nx = int(round(length / resolution))
    ny = int(round(width / resolution))
    cells = np.zeros((ny + 2, nx + 2), np.uint8)
    cells[0, :] = cells[-1, :] = Cell.OCCUPIED
    cells[:, 0] = cells[:, -1] = Cell.OCCUPIED
    return OccupancyGrid(resolution, nx + 2, ny + 2, (-resolution, -resolution), cells)


def build_scenario(cfg: ScenarioConfig):
    """Corridor grid, seeded pedestrian placement, and the robot's start state."""
    cfg.validate()
    grid = corridor_grid(cfg.corridor_length, cfg.corridor_width, cfg.resolution)
    rng = np.random.default_rng(cfg.rng_seed)
    start = cfg.start_pose()
    n_same, n_opp = cfg.n_humans_same_dir, cfg.n_humans_opposing
    n = n_same + n_opp
    lo = start.x + cfg.spawn_clearance
    hi = cfg.corridor_length - 1.5
    lanes = np.array([cfg.lane_y[0]] * n_same + [cfg.lane_y[1]] * n_opp)
    direction = np.array([1.0] * n_same + [-1.0] * n_opp)
    for _ in range(100):
        xs = rng.uniform(lo, hi, n)
        ys = lanes + rng.uniform(-cfg.lane_jitter, cfg.lane_jitter, n)
        pos = np.stack([xs, ys], axis=1)
        d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
        np.fill_diagonal(d, np.inf)
        if n < 2 or d.min() >= cfg.spawn_spacing:
            break
    else:
        raise ConfigError("could not place pedestrians without overlap in 100 draws", "n_humans_same_dir")
    speed = np.full(n, float(cfg.human_speed))
    humans = Humans(np.arange(n), pos, np.stack([direction * speed, np.zeros(n)], axis=1), speed,
                    direction, lanes.copy(), np.ones(n, bool))
    return grid, humans, (start, Twist(0.0, 0.0))


def human_accel(h: Humans, robot_xy, cfg: ScenarioConfig):
    """Preferred-velocity relaxation plus capped repulsion, for active pedestrians."""
    n = h.n
    acc = np.zeros((n, 2))
    act = np.flatnonzero(h.active)
    w = cfg.corridor_width
    for a in act:
        px, py = h.pos[a]
        ex, ey = h.direction[a] * cfg.lookahead, h.lane_y[a] - py
        norm = math.hypot(ex, ey)
        des = h.pref_speed[a] * np.array([ex / norm, ey / norm])
        rep = np.zeros(2)
        for b in act:
            if b == a:
                continue
            dx, dy = px - h.pos[b, 0], py - h.pos[b, 1]
            d = math.hypot(dx, dy)
            if 0 < d < cfg.rep_range:
                rep += (cfg.k_rep / (d * d)) * np.array([dx / d, dy / d])
        dx, dy = px - robot_xy[0], py - robot_xy[1]
        d = math.hypot(dx, dy)
        if 0 < d < cfg.rep_range:
            rep += (cfg.k_rep / (d * d)) * np.array([dx / d, dy / d])
        for dist, sign in ((py, 1.0), (w - py, -1.0)):
            if 0 < dist < cfg.rep_range:
                rep[1] += sign * cfg.k_rep_wall / (dist * dist)
        mag = math.hypot(rep[0], rep[1])
        if mag > cfg.rep_cap:
            rep *= cfg.rep_cap / mag
        acc[a] = (des - h.vel[a]) / cfg.tau + rep
    return acc


class EventDetector:
    """Edge-triggered social events, fed one simulation step at a time."""

    def __init__(self, cfg: ScenarioConfig, n_humans: int, robot_radius: float):
        self.cfg = cfg
        self.robot_radius = robot_radius
        self.inside = np.zeros(n_humans, bool)
        self.run = np.zeros(n_humans, np.int64)
        self.fired = np.zeros(n_humans, bool)
        self.need = math.ceil(cfg.path_change_time / cfg.sim_dt - 1e-9)
        self.angle_limit = math.radians(cfg.path_change_angle)

    def update(self, t, robot_xy, h: Humans) -> list[SimEvent]:
        cfg = self.cfg
        events = []
        for a in np.flatnonzero(h.active):
            aid = int(h.ids[a])
            d = math.hypot(h.pos[a, 0] - robot_xy[0], h.pos[a, 1] - robot_xy[1])
            if d < self.robot_radius + cfg.human_radius:
                events.append(SimEvent("Collision", t, aid))
            inside = d - cfg.human_radius < cfg.personal_space
            if inside and not self.inside[a]:
                events.append(SimEvent("PersonalSpaceEntry", t, aid))
            self.inside[a] = inside
            if deviates(h.vel[a], h.direction[a], self.angle_limit) and d <= cfg.path_change_radius:
                self.run[a] += 1
                if self.run[a] >= self.need and not self.fired[a]:
                    self.fired[a] = True
                    events.append(SimEvent("HumanPathChange", t, aid))
            else:
                self.run[a] = 0
                self.fired[a] = False
        return events


def deviates(vel, direction, limit_rad) -> bool:
    vx, vy = float(vel[0]), float(vel[1])
    if vx == 0.0 and vy == 0.0:
        return False
    axis = 0.0 if direction > 0 else math.pi
    return abs(float(wrap_angle(math.atan2(vy, vx) - axis))) > limit_rad


class Episode:
    """Mutable episode state; also the handle the planner's cycle reads from."""

    def __init__(self, scenario: ScenarioConfig, planner: PlannerConfig):
        planner.validate()
        self.scenario = scenario
        self.planner = planner
        self.grid, self.humans, (pose, twist) = build_scenario(scenario)
        self.costmap = inflate(self.grid, planner.risk.robot_radius, planner.inflation_radius)
        self.robot_pose = pose
        self.robot_twist = twist
        self.goal = scenario.goal_pose()
        self.human_radius = scenario.human_radius
        self.rng = np.random.default_rng(planner.seed)
        self.tracks = []
        self.last_cycle_time = None
        self.step_index = 0
        self.path_length = 0.0
        self.detector = EventDetector(scenario, self.humans.n, scenario.robot_radius)
        self.events: list[SimEvent] = []
        self.robot_log = []
        self.human_log = []
        self.plan_log = []
        self._log_state()

    @property
    def time(self) -> float:
        return self.step_index * self.scenario.sim_dt

    def human_discs(self):
        h = self.humans
        return [(int(h.ids[a]), (float(h.pos[a, 0]), float(h.pos[a, 1])), self.scenario.human_radius)
                for a in np.flatnonzero(h.active)]

    def _log_state(self):
        p, tw, t = self.robot_pose, self.robot_twist, self.time
        self.robot_log.append((t, p.x, p.y, p.theta, tw.v, tw.omega))
        h = self.humans
        for a in np.flatnonzero(h.active):
            self.human_log.append((t, int(h.ids[a]), float(h.pos[a, 0]), float(h.pos[a, 1]),
                                   float(h.vel[a, 0]), float(h.vel[a, 1])))

    def step(self, twist: Twist) -> list[SimEvent]:
        """Advance one ``sim_dt``; returns the events raised by the step."""
        cfg = self.scenario
        dt = cfg.sim_dt
        h = self.humans
        old = self.robot_pose
        x, y, th = arc(old.x, old.y, old.theta, twist.v, twist.omega, dt)
        self.robot_pose = Pose2(float(x), float(y), float(th))
        self.robot_twist = twist
        self.path_length += math.hypot(self.robot_pose.x - old.x, self.robot_pose.y - old.y)

        acc = human_accel(h, (old.x, old.y), cfg)
        act = h.active
        vel = h.vel + acc * dt
        sp = np.hypot(vel[:, 0], vel[:, 1])
        over = sp > h.pref_speed
        vel[over] *= (h.pref_speed[over] / sp[over])[:, None]
        pos = h.pos + vel * dt
        lo, hi = cfg.human_radius, cfg.corridor_width - cfg.human_radius
        clamped = (pos[:, 1] < lo) | (pos[:, 1] > hi)
        pos[:, 1] = np.clip(pos[:, 1], lo, hi)
        vel[clamped, 1] = 0.0
        h.vel[act] = vel[act]
        h.pos[act] = pos[act]
        gone = act & (((h.direction > 0) & (h.pos[:, 0] > cfg.corridor_length - cfg.human_radius))
                      | ((h.direction < 0) & (h.pos[:, 0] < cfg.human_radius)))
        h.active[gone] = False

        self.step_index += 1
        ev = self.detector.update(self.time, (self.robot_pose.x, self.robot_pose.y), h)
        if self.robot_pose.distance_to(self.goal) <= self.planner.goal_tolerance:
            ev.append(SimEvent("GoalReached", self.time))
        self.events.extend(ev)
        self._log_state()
        return ev


def step_sim(world: Episode, twist: Twist, dt: float):
    """Advance ``world`` by one step; ``dt`` must equal the scenario's ``sim_dt``."""
    if not math.isclose(dt, world.scenario.sim_dt):
        raise ConfigError(f"dt {dt} differs from sim_dt {world.scenario.sim_dt}", "sim_dt")
    events = world.step(twist)
    return world, events


@dataclass
class EpisodeMetrics:
    outcome: str                 # goal | collision | timeout
    time_to_goal: float          # inf unless outcome == goal
    avg_speed: float             # path length / time_to_goal; 0 when the goal was not reached
    path_changes: int
    ps_violations: int
    collisions: int
    scenario_seed: int
    planner_seed: int
    elapsed: float = 0.0
    path_length: float = 0.0
    emergency_stops: int = 0

    @property
    def reached(self) -> bool:
        return self.outcome == "goal"


@dataclass
class EpisodeLogs:
    robot: list = field(default_factory=list)    # (t, x, y, theta, v, omega)
    humans: list = field(default_factory=list)   # (t, id, x, y, vx, vy)
    plans: list = field(default_factory=list)    # plan-log rows, see PLAN_LOG_HEADER
    events: list = field(default_factory=list)   # SimEvent


PLAN_LOG_HEADER = ("t", "x", "y", "theta", "v_cmd", "omega_cmd", "J_total", "J_terminal",
                   "J_coll", "J_occl", "candidates", "emergency")


def run_episode(scenario: ScenarioConfig, planner: PlannerConfig, on_cycle=None):
    """Run one episode to GoalReached, Collision or Timeout.

    ``on_cycle(episode, plan)`` is called after every replan, for inspection.
    """
    ep = Episode(scenario, planner)
    every = max(1, int(round(planner.replan_period / scenario.sim_dt)))
    max_steps = int(math.floor(scenario.max_episode_time / scenario.sim_dt + 1e-9))
    outcome = "timeout"
    command = Twist(0.0, 0.0)
    emergencies = 0
    while ep.step_index < max_steps:
        if ep.step_index % every == 0:
            command, result = execute_cycle(ep, planner)
            p = ep.robot_pose
            if result is None:
                ep.plan_log.append((ep.time, p.x, p.y, p.theta, command.v, command.omega, math.nan,
                                    math.nan, math.nan, math.nan, 0, 0))
            else:
                emergencies += result.emergency_stop
                c = result.cost
                ep.plan_log.append((ep.time, p.x, p.y, p.theta, command.v, command.omega, c.total,
                                    c.terminal, c.collision, c.occlusion, result.candidate_count,
                                    int(result.emergency_stop)))
            if on_cycle is not None:
                on_cycle(ep, result)
        ev = ep.step(command)
        kinds = {e.kind for e in ev}
        if "Collision" in kinds:
            outcome = "collision"
            break
        if "GoalReached" in kinds:
            outcome = "goal"
            break
    if outcome == "timeout":
        ep.events.append(SimEvent("Timeout", ep.time))
    kinds = [e.kind for e in ep.events]
    ttg = ep.time if outcome == "goal" else math.inf
    metrics = EpisodeMetrics(
        outcome=outcome,
        time_to_goal=ttg,
        avg_speed=ep.path_length / ttg if outcome == "goal" and ttg > 0 else 0.0,
        path_changes=kinds.count("HumanPathChange"),
        ps_violations=kinds.count("PersonalSpaceEntry"),
        collisions=kinds.count("Collision"),
        scenario_seed=scenario.rng_seed,
        planner_seed=planner.seed,
        elapsed=ep.time,
        path_length=ep.path_length,
        emergency_stops=emergencies,
    )
    logs = EpisodeLogs(ep.robot_log, ep.human_log, ep.plan_log, ep.events)
    return metrics, logs


ROBOT_LOG_HEADER = ("t", "x", "y", "theta", "v", "omega")
HUMAN_LOG_HEADER = ("t", "id", "x", "y", "vx", "vy")
EVENT_LOG_HEADER = ("t", "kind", "agent_id")
METRICS_HEADER = ("outcome", "time_to_goal", "avg_speed", "path_changes", "ps_violations", "collisions",
                  "scenario_seed", "planner_seed", "elapsed", "path_length", "emergency_stops")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def metrics_row(m: EpisodeMetrics) -> list[str]:
    return [_cell(getattr(m, k)) for k in METRICS_HEADER]


def metrics_csv(m: EpisodeMetrics) -> str:
    return ",".join(METRICS_HEADER) + "\n" + ",".join(metrics_row(m)) + "\n"


def write_logs(logs: EpisodeLogs, metrics: EpisodeMetrics, out_dir) -> list[str]:
    """robot.csv, humans.csv, plans.csv, events.csv and metrics.csv under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv") for name in ("robot", "humans", "plans", "events")}
    _write(paths["robot"], ROBOT_LOG_HEADER, logs.robot)
    _write(paths["humans"], HUMAN_LOG_HEADER, logs.humans)
    _write(paths["plans"], PLAN_LOG_HEADER, logs.plans)
    _write(paths["events"], EVENT_LOG_HEADER, [(e.time, e.kind, e.agent_id) for e in logs.events])
    mpath = os.path.join(out_dir, "metrics.csv")
    with open(mpath, "w", newline="") as fh:
        fh.write(metrics_csv(metrics))
    return list(paths.values()) + [mpath]
