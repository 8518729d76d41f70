"""Receding-horizon search over a depth-limited motion-primitive tree."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dynamics import (Limits, Pose2, Twist, arc, braking_index, control_grid, make_primitive,
                       primitive_steps, reachable, rollout, _check_grid)
from .errors import ConfigError, InvalidInputError
from .predict import empty_ensemble, horizon_times, predict_fan, spawn_phantoms, update_tracks
from .risk import CostBreakdown, RiskConfig, goal_d2, losses_from_gap, tail_count, terminal_cost, total_cost
from .world import frontier_cells, line_of_sight, visible_region


PLANNER_MODES = ("risk", "follow")


@dataclass(frozen=True)
class PlannerConfig:
    risk: RiskConfig = field(default_factory=RiskConfig)
    limits: Limits = field(default_factory=Limits)
    tree_depth: int = 3
    n_v: int = 4
    n_omega: int = 5
    primitive_duration: float = 0.5
    dt_sample: float = 0.1
    replan_period: float = 0.2
    goal_tolerance: float = 0.3
    peek_enabled: bool = True
    c3_block_factor: float = 1e4
    inflation_radius: float = 0.6
    sensor_range: float = 10.0
    n_samples: int = 64
    m_samples: int = 256
    sigma_v: float = 0.3
    sigma_omega: float = 0.2
    v_human_max: float = 3.5
    beta: float = 0.5
    history_len: int = 10
    seed: int = 0
    mode: str = "risk"  # "risk": cost-minimising search; "follow": lane-keeping follow-the-leader baseline
    follow_gap: float = 1.5

    @property
    def horizon(self) -> float:
        return self.tree_depth * self.primitive_duration

    def validate(self):
        self.risk.validate()
        self.limits.validate()
        _check_grid(self.n_v, self.n_omega)
        primitive_steps(self.primitive_duration, self.dt_sample)
        if self.tree_depth < 1:
            raise ConfigError("tree_depth must be >= 1", "tree_depth")
        if self.replan_period > self.primitive_duration + 1e-12:
            raise ConfigError("replan_period must not exceed primitive_duration", "replan_period")
        if self.inflation_radius < self.risk.robot_radius:
            raise ConfigError("inflation_radius must be >= robot_radius", "inflation_radius")
        if self.mode not in PLANNER_MODES:
            raise ConfigError(f"mode must be one of {PLANNER_MODES}, got {self.mode!r}", "mode")
        if not self.follow_gap > 0:
            raise ConfigError("follow_gap must be positive", "follow_gap")

    def effective_risk(self) -> RiskConfig:
        """Risk weights actually used; with peeking disabled c3 is blown up to block it."""
        if self.peek_enabled:
            return self.risk
        return replace(self.risk, c3=self.c3_block_factor * self.risk.c3)


@dataclass(frozen=True, eq=False)
class Plan:
    primitives: tuple
    trajectory: object
    cost: CostBreakdown
    candidate_count: int
    emergency_stop: bool = False
    leaf_index: int = -1

    @property
    def control(self) -> Twist:
        return self.primitives[0].control


def _sample_stack(fans, phantoms, n_times, risk):
    """Concatenate all fan and phantom samples; returns samples, rsum and group slices."""
    blocks, rsum, groups = [], [], []
    start = 0
    for fan in fans:
        if fan.samples.shape[1] != n_times:
            raise InvalidInputError(f"fan for agent {fan.agent_id} does not match the planning horizon")
        blocks.append(fan.samples)
        rsum.append(np.full(fan.n, risk.robot_radius + fan.radius))
        groups.append(slice(start, start + fan.n))
        start += fan.n
    ph = None
    if phantoms is not None and phantoms.m > 0:
        if phantoms.samples.shape[1] != n_times:
            raise InvalidInputError("phantom ensemble does not match the planning horizon")
        blocks.append(phantoms.samples)
        rsum.append(np.full(phantoms.m, risk.robot_radius + phantoms.radius))
        ph = slice(start, start + phantoms.m)
        start += phantoms.m
    if not blocks:
        return np.zeros((0, n_times, 2)), np.zeros(0), groups, ph
    return np.concatenate(blocks), np.concatenate(rsum), groups, ph


def _group_cvar(gap, sl, rel_index, alpha, risk):
    """Row-wise CVaR of the losses for one sample group, culled samples counted as zero loss."""
    n = sl.stop - sl.start
    k = tail_count(n, alpha)
    cols = np.flatnonzero((rel_index >= sl.start) & (rel_index < sl.stop))
    rows = gap.shape[0]
    if risk.loss == "indicator":
        hits = (gap[:, cols] < 0.0).sum(axis=1) if cols.size else np.zeros(rows, np.int64)
        return np.minimum(hits, k) / k
    full = np.zeros((rows, n))
    if cols.size:
        full[:, rel_index[cols] - sl.start] = losses_from_gap(gap[:, cols], risk)
    worst = -np.sort(-full, axis=1)[:, :k]
    return np.array([np.mean(r) for r in worst])


def plan(pose: Pose2, twist: Twist, goal: Pose2, costmap, fans, phantoms, cfg: PlannerConfig) -> Plan:
    """Exhaustive depth-first minimisation of the cost over primitive sequences.

    Branches whose static cost reaches 1 are pruned. A branch that enters the
    goal disc from outside has zero terminal cost. Ties on total cost go to
    the smaller sum of |omega|, then to the earlier sequence in depth-first
    order. If every branch is lethal the all-brake sequence is returned with
    ``emergency_stop`` set.
    """
    risk = cfg.effective_risk()
    lim = cfg.limits
    dt = cfg.dt_sample
    steps = primitive_steps(cfg.primitive_duration, dt)
    n_times = cfg.tree_depth * steps + 1
    times = horizon_times(cfg.horizon, dt)
    fans = list(fans)
    samples, rsum, groups, ph_slice = _sample_stack(fans, phantoms, n_times, risk)

    # samples that cannot come within reach of any candidate keep gap = +inf
    reach = lim.v_max * times + 1e-9
    margin = 0.0 if risk.loss == "indicator" else risk.loss_scale
    if samples.shape[0]:
        d0 = np.hypot(samples[..., 0] - pose.x, samples[..., 1] - pose.y)
        rel_index = np.flatnonzero(np.min(d0 - reach[None, :], axis=1) - rsum < margin + 1e-9)
    else:
        rel_index = np.zeros(0, np.int64)
    rel = samples[rel_index]
    rel_rsum = rsum[rel_index]

    controls = control_grid(lim, cfg.n_v, cfg.n_omega)
    brake = braking_index(controls)
    tloc = dt * np.arange(1, steps + 1)

    ex = np.array([pose.x]); ey = np.array([pose.y]); eth = np.array([pose.theta])
    cv = np.array([twist.v]); cw = np.array([twist.omega])
    static = costmap.cost_at(ex, ey)
    gap = _kernels.min_gap(np.stack([ex, ey], axis=-1)[:, None, :], rel[:, :1], rel_rsum)
    wsum = np.zeros(1)
    path = np.zeros((1, 0), np.int64)
    r2 = cfg.goal_tolerance * cfg.goal_tolerance
    absorb = cfg.goal_tolerance > 0 and goal_d2(pose.x, pose.y, goal) > r2
    entered = np.zeros(1, bool)
    if static[0] >= 1.0:
        ex = ex[:0]

    for depth in range(cfg.tree_depth):
        if ex.size == 0:
            break
        par, pi = np.nonzero(reachable(controls, cv, cw, lim, cfg.primitive_duration))
        v = controls[pi, 0]
        w = controls[pi, 1]
        x, y, th = arc(ex[par, None], ey[par, None], eth[par, None], v[:, None], w[:, None], tloc[None, :])
        st = np.maximum(static[par], costmap.cost_at(x, y).max(axis=1))
        alive = st < 1.0
        par, pi, v, w, x, y, th, st = (a[alive] for a in (par, pi, v, w, x, y, th, st))
        base = depth * steps + 1
        seg = _kernels.min_gap(np.stack([x, y], axis=-1), rel[:, base:base + steps], rel_rsum)
        gap = np.minimum(gap[par], seg)
        wsum = wsum[par] + np.abs(w)
        entered = entered[par] | np.any(goal_d2(x, y, goal) <= r2, axis=1)
        path = np.concatenate([path[par], pi[:, None]], axis=1)
        ex, ey, eth = x[:, -1], y[:, -1], th[:, -1]
        cv, cw, static = v, w, st

    if ex.size == 0 or path.shape[1] < cfg.tree_depth:
        return _emergency(pose, goal, costmap, fans, phantoms, cfg, risk, controls[brake])

    terminal = terminal_cost(ex, ey, goal, risk.c1)
    if absorb:
        terminal = np.where(entered, 0.0, terminal)
    p = static
    for sl in groups:
        p = p + _group_cvar(gap, sl, rel_index, risk.alpha_coll, risk)
    if ph_slice is not None:
        rho = np.maximum(0.0, _group_cvar(gap, ph_slice, rel_index, risk.alpha_peek, risk) - risk.epsilon_peek)
    else:
        rho = np.zeros(ex.size)
    collision = risk.c2 * p
    occlusion = risk.c3 * rho
    total = terminal + collision + occlusion
    order = np.lexsort((np.arange(total.size), wsum, total))
    best = int(order[0])

    prims, cur = [], pose
    for idx in path[best]:
        prim = make_primitive(cur, Twist(*controls[idx]), cfg.primitive_duration, dt)
        prims.append(prim)
        cur = prim.end
    cost = CostBreakdown(float(terminal[best]), float(collision[best]), float(occlusion[best]))
    return Plan(tuple(prims), rollout(pose, prims), cost, int(total.size), False, best)


def _emergency(pose, goal, costmap, fans, phantoms, cfg, risk, brake_control):
    prims, cur = [], pose
    for _ in range(cfg.tree_depth):
        prim = make_primitive(cur, Twist(*brake_control), cfg.primitive_duration, cfg.dt_sample)
        prims.append(prim)
        cur = prim.end
    traj = rollout(pose, prims)
    if phantoms is None:
        phantoms = empty_ensemble(traj.times - traj.times[0])
    cost = total_cost(traj, goal, costmap, fans, phantoms, risk, cfg.goal_tolerance)
    return Plan(tuple(prims), traj, cost, 0, True, -1)


# --------------------------------------------------------------------------
# receding-horizon cycle


def perceive(sim, cfg: PlannerConfig):
    """Visibility mask and the ids/positions of humans with a clear line of sight."""
    pose = sim.robot_pose
    discs = sim.human_discs()
    mask = visible_region(sim.grid, pose, cfg.sensor_range, [(p, r) for _, p, r in discs])
    seen = []
    r2 = cfg.sensor_range ** 2
    for k, (aid, p, _) in enumerate(discs):
        if (p[0] - pose.x) ** 2 + (p[1] - pose.y) ** 2 > r2:
            continue
        others = [(q, r) for m, (_, q, r) in enumerate(discs) if m != k]
        if line_of_sight(sim.grid, (pose.x, pose.y), p, others):
            seen.append((aid, p))
    return mask, seen


def spawn_frontier(mask, grid, tracks, phantom_radius):
    """Frontier cells, minus those a phantom could not occupy next to a seen human."""
    front = frontier_cells(mask, grid)
    if len(front) == 0 or not tracks:
        return front
    cx = grid.origin[0] + (front[:, 1] + 0.5) * grid.resolution
    cy = grid.origin[1] + (front[:, 0] + 0.5) * grid.resolution
    keep = np.ones(len(front), bool)
    for tr in tracks:
        keep &= np.hypot(cx - tr.position[0], cy - tr.position[1]) >= tr.radius + phantom_radius
    return front[keep]


def execute_cycle(sim, cfg: PlannerConfig):
    """One replanning cycle against a running simulation.

    Refreshes visibility, tracks, fans and phantoms (drawing from the episode
    stream in that order), plans, and returns the first primitive's control.
    In ``follow`` mode the baseline controller replaces the search and the
    returned plan is None.
    """
    mask, seen = perceive(sim, cfg)
    dt = sim.time - sim.last_cycle_time if sim.last_cycle_time is not None else cfg.replan_period
    sim.tracks = update_tracks(sim.tracks, seen, max(dt, cfg.replan_period * 1e-6), t=sim.time,
                               beta=cfg.beta, history_len=cfg.history_len,
                               v_human_max=cfg.v_human_max, radius=sim.human_radius)
    sim.last_cycle_time = sim.time
    fans = [predict_fan(tr, cfg.horizon, cfg.dt_sample, cfg.n_samples, cfg.sigma_v, cfg.sigma_omega,
                        sim.rng, cfg.v_human_max) for tr in sim.tracks]
    if cfg.mode == "follow":
        return follow_leader(sim, cfg), None
    front = spawn_frontier(mask, sim.grid, sim.tracks, sim.human_radius)
    phantoms = spawn_phantoms(front, mask, sim.robot_pose, cfg.horizon, cfg.dt_sample, cfg.m_samples,
                              cfg.v_human_max, sim.rng, sim.human_radius)
    result = plan(sim.robot_pose, sim.robot_twist, sim.goal, sim.costmap, fans, phantoms, cfg)
    control = Twist(0.0, 0.0) if result.emergency_stop else result.control
    return control, result


def follow_leader(sim, cfg: PlannerConfig) -> Twist:
    """Baseline: hold the goal's lane and trail the nearest tracked human in it.

    Speed tracks the leader's along-lane speed plus a gap correction; the
    heading is steered back to the lane centre. Commands respect the
    acceleration limits over one replan period.
    """
    lim = cfg.limits
    pose, goal = sim.robot_pose, sim.goal
    direction = 1.0 if goal.x >= pose.x else -1.0
    dist_goal = abs(goal.x - pose.x)
    v_des = min(lim.v_max, 2.0 * dist_goal)
    band = cfg.risk.robot_radius + sim.human_radius + 0.2
    for tr in sim.tracks:
        ahead = (tr.position[0] - pose.x) * direction
        if ahead > 0 and abs(tr.position[1] - pose.y) < band:
            gap = ahead - cfg.follow_gap
            v_des = min(v_des, max(0.0, tr.velocity[0] * direction + gap))
    heading = 0.0 if direction > 0 else math.pi
    err = math.atan2(math.sin(heading - pose.theta), math.cos(heading - pose.theta))
    lateral = (goal.y - pose.y) * direction
    w_des = 2.0 * err + 1.5 * lateral
    dt = cfg.replan_period
    v0, w0 = sim.robot_twist.v, sim.robot_twist.omega
    v = min(max(v_des, v0 - lim.a_max * dt, 0.0), v0 + lim.a_max * dt, lim.v_max)
    w = min(max(w_des, w0 - lim.alpha_max * dt, -lim.omega_max), w0 + lim.alpha_max * dt, lim.omega_max)
    return Twist(v, w)
