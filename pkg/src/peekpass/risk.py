"""Empirical CVaR, collision probabilities and the planner's cost.

A candidate's cost is

    J = c1 * |p(t_f) - goal|^2 + c2 * (static + sum_i p_i) + c3 * rho

where ``static`` is the worst costmap value along the path, ``p_i`` the CVaR of
collision indicators against agent ``i``'s prediction fan, and ``rho`` the
CVaR of collision indicators against the phantom ensemble, less the
``epsilon_peek`` budget and floored at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, InvalidInputError

LOSS_SHAPES = ("indicator", "distance")


@dataclass(frozen=True)
class RiskConfig:
    alpha_coll: float = 0.0
    alpha_peek: float = 0.9
    epsilon_peek: float = 0.05
    c1: float = 1.0
    c2: float = 1000.0
    c3: float = 100.0
    robot_radius: float = 0.2
    human_radius: float = 0.25
    loss: str = "indicator"
    loss_scale: float = 0.5  # metres of clearance over which distance-shaped loss decays

    def validate(self):
        for name in ("alpha_coll", "alpha_peek"):
            a = getattr(self, name)
            if not 0.0 <= a < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {a}", name)
        for name in ("c1", "c2", "c3", "epsilon_peek"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative", name)
        if not (self.robot_radius > 0 and self.human_radius > 0):
            raise ConfigError("radii must be positive", "robot_radius")
        if self.loss not in LOSS_SHAPES:
            raise ConfigError(f"loss must be one of {LOSS_SHAPES}", "loss")
        if self.loss == "distance" and not self.loss_scale > 0:
            raise ConfigError("loss_scale must be positive", "loss_scale")


@dataclass(frozen=True)
class CostBreakdown:
    terminal: float
    collision: float
    occlusion: float

    @property
    def total(self) -> float:
        return self.terminal + self.collision + self.occlusion

    def as_row(self) -> dict:
        return {"J_total": self.total, "J_terminal": self.terminal,
                "J_coll": self.collision, "J_occl": self.occlusion}


def tail_count(n: int, alpha: float) -> int:
    """Number of worst samples averaged by CVaR at level ``alpha``: ceil((1 - alpha) n)."""
    # the 1e-9 guard keeps e.g. (1 - 0.7) * 10 = 3.0000000000000004 from rounding up to 4
    return max(1, math.ceil((1.0 - alpha) * n - 1e-9))


def cvar(samples, alpha: float) -> float:
    """Mean of the worst ceil((1 - alpha) n) losses."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise InvalidInputError("cvar of an empty sample set")
    if not 0.0 <= alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1), got {alpha}")
    k = tail_count(s.size, alpha)
    worst = np.sort(s)[::-1][:k]
    return float(np.mean(worst))


def losses_from_gap(gap: np.ndarray, cfg: RiskConfig) -> np.ndarray:
    """Per-sample loss from the minimum surface clearance."""
    if cfg.loss == "indicator":
        return (gap < 0.0).astype(np.float64)
    return np.clip(1.0 - gap / cfg.loss_scale, 0.0, 1.0)


def _check_times(traj, times):
    if len(traj.times) != len(times) or not np.allclose(traj.times - traj.times[0], times, atol=1e-9):
        raise InvalidInputError("trajectory and prediction horizons/sampling differ")


def _gaps(traj, samples, radius, cfg):
    rsum = np.full(samples.shape[0], cfg.robot_radius + radius)
    return _kernels.min_gap(traj.xy[None], samples, rsum)[0]


def collision_prob(traj, fan, cfg: RiskConfig) -> float:
    _check_times(traj, fan.times)
    return cvar(losses_from_gap(_gaps(traj, fan.samples, fan.radius, cfg), cfg), cfg.alpha_coll)


def static_collision(traj, costmap) -> float:
    return float(np.max(costmap.cost_at(traj.poses[:, 0], traj.poses[:, 1])))


def occlusion_risk(traj, phantoms, cfg: RiskConfig) -> float:
    if phantoms.m == 0:
        return 0.0
    _check_times(traj, phantoms.times)
    tail = cvar(losses_from_gap(_gaps(traj, phantoms.samples, phantoms.radius, cfg), cfg), cfg.alpha_peek)
    return max(0.0, tail - cfg.epsilon_peek)


def goal_d2(x, y, goal):
    dx = x - goal.x
    dy = y - goal.y
    return dx * dx + dy * dy


def terminal_cost(x, y, goal, c1):
    return c1 * goal_d2(x, y, goal)


def enters_goal(xs, ys, goal, tolerance) -> bool:
    """True if a path that starts outside the goal disc has a later sample inside it."""
    d2 = goal_d2(np.asarray(xs), np.asarray(ys), goal)
    r2 = tolerance * tolerance
    return bool(d2[0] > r2 and np.any(d2[1:] <= r2))


def total_cost(traj, goal, costmap, fans, phantoms, cfg: RiskConfig, goal_tolerance=0.0) -> CostBreakdown:
    """Cost of one trajectory.

    The goal is absorbing: a path that enters the ``goal_tolerance`` disc
    ends its episode there, so its terminal term is zero.
    """
    end = traj.poses[-1]
    if goal_tolerance > 0 and enters_goal(traj.poses[:, 0], traj.poses[:, 1], goal, goal_tolerance):
        terminal = 0.0
    else:
        terminal = float(terminal_cost(end[0], end[1], goal, cfg.c1))
    p = static_collision(traj, costmap)
    for fan in fans:
        p = p + collision_prob(traj, fan, cfg)
    return CostBreakdown(terminal, cfg.c2 * p, cfg.c3 * occlusion_risk(traj, phantoms, cfg))
