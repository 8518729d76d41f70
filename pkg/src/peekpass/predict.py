"""Agent tracking, constant-velocity prediction fans, and phantom ensembles.

Phantoms are hypothetical pedestrians that may be standing in unobserved
space; they are spawned on the frontier and walk straight into the visible
region. They stand in for occluded traffic the robot cannot track.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import arc
from .errors import InvalidInputError
from .world import Cell, VisibilityMask

N_HEADINGS = 72  # 5 degree heading bins for the phantom cone
CONE_REACH = 1.0  # metres of travel that must stay in visible free space


def _rng(rng_or_seed):
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(rng_or_seed)


@dataclass(frozen=True, eq=False)
class AgentTrack:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    radius: float = 0.25
    history: tuple = ()  # ((t, x, y), ...), oldest first

    @property
    def speed(self) -> float:
        return float(math.hypot(self.velocity[0], self.velocity[1]))


def update_tracks(tracks, observations, dt, *, t=None, beta=0.5, history_len=10,
                  v_human_max=3.5, radius=0.25):
    """Fold one tick of ``(id, position)`` observations into the track list.

    Velocity is an exponentially smoothed finite difference,
    ``v <- beta * raw + (1 - beta) * v``; new tracks start at rest. Tracks
    without an observation this tick are dropped. Returned in ascending id.
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    ids = [int(i) for i, _ in observations]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("duplicate ids in observations")
    prev = {tr.id: tr for tr in tracks}
    out = []
    for aid, pos in sorted(observations, key=lambda o: int(o[0])):
        aid = int(aid)
        pos = np.asarray(pos, dtype=np.float64)
        old = prev.get(aid)
        if old is None:
            now = 0.0 if t is None else float(t)
            vel = np.zeros(2)
            hist = ((now, pos[0], pos[1]),)
        else:
            now = (old.history[-1][0] + dt) if t is None else float(t)
            if now <= old.history[-1][0]:
                raise InvalidInputError("observation time must advance")
            raw = (pos - old.position) / dt
            vel = beta * raw + (1.0 - beta) * old.velocity
            sp = math.hypot(vel[0], vel[1])
            if sp > v_human_max:
                vel = vel * (v_human_max / sp)
            hist = (old.history + ((now, pos[0], pos[1]),))[-history_len:]
        out.append(AgentTrack(aid, pos, vel, radius, hist))
    return out


@dataclass(frozen=True, eq=False)
class PredictionFan:
    agent_id: int
    times: np.ndarray = field(repr=False)    # (T,)
    samples: np.ndarray = field(repr=False)  # (N, T, 2)
    radius: float = 0.25

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / self.n


def horizon_times(horizon, dt_sample):
    n = int(round(horizon / dt_sample))
    if n < 1:
        raise InvalidInputError("horizon must cover at least one sample step")
    return dt_sample * np.arange(n + 1)


def predict_fan(track: AgentTrack, horizon, dt_sample, n_samples=64, sigma_v=0.3,
                sigma_omega=0.2, rng_seed=None, v_human_max=3.5) -> PredictionFan:
    """Sample ``n_samples`` constant-twist futures around the track's velocity.

    Draw order: speeds, then heading rates, then (stationary tracks only)
    initial headings, which are uniform because a resting pedestrian has no
    direction to extrapolate.
    """
    if not horizon > 0:
        raise InvalidInputError("horizon must be positive")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = _rng(rng_seed)
    t = horizon_times(horizon, dt_sample)
    speed = track.speed
    v = np.clip(rng.normal(speed, sigma_v, n_samples) if sigma_v > 0 else np.full(n_samples, speed),
                0.0, v_human_max)
    w = rng.normal(0.0, sigma_omega, n_samples) if sigma_omega > 0 else np.zeros(n_samples)
    if speed > 0.0:
        th = np.full(n_samples, math.atan2(track.velocity[1], track.velocity[0]))
    elif sigma_v > 0:
        th = rng.uniform(-math.pi, math.pi, n_samples)
    else:
        th = np.zeros(n_samples)
    x, y, _ = arc(track.position[0], track.position[1], th[:, None], v[:, None], w[:, None], t[None, :])
    if speed > 0.0:
        # straight samples: scale the tracked velocity itself, so zero noise is exact extrapolation
        straight = w == 0.0
        scale = (v[straight] / speed)[:, None]
        x[straight] = track.position[0] + (track.velocity[0] * scale) * t[None, :]
        y[straight] = track.position[1] + (track.velocity[1] * scale) * t[None, :]
    return PredictionFan(track.id, t, np.stack([x, y], axis=-1), track.radius)


@dataclass(frozen=True, eq=False)
class PhantomEnsemble:
    times: np.ndarray = field(repr=False)
    spawn_cells: np.ndarray = field(repr=False)  # (M, 2) row, col
    headings: np.ndarray = field(repr=False)
    speeds: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)      # (M, T, 2)
    radius: float = 0.25

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    def __len__(self):
        return self.m


def empty_ensemble(times, radius=0.25) -> PhantomEnsemble:
    return PhantomEnsemble(times, np.zeros((0, 2), np.int64), np.zeros(0), np.zeros(0),
                           np.zeros((0, len(times), 2)), radius)


def heading_bins(n=N_HEADINGS) -> np.ndarray:
    return -math.pi + (2.0 * math.pi / n) * np.arange(n)


def entry_cones(cells, mask: VisibilityMask, reach=CONE_REACH, n_headings=N_HEADINGS) -> np.ndarray:
    """(F, n_headings) flags: heading keeps the first ``reach`` m in visible free cells."""
    g = mask.grid
    open_cells = mask.visible & (g.cells == Cell.FREE)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    return _kernels.cone(open_cells, g.resolution, g.origin[0], g.origin[1], cells,
                         heading_bins(n_headings), reach)


def spawn_phantoms(frontier, mask: VisibilityMask, robot_pose, horizon, dt_sample, m_samples=64,
                   v_human_max=3.5, rng_seed=None, radius=0.25) -> PhantomEnsemble:
    """Uniform draws of (frontier cell, speed, into-visible heading), walked straight.

    Frontier cells whose entry cone is empty cannot emit a phantom and are
    excluded from the draw. Draw order: cells, speeds, heading picks.
    """
    if m_samples < 0:
        raise InvalidInputError("m_samples must be >= 0")
    t = horizon_times(horizon, dt_sample)
    frontier = np.asarray(frontier, dtype=np.int64).reshape(-1, 2)
    if m_samples == 0 or len(frontier) == 0:
        return empty_ensemble(t, radius)
    cones = entry_cones(frontier, mask)
    usable = cones.any(axis=1)
    if not usable.any():
        return empty_ensemble(t, radius)
    frontier, cones = frontier[usable], cones[usable]
    rng = _rng(rng_seed)
    pick = rng.integers(0, len(frontier), m_samples)
    speed = rng.uniform(0.0, v_human_max, m_samples)
    u = rng.random(m_samples)
    bins = heading_bins(cones.shape[1])
    heading = np.empty(m_samples)
    for k in range(m_samples):
        allowed = np.flatnonzero(cones[pick[k]])
        heading[k] = bins[allowed[int(u[k] * len(allowed))]]
    g = mask.grid
    cells = frontier[pick]
    cx = g.origin[0] + (cells[:, 1] + 0.5) * g.resolution
    cy = g.origin[1] + (cells[:, 0] + 0.5) * g.resolution
    x = cx[:, None] + (speed * np.cos(heading))[:, None] * t[None, :]
    y = cy[:, None] + (speed * np.sin(heading))[:, None] * t[None, :]
    return PhantomEnsemble(t, cells, heading, speed, np.stack([x, y], axis=-1), radius)


def write_fans_csv(fans, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent_id", "sample_id", "t", "x", "y"])
        for fan in fans:
            for s in range(fan.n):
                for k, tk in enumerate(fan.times):
                    w.writerow([fan.agent_id, s, repr(float(tk)),
                                repr(float(fan.samples[s, k, 0])), repr(float(fan.samples[s, k, 1]))])
