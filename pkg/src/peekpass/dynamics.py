"""Unicycle propagation, motion-primitive generation and rollout.

All state propagation goes through :func:`arc`, the exact constant-twist
solution of the unicycle model, so planner, rollout and simulator agree
bit-for-bit on where a control sequence ends up.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError

TWO_PI = 2.0 * math.pi
# slack for the acceleration-reachability comparison
_REACH_TOL = 1e-9


def wrap_angle(a):
    """Map angles to (-pi, pi]; values already in range are returned unchanged."""
    a = np.asarray(a, dtype=np.float64)
    w = np.remainder(a + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    out = np.where((a > -math.pi) & (a <= math.pi), a, w)
    return out if out.ndim else float(out)


def arc(x, y, theta, v, omega, t):
    """Pose after holding (v, omega) for time ``t``; broadcasts over all arguments.

    Uses the chord form ``v t sinc(omega t / 2)`` along heading
    ``theta + omega t / 2``, which equals the textbook (v/omega)(sin - sin)
    expression but stays accurate as omega -> 0.
    """
    half = 0.5 * np.multiply(omega, t)
    chord = np.multiply(v, t) * np.sinc(half / math.pi)
    mid = np.add(theta, half)
    return (np.add(x, chord * np.cos(mid)),
            np.add(y, chord * np.sin(mid)),
            wrap_angle(np.add(theta, np.multiply(omega, t))))


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def distance_to(self, other) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "omega", float(self.omega))


@dataclass(frozen=True)
class Limits:
    v_max: float = 3.0
    omega_max: float = 1.5
    a_max: float = 2.0
    alpha_max: float = 3.0

    def validate(self):
        if not self.v_max > 0:
            raise ConfigError(f"v_max must be positive, got {self.v_max}", "v_max")
        if not self.omega_max > 0:
            raise ConfigError(f"omega_max must be positive, got {self.omega_max}", "omega_max")
        if not (self.a_max > 0 and self.alpha_max > 0):
            raise ConfigError("acceleration limits must be positive", "a_max")


def step_unicycle(pose: Pose2, twist: Twist, dt: float) -> Pose2:
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    x, y, th = arc(pose.x, pose.y, pose.theta, twist.v, twist.omega, dt)
    return Pose2(float(x), float(y), float(th))


@dataclass(frozen=True, eq=False)
class MotionPrimitive:
    control: Twist
    duration: float
    dt_sample: float
    states: np.ndarray = field(repr=False)  # (n+1, 3) poses at t = k * dt_sample

    @property
    def times(self) -> np.ndarray:
        return self.dt_sample * np.arange(len(self.states))

    @property
    def seed(self) -> Pose2:
        return Pose2(*self.states[0])

    @property
    def end(self) -> Pose2:
        return Pose2(*self.states[-1])


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray = field(repr=False)
    poses: np.ndarray = field(repr=False)     # (n, 3)
    controls: np.ndarray = field(repr=False)  # (n, 2); control held from each state on

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("trajectory timestamps must be strictly increasing")

    @property
    def t_0(self) -> float:
        return float(self.times[0])

    @property
    def t_f(self) -> float:
        return float(self.times[-1])

    @property
    def dt_sample(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    @property
    def end(self) -> Pose2:
        return Pose2(*self.poses[-1])

    def __len__(self):
        return len(self.times)


def control_grid(limits: Limits, n_v: int, n_omega: int) -> np.ndarray:
    """(n_v * n_omega, 2) Cartesian grid of (v, omega), v-major with v descending.

    Omega runs ascending within each speed, except that the brake (0, 0) is
    moved to the very end. The order doubles as the planner's tie-break
    index, so exact cost ties resolve toward acting now rather than stopping
    now and doing the same thing later, which would let the receding-horizon
    loop procrastinate forever.
    """
    vs = np.linspace(0.0, limits.v_max, n_v)[::-1]
    ws = np.linspace(-limits.omega_max, limits.omega_max, n_omega)
    if n_omega % 2 == 1:
        ws[n_omega // 2] = 0.0  # exact zero despite linspace rounding
    grid = np.stack(np.meshgrid(vs, ws, indexing="ij"), axis=-1).reshape(-1, 2)
    brake = braking_index(grid)
    return np.concatenate([np.delete(grid, brake, axis=0), grid[brake:brake + 1]])


def braking_index(controls: np.ndarray) -> int:
    """Index of the control closest to (0, 0)."""
    return int(np.argmin(np.hypot(controls[:, 0], controls[:, 1])))


def reachable(controls: np.ndarray, v0, w0, limits: Limits, duration: float) -> np.ndarray:
    """Mask of grid controls reachable from (v0, w0) within ``duration``; broadcasts over v0, w0.

    The braking control is always kept.
    """
    v0 = np.asarray(v0, dtype=np.float64)[..., None]
    w0 = np.asarray(w0, dtype=np.float64)[..., None]
    ok = ((np.abs(controls[:, 0] - v0) <= limits.a_max * duration + _REACH_TOL)
          & (np.abs(controls[:, 1] - w0) <= limits.alpha_max * duration + _REACH_TOL))
    ok[..., braking_index(controls)] = True
    return ok


def _check_grid(n_v, n_omega):
    if n_v < 2:
        raise ConfigError(f"n_v must be >= 2, got {n_v}", "n_v")
    if n_omega < 3 or n_omega % 2 == 0:
        raise ConfigError(f"n_omega must be odd and >= 3 so omega = 0 is on the grid, got {n_omega}",
                          "n_omega")


def primitive_steps(duration: float, dt_sample: float) -> int:
    n = int(round(duration / dt_sample))
    if n < 1 or not math.isclose(n * dt_sample, duration, rel_tol=1e-9):
        raise ConfigError(f"duration {duration} is not a multiple of dt_sample {dt_sample}", "duration")
    return n


def make_primitive(seed: Pose2, control: Twist, duration: float, dt_sample: float) -> MotionPrimitive:
    n = primitive_steps(duration, dt_sample)
    t = dt_sample * np.arange(n + 1)
    x, y, th = arc(seed.x, seed.y, seed.theta, control.v, control.omega, t)
    states = np.stack([x, y, th], axis=1)
    states[0] = (seed.x, seed.y, seed.theta)
    return MotionPrimitive(control, float(duration), float(dt_sample), states)


def generate_primitives(seed: Pose2, current_twist: Twist, limits: Limits = Limits(),
                        n_v: int = 4, n_omega: int = 5, duration: float = 0.5,
                        dt_sample: float = 0.1) -> list[MotionPrimitive]:
    """Primitives on the (v, omega) grid reachable from ``current_twist``.

    Order follows :func:`control_grid`; the planner uses it as its
    enumeration index.
    """
    limits.validate()
    _check_grid(n_v, n_omega)
    controls = control_grid(limits, n_v, n_omega)
    ok = reachable(controls, current_twist.v, current_twist.omega, limits, duration)
    return [make_primitive(seed, Twist(v, w), duration, dt_sample) for v, w in controls[ok]]


def rollout(seed: Pose2, sequence, t_0: float = 0.0) -> Trajectory:
    """Chain primitives, re-seeding each one at the previous endpoint."""
    sequence = list(sequence)
    if not sequence:
        raise InvalidInputError("rollout needs at least one primitive")
    dt = sequence[0].dt_sample
    poses = [np.array([[seed.x, seed.y, seed.theta]])]
    controls = []
    cur = seed
    for prim in sequence:
        if not math.isclose(prim.dt_sample, dt):
            raise InvalidInputError("all primitives must share dt_sample")
        p = make_primitive(cur, prim.control, prim.duration, dt)
        poses.append(p.states[1:])
        controls.append(np.tile([prim.control.v, prim.control.omega], (len(p.states) - 1, 1)))
        cur = Pose2(*p.states[-1])
    poses = np.concatenate(poses)
    controls.append(controls[-1][-1:])
    controls = np.concatenate(controls)
    times = t_0 + dt * np.arange(len(poses))
    return Trajectory(times, poses, controls)


def write_primitives_csv(primitives, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "omega", "duration"])
        for p in primitives:
            w.writerow([repr(p.control.v), repr(p.control.omega), repr(p.duration)])
