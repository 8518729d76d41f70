"""Plain-text ``key = value`` configuration with dotted sections.

Sections map onto the config dataclasses::

    scenario.*  ScenarioConfig
    planner.*   PlannerConfig (scalar fields)
    risk.*      RiskConfig
    limits.*    Limits
    sweep.*     SweepSpec (see :mod:`peekpass.bench`)

Unknown keys are rejected with a :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources

from .dynamics import Limits, Pose2
from .errors import ConfigError
from .planner import PlannerConfig
from .risk import RiskConfig
from .sim import ScenarioConfig

# key -> (unit, description); every dataclass field must appear here
UNITS = {
    "scenario.corridor_length": ("m", "interior corridor length"),
    "scenario.corridor_width": ("m", "interior corridor width"),
    "scenario.n_humans_same_dir": ("count", "pedestrians walking with the robot"),
    "scenario.n_humans_opposing": ("count", "pedestrians walking against the robot"),
    "scenario.human_speed": ("m/s", "preferred speed of every pedestrian"),
    "scenario.human_radius": ("m", "pedestrian disc radius"),
    "scenario.robot_radius": ("m", "robot disc radius used for ground-truth collisions"),
    "scenario.robot_start": ("m,m,rad", "start pose x,y,theta or 'auto'"),
    "scenario.robot_goal": ("m,m,rad", "goal pose x,y,theta or 'auto'"),
    "scenario.sim_dt": ("s", "simulation step"),
    "scenario.max_episode_time": ("s", "timeout"),
    "scenario.rng_seed": ("-", "pedestrian placement seed"),
    "scenario.resolution": ("m/cell", "grid resolution"),
    "scenario.spawn_clearance": ("m", "no pedestrian spawns closer than this to the start"),
    "scenario.spawn_spacing": ("m", "minimum pedestrian spacing at spawn"),
    "scenario.lane_jitter": ("m", "half-width of the lateral spawn offset"),
    "scenario.k_rep": ("m^3/s^2", "pedestrian/robot repulsion gain"),
    "scenario.k_rep_wall": ("m^3/s^2", "wall repulsion gain"),
    "scenario.rep_range": ("m", "repulsion cut-off distance"),
    "scenario.rep_cap": ("m/s^2", "repulsion magnitude cap"),
    "scenario.tau": ("s", "preferred-velocity relaxation time"),
    "scenario.lookahead": ("m", "lane-centre lookahead of the preferred velocity"),
    "scenario.personal_space": ("m", "personal-space radius around a pedestrian's body"),
    "scenario.path_change_angle": ("deg", "heading deviation counted as a path change"),
    "scenario.path_change_time": ("s", "minimum duration of a path change"),
    "scenario.path_change_radius": ("m", "robot distance within which path changes are attributed"),
    "planner.tree_depth": ("count", "primitives per candidate sequence"),
    "planner.n_v": ("count", "speed levels on the primitive grid"),
    "planner.n_omega": ("count", "turn-rate levels on the primitive grid (odd)"),
    "planner.primitive_duration": ("s", "duration of one primitive"),
    "planner.dt_sample": ("s", "trajectory sampling step"),
    "planner.replan_period": ("s", "time between planning cycles"),
    "planner.goal_tolerance": ("m", "goal-reached radius; plans entering it have zero terminal cost"),
    "planner.peek_enabled": ("bool", "false multiplies c3 by c3_block_factor"),
    "planner.c3_block_factor": ("-", "c3 multiplier when peeking is disabled"),
    "planner.inflation_radius": ("m", "costmap inflation radius"),
    "planner.sensor_range": ("m", "visibility range"),
    "planner.n_samples": ("count", "prediction samples per tracked human"),
    "planner.m_samples": ("count", "phantom samples per cycle"),
    "planner.sigma_v": ("m/s", "speed noise of prediction samples"),
    "planner.sigma_omega": ("rad/s", "turn-rate noise of prediction samples"),
    "planner.v_human_max": ("m/s", "speed cap for tracks and phantoms"),
    "planner.beta": ("-", "velocity smoothing weight of new measurements"),
    "planner.history_len": ("count", "positions kept per track"),
    "planner.seed": ("-", "planner random stream seed"),
    "planner.mode": ("-", "risk (cost search) or follow (follow-the-leader baseline)"),
    "planner.follow_gap": ("m", "target gap of the follow-the-leader baseline"),
    "risk.alpha_coll": ("-", "CVaR level for observed humans"),
    "risk.alpha_peek": ("-", "CVaR level for phantoms"),
    "risk.epsilon_peek": ("-", "phantom risk budget"),
    "risk.c1": ("1/m^2", "terminal goal-distance weight"),
    "risk.c2": ("-", "collision weight"),
    "risk.c3": ("-", "occlusion weight"),
    "risk.robot_radius": ("m", "robot radius used by the planner"),
    "risk.human_radius": ("m", "human radius used by the planner"),
    "risk.loss": ("-", "per-sample loss: indicator or distance"),
    "risk.loss_scale": ("m", "clearance scale of the distance loss"),
    "limits.v_max": ("m/s", "robot top speed"),
    "limits.omega_max": ("rad/s", "robot top turn rate"),
    "limits.a_max": ("m/s^2", "linear acceleration bound"),
    "limits.alpha_max": ("rad/s^2", "angular acceleration bound"),
    "sweep.seeds": ("count", "seeds per cell, 0..seeds-1"),
    "sweep.seed_offset": ("-", "first seed"),
    "sweep.workers": ("count", "parallel episode workers"),
    "sweep.axis.<name>": ("list", "comma-separated values; name is corridor_len, human_speed, "
                          "ratio (sets c3 = 1/(c1 ratio)) or peek"),
}

SWEEP_KEYS = ("seeds", "seed_offset", "workers")


@dataclass(frozen=True)
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sweep: dict = field(default_factory=dict)  # raw sweep.* entries, parsed by bench

    def with_seed(self, seed: int) -> "Config":
        return replace(self, scenario=replace(self.scenario, rng_seed=int(seed)),
                       planner=replace(self.planner, seed=int(seed)))


def _section_fields():
    return {
        "scenario": (ScenarioConfig, {f.name for f in fields(ScenarioConfig)}),
        "planner": (PlannerConfig, {f.name for f in fields(PlannerConfig)} - {"risk", "limits"}),
        "risk": (RiskConfig, {f.name for f in fields(RiskConfig)}),
        "limits": (Limits, {f.name for f in fields(Limits)}),
    }


def _default_of(cls, name):
    f = next(f for f in fields(cls) if f.name == name)
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def parse_bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}", key)


def _parse_pose(text, key):
    t = text.strip().lower()
    if t in ("auto", "none"):
        return None
    try:
        parts = [float(p) for p in t.split(",")]
    except ValueError:
        raise ConfigError(f"{key}: expected x,y[,theta] or auto, got {text!r}", key) from None
    if len(parts) not in (2, 3):
        raise ConfigError(f"{key}: expected x,y[,theta] or auto, got {text!r}", key)
    return Pose2(*parts)


def parse_value(key: str, text: str):
    """Convert ``text`` to the type of the field named by dotted ``key``."""
    section, _, name = key.partition(".")
    secs = _section_fields()
    if section not in secs or name not in secs[section][1]:
        raise ConfigError(f"unknown config key {key!r}", key)
    cls = secs[section][0]
    default = _default_of(cls, name)
    if name in ("robot_start", "robot_goal"):
        return _parse_pose(text, key)
    if isinstance(default, bool):
        return parse_bool(text, key)
    try:
        if isinstance(default, int):
            v = float(text)
            if not v.is_integer():
                raise ValueError
            return int(v)
        if isinstance(default, float):
            v = float(text)
            if math.isnan(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}", key) from None
    return text.strip()


def format_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Pose2):
        return f"{v.x!r},{v.y!r},{v.theta!r}"
    return str(v)


def parse_text(text: str, source: str = "<string>") -> list[tuple[str, str]]:
    """(key, raw value) pairs in file order; ``#`` starts a comment."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", key or "<line>")
        out.append((key, value.strip()))
    return out


def check_sweep_key(key):
    name = key[len("sweep."):]
    if name in SWEEP_KEYS:
        return
    if name.startswith("axis.") and len(name) > len("axis."):
        return
    raise ConfigError(f"unknown config key {key!r}", key)


def apply(cfg: Config, pairs) -> Config:
    """Return ``cfg`` with each (key, raw value) applied in order."""
    scen, plan = {}, {}
    risk, lim = {}, {}
    sweep = dict(cfg.sweep)
    for key, raw in pairs:
        if key.startswith("sweep."):
            check_sweep_key(key)
            sweep[key[len("sweep."):]] = raw
            continue
        value = parse_value(key, raw)
        section, _, name = key.partition(".")
        {"scenario": scen, "planner": plan, "risk": risk, "limits": lim}[section][name] = value
    p = cfg.planner
    planner = replace(p, risk=replace(p.risk, **risk), limits=replace(p.limits, **lim), **plan)
    return Config(replace(cfg.scenario, **scen), planner, sweep)


def validate(cfg: Config) -> Config:
    cfg.scenario.validate()
    cfg.planner.validate()
    return cfg


def load_text(text: str, base: Config | None = None, source="<string>") -> Config:
    return apply(base or Config(), parse_text(text, source))


def load_file(path, base: Config | None = None) -> Config:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", str(path)) from None
    return load_text(text, base, str(path))


def preset_names() -> list[str]:
    root = resources.files("peekpass") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    path = resources.files("peekpass") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}", "preset")
    return path.read_text()


def load_preset(name: str, base: Config | None = None) -> Config:
    return load_text(preset_text(name), base, f"preset:{name}")


def parse_override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key=value, got {text!r}", text)
    return key.strip(), value.strip()


def items(cfg: Config) -> list[tuple[str, str]]:
    """Every effective key with its formatted value, in schema order."""
    out = []
    objs = {"scenario": cfg.scenario, "planner": cfg.planner, "risk": cfg.planner.risk,
            "limits": cfg.planner.limits}
    for section, (cls, names) in _section_fields().items():
        for f in fields(cls):
            if f.name in names:
                out.append((f"{section}.{f.name}", format_value(getattr(objs[section], f.name))))
    for k, v in cfg.sweep.items():
        out.append((f"sweep.{k}", v))
    return out


def dump(cfg: Config) -> str:
    """Config text that reloads to ``cfg`` exactly."""
    return "".join(f"{k} = {v}\n" for k, v in items(cfg))


def schema() -> list[tuple[str, str, str, str]]:
    """(key, default, unit, description) for every key, defaults from the dataclasses."""
    base = dict(items(Config()))
    rows = []
    for key, (unit, desc) in UNITS.items():
        if key.startswith("sweep."):
            name = key[len("sweep."):]
            default = {"seeds": "1", "seed_offset": "0", "workers": "1"}.get(name, "")
        else:
            default = base[key]
        rows.append((key, default, unit, desc))
    return rows
