"""Parameter sweeps, per-cell aggregation and SVG charts.

A sweep is the Cartesian product of its axes times a seed list. Each row is
one episode; each cell (axis combination) gets a median/IQR summary, with
quartiles taken by the midpoint rule: the mean of the two order statistics
bracketing position q * (n - 1). Episodes that miss the goal count as +inf
time-to-goal and zero average speed.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import Config, format_value, parse_bool
from .errors import ConfigError, InvalidInputError
from .sim import EpisodeMetrics, run_episode

__all__ = ["EpisodeMetrics", "SweepSpec", "run_sweep", "aggregate", "render_plots", "quantile_midpoint",
           "RESULTS_HEADER", "SUMMARY_HEADER"]

RESULTS_HEADER = ("corridor_len", "human_speed", "ratio", "peek", "seed", "time_to_goal", "avg_speed",
                  "path_changes", "ps_violations", "collisions", "outcome")
DERIVED_AXES = ("corridor_len", "human_speed", "ratio", "peek")
CELL_COLS = ("corridor_len", "human_speed", "ratio", "peek")
SUMMARY_HEADER = CELL_COLS + ("episodes", "goals", "collision_outcomes", "timeouts", "errors",
                              "ttg_median", "ttg_q25", "ttg_q75", "speed_median", "speed_q25", "speed_q75",
                              "ps_median", "path_changes_median")


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple            # ((name, (value, ...)), ...) in sweep order
    seeds: tuple = (0,)
    base: Config = Config()
    workers: int = 1

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("a sweep needs at least one axis", "sweep.axis")
        for name, values in self.axes:
            if len(values) == 0:
                raise ConfigError(f"sweep axis {name} has no values", f"sweep.axis.{name}")
        if len(self.seeds) < 1:
            raise ConfigError("a sweep needs at least one seed", "sweep.seeds")

    @classmethod
    def from_config(cls, cfg: Config) -> "SweepSpec":
        raw = dict(cfg.sweep)
        axes = []
        for key, text in raw.items():
            if not key.startswith("axis."):
                continue
            name = axis_name(key[len("axis."):])
            vals = [v.strip() for v in text.split(",") if v.strip()]
            axes.append((name, tuple(_axis_value(name, v) for v in vals)))
        try:
            n = int(raw.get("seeds", "1"))
            off = int(raw.get("seed_offset", "0"))
            workers = int(raw.get("workers", "1"))
        except ValueError:
            raise ConfigError("sweep.seeds, sweep.seed_offset and sweep.workers must be integers",
                              "sweep.seeds") from None
        if n < 1:
            raise ConfigError("sweep.seeds must be >= 1", "sweep.seeds")
        return cls(tuple(axes), tuple(range(off, off + n)), cfg, max(1, workers))

    def cells(self):
        names = [a for a, _ in self.axes]
        for combo in itertools.product(*(v for _, v in self.axes)):
            yield dict(zip(names, combo))


# the results schema carries exactly these four cell columns
AXIS_ALIASES = {"scenario.corridor_length": "corridor_len", "scenario.human_speed": "human_speed",
                "planner.peek_enabled": "peek"}


def axis_name(name: str) -> str:
    name = AXIS_ALIASES.get(name, name)
    if name not in DERIVED_AXES:
        raise ConfigError(f"sweep axis {name!r} is not one of {', '.join(DERIVED_AXES)} "
                          "(the results schema has no column for it)", f"sweep.axis.{name}")
    return name


def _axis_value(name, text):
    if name == "peek":
        return parse_bool(text, "sweep.axis.peek")
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"sweep.axis.{name}: cannot parse {text!r}", f"sweep.axis.{name}") from None
    if not (math.isfinite(v) and v > 0) and name != "human_speed":
        raise ConfigError(f"sweep.axis.{name} values must be positive", f"sweep.axis.{name}")
    return v


def scaled_counts(length, base_length, n_same, n_opp):
    """Pedestrian counts at constant density: total scales with length, split same-first."""
    total = int(round((n_same + n_opp) * length / base_length))
    return total - total // 2, total // 2


def cell_config(base: Config, cell: dict) -> Config:
    """Apply one cell's axis values to ``base``."""
    scen, plan = base.scenario, base.planner
    risk = plan.risk
    for name, v in cell.items():
        if name == "corridor_len":
            same, opp = scaled_counts(v, scen.corridor_length, scen.n_humans_same_dir, scen.n_humans_opposing)
            scen = replace(scen, corridor_length=float(v), n_humans_same_dir=same, n_humans_opposing=opp)
        elif name == "human_speed":
            scen = replace(scen, human_speed=float(v))
        elif name == "ratio":
            risk = replace(risk, c3=1.0 / (risk.c1 * v))
        elif name == "peek":
            plan = replace(plan, peek_enabled=bool(v))
        else:
            raise ConfigError(f"unknown sweep axis {name!r}", f"sweep.axis.{name}")
    plan = replace(plan, risk=risk)
    return Config(scen, plan, base.sweep)


def ratio_of(risk) -> float:
    """Exploration ratio 1 / (c1 c3); inf when either weight is zero."""
    d = risk.c1 * risk.c3
    return math.inf if d == 0 else 1.0 / d


def _episode(args):
    idx, cfg = args
    t0 = time.perf_counter()
    try:
        m, _ = run_episode(cfg.scenario, cfg.planner)
        err = ""
    except Exception as exc:  # recorded per row, never aborts the sweep
        m, err = None, f"{type(exc).__name__}: {exc}"
    return idx, m, err, time.perf_counter() - t0


def _row(cfg: Config, seed, m, err):
    s, p = cfg.scenario, cfg.planner
    row = {"corridor_len": s.corridor_length, "human_speed": s.human_speed, "ratio": ratio_of(p.risk),
           "peek": p.peek_enabled, "seed": seed}
    if m is None:
        row.update(time_to_goal=math.nan, avg_speed=math.nan, path_changes=-1, ps_violations=-1,
                   collisions=-1, outcome="error", error=err)
    else:
        row.update(time_to_goal=m.time_to_goal, avg_speed=m.avg_speed, path_changes=m.path_changes,
                   ps_violations=m.ps_violations, collisions=m.collisions, outcome=m.outcome, error="")
    return row


def run_sweep(spec: SweepSpec, progress=None) -> tuple[list[dict], list[dict]]:
    """Run every cell x seed; returns (rows, summary) ordered by cell then seed."""
    jobs = []
    cells = list(spec.cells())
    for cell in cells:
        cfg = cell_config(spec.base, cell)
        for seed in spec.seeds:
            jobs.append((len(jobs), cfg.with_seed(seed)))
    results = [None] * len(jobs)
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for idx, m, err, dt in pool.map(_episode, jobs):
                results[idx] = (m, err)
                if progress:
                    progress(idx, len(jobs), dt)
    else:
        for job in jobs:
            idx, m, err, dt = _episode(job)
            results[idx] = (m, err)
            if progress:
                progress(idx, len(jobs), dt)
    rows = [_row(cfg, cfg.planner.seed, m, err) for (_, cfg), (m, err) in zip(jobs, results)]
    return rows, aggregate(rows)


def quantile_midpoint(values, q) -> float:
    """Mean of the order statistics at floor and ceil of q * (n - 1); +inf entries allowed."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    if x.size == 0:
        raise InvalidInputError("quantile of an empty sample")
    pos = q * (x.size - 1)
    lo, hi = int(math.floor(pos + 1e-12)), int(math.ceil(pos - 1e-12))
    if lo == hi:
        return float(x[lo])
    return float(0.5 * (x[lo] + x[hi]))


def _censored(rows):
    ttg = [r["time_to_goal"] if r["outcome"] == "goal" else math.inf for r in rows]
    spd = [r["avg_speed"] if r["outcome"] == "goal" else 0.0 for r in rows]
    return ttg, spd


def aggregate(rows) -> list[dict]:
    """Median and IQR per cell, in first-appearance order of the cells."""
    rows = list(rows)
    if not rows:
        raise InvalidInputError("aggregate needs at least one row")
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[c] for c in CELL_COLS), []).append(r)
    out = []
    for key, rs in groups.items():
        ttg, spd = _censored(rs)
        ok = [r for r in rs if r["outcome"] != "error"]
        ps = [r["ps_violations"] for r in ok] or [math.nan]
        pc = [r["path_changes"] for r in ok] or [math.nan]
        row = dict(zip(CELL_COLS, key))
        row.update(episodes=len(rs), goals=sum(r["outcome"] == "goal" for r in rs),
                   collision_outcomes=sum(r["outcome"] == "collision" for r in rs),
                   timeouts=sum(r["outcome"] == "timeout" for r in rs),
                   errors=sum(r["outcome"] == "error" for r in rs),
                   ttg_median=quantile_midpoint(ttg, 0.5), ttg_q25=quantile_midpoint(ttg, 0.25),
                   ttg_q75=quantile_midpoint(ttg, 0.75), speed_median=quantile_midpoint(spd, 0.5),
                   speed_q25=quantile_midpoint(spd, 0.25), speed_q75=quantile_midpoint(spd, 0.75),
                   ps_median=quantile_midpoint(ps, 0.5), path_changes_median=quantile_midpoint(pc, 0.5))
        out.append(row)
    return out


# --------------------------------------------------------------------------
# CSV


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in header])
    return buf.getvalue()


def results_csv(rows) -> str:
    return _csv_text(RESULTS_HEADER, rows)


def summary_csv(summary) -> str:
    return _csv_text(SUMMARY_HEADER, summary)


def _parse_cell(col, text):
    if col == "peek":
        return text == "true"
    if col == "outcome":
        return text
    if col in ("seed", "path_changes", "ps_violations", "collisions", "episodes", "goals",
               "collision_outcomes", "timeouts", "errors"):
        return int(text)
    return float(text)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return [{k: _parse_cell(k, v) for k, v in row.items()} for row in r]


def write_outputs(rows, summary, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        fh.write(results_csv(rows))
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        fh.write(summary_csv(summary))


# --------------------------------------------------------------------------
# SVG charts

W, H = 640, 520
PANEL_H = 200
MARGIN_L, MARGIN_T = 70, 40
PLOT_W = W - MARGIN_L - 150
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def varying_axes(summary) -> list[str]:
    return [c for c in CELL_COLS if len({r[c] for r in summary}) > 1]


def _n(v):
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e4 else f"{v:.3g}"


def _panel(parts, y0, xs_all, series, metric, label, logx):
    lo_key, mid_key, hi_key = metric
    finite = [v for _, pts in series for p in pts for v in (p[lo_key], p[mid_key], p[hi_key])
              if math.isfinite(v)]
    ymin, ymax = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if ymax - ymin < 1e-9:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad
    tx = [math.log10(x) if logx else x for x in xs_all]
    xmin, xmax = min(tx), max(tx)
    if xmax - xmin < 1e-12:
        xmin, xmax = xmin - 1.0, xmax + 1.0

    def sx(x):
        t = math.log10(x) if logx else x
        return MARGIN_L + PLOT_W * (t - xmin) / (xmax - xmin)

    def sy(y):
        y = min(max(y, ymin), ymax)  # clip inf into the frame
        return y0 + PANEL_H * (1.0 - (y - ymin) / (ymax - ymin))

    parts.append(f'<rect x="{MARGIN_L}" y="{y0}" width="{PLOT_W}" height="{PANEL_H}" fill="none" stroke="#444"/>')
    for k in range(5):
        yv = ymin + (ymax - ymin) * k / 4
        yy = sy(yv)
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{yy:.2f}" x2="{MARGIN_L}" y2="{yy:.2f}" stroke="#444"/>')
        parts.append(f'<text x="{MARGIN_L - 6}" y="{yy + 4:.2f}" font-size="11" text-anchor="end">{_n(yv)}</text>')
    for x in xs_all:
        xx = sx(x)
        parts.append(f'<line x1="{xx:.2f}" y1="{y0 + PANEL_H}" x2="{xx:.2f}" y2="{y0 + PANEL_H + 4}" stroke="#444"/>')
        parts.append(f'<text x="{xx:.2f}" y="{y0 + PANEL_H + 16}" font-size="11" text-anchor="middle">{_n(x)}</text>')
    parts.append(f'<text x="18" y="{y0 + PANEL_H / 2:.2f}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 18 {y0 + PANEL_H / 2:.2f})">{label}</text>')
    for k, (name, pts) in enumerate(series):
        color = SERIES_COLORS[k % len(SERIES_COLORS)]
        band = [(sx(p["x"]), sy(p[hi_key])) for p in pts] + [(sx(p["x"]), sy(p[lo_key])) for p in reversed(pts)]
        parts.append('<polygon points="' + " ".join(f"{a:.2f},{b:.2f}" for a, b in band)
                     + f'" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{sx(p['x']):.2f},{sy(p[mid_key]):.2f}" for p in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for p in pts:
            parts.append(f'<circle cx="{sx(p["x"]):.2f}" cy="{sy(p[mid_key]):.2f}" r="3" fill="{color}"/>')


def svg_chart(summary, axis) -> str:
    """Median with IQR band of time-to-goal and average speed against ``axis``."""
    others = [c for c in varying_axes(summary) if c != axis]
    groups = {}
    for r in summary:
        groups.setdefault(tuple(r[c] for c in others), []).append(r)
    series = []
    for key, rs in groups.items():
        name = ", ".join(f"{c}={_fmt(v)}" for c, v in zip(others, key)) or "all"
        pts = sorted(({"x": float(r[axis]), **r} for r in rs), key=lambda p: p["x"])
        series.append((name, pts))
    xs_all = sorted({float(r[axis]) for r in summary})
    logx = axis == "ratio" and min(xs_all) > 0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="22" font-size="14" text-anchor="middle">median and IQR vs {axis}</text>']
    _panel(parts, MARGIN_T, xs_all, series, ("ttg_q25", "ttg_median", "ttg_q75"), "time to goal [s]", logx)
    _panel(parts, MARGIN_T + PANEL_H + 50, xs_all, series, ("speed_q25", "speed_median", "speed_q75"),
           "avg speed [m/s]", logx)
    parts.append(f'<text x="{MARGIN_L + PLOT_W / 2}" y="{H - 8}" font-size="12" text-anchor="middle">'
                 f'{axis}{" (log)" if logx else ""}</text>')
    for k, (name, _) in enumerate(series):
        color = SERIES_COLORS[k % len(SERIES_COLORS)]
        y = MARGIN_T + 14 + 18 * k
        parts.append(f'<rect x="{MARGIN_L + PLOT_W + 12}" y="{y - 9}" width="12" height="10" fill="{color}"/>')
        parts.append(f'<text x="{MARGIN_L + PLOT_W + 28}" y="{y}" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_plots(summary, out_dir) -> list[str]:
    """One ``sweep_<axis>.svg`` per varying axis (or the first column if none vary)."""
    summary = list(summary)
    if not summary:
        raise InvalidInputError("render_plots needs a non-empty summary")
    axes = varying_axes(summary) or ["human_speed"]
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for axis in axes:
        path = os.path.join(out_dir, f"sweep_{axis}.svg")
        with open(path, "w", newline="") as fh:
            fh.write(svg_chart(summary, axis))
        paths.append(path)
    return paths


def describe(spec: SweepSpec) -> str:
    axes = "; ".join(f"{n}: {', '.join(format_value(v) for v in vals)}" for n, vals in spec.axes)
    return f"{axes} x {len(spec.seeds)} seeds"
