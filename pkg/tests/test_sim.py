import math

import numpy as np
import pytest

from peekpass.dynamics import Pose2, Twist
from peekpass.errors import ConfigError
from peekpass.planner import PlannerConfig
from peekpass.sim import (EVENT_LOG_HEADER, METRICS_HEADER, Episode, EventDetector, Humans, ScenarioConfig,
                          build_scenario, metrics_csv, run_episode, step_sim, write_logs)
from peekpass.world import Cell

from conftest import light_planner, replay_events, small_scenario


def trapezoid_time(distance, v_max, a_max):
    ramp = v_max / a_max
    if distance <= v_max * ramp:
        return 2 * math.sqrt(distance / a_max)
    return distance / v_max + 0.5 * ramp


def test_no_humans_robot_at_start():
    sc = ScenarioConfig(n_humans_same_dir=0, n_humans_opposing=0)
    grid, humans, (pose, twist) = build_scenario(sc)
    assert humans.n == 0
    assert pose == sc.start_pose() and twist == Twist()


def test_grid_dimensions():
    grid, _, _ = build_scenario(ScenarioConfig())
    assert (grid.width, grid.height) == (502, 32)
    assert int((grid.cells == Cell.FREE).sum()) == 500 * 30


def test_spawn_deterministic_and_spaced():
    sc = ScenarioConfig(rng_seed=5)
    _, a, _ = build_scenario(sc)
    _, b, _ = build_scenario(sc)
    assert np.array_equal(a.pos, b.pos)
    _, c, _ = build_scenario(ScenarioConfig(rng_seed=6))
    assert not np.array_equal(a.pos, c.pos)
    d = np.hypot(*(a.pos[:, None] - a.pos[None]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    assert d.min() >= sc.spawn_spacing
    assert np.all(a.pos[:, 0] >= sc.start_pose().x + sc.spawn_clearance)


def test_distant_humans_walk_at_preferred_speed():
    sc = ScenarioConfig(corridor_length=30.0, n_humans_same_dir=1, n_humans_opposing=1, lane_jitter=0.0)
    ep = Episode(sc, PlannerConfig())
    before = ep.humans.pos.copy()
    step_sim(ep, Twist(), sc.sim_dt)
    dx = ep.humans.pos[:, 0] - before[:, 0]
    np.testing.assert_allclose(dx, ep.humans.direction * sc.human_speed * sc.sim_dt, rtol=1e-4)


def test_step_sim_checks_dt():
    ep = Episode(small_scenario(), light_planner())
    with pytest.raises(ConfigError):
        step_sim(ep, Twist(), 0.1)


def test_one_personal_space_entry_per_pass():
    sc = ScenarioConfig(corridor_length=12.0, n_humans_same_dir=1, n_humans_opposing=0, human_speed=0.0,
                        lane_jitter=0.0, robot_start=Pose2(1.0, 0.75 + 0.65, 0.0), spawn_clearance=3.0)
    ep = Episode(sc, PlannerConfig())
    hx = ep.humans.pos[0, 0]
    while ep.robot_pose.x < hx + 2.0:
        ep.step(Twist(1.0, 0.0))
    kinds = [e.kind for e in ep.events]
    assert kinds == ["PersonalSpaceEntry"]
    # a second pass in the opposite direction is a new entry
    ep.robot_pose = Pose2(ep.robot_pose.x, ep.robot_pose.y, math.pi)
    while ep.robot_pose.x > hx - 2.0:
        ep.step(Twist(1.0, 0.0))
    assert [e.kind for e in ep.events] == ["PersonalSpaceEntry"] * 2


def synthetic_humans(heading_deg, x=1.0):
    h = math.radians(heading_deg)
    return Humans(np.array([0]), np.array([[x, 1.0]]), np.array([[math.cos(h), math.sin(h)]]),
                  np.array([1.0]), np.array([1.0]), np.array([1.0]), np.array([True]))


@pytest.mark.parametrize("deg,steps,dist,expect", [(40, 12, 1.0, 1), (40, 9, 1.0, 0), (40, 12, 3.0, 0),
                                                   (25, 12, 1.0, 0), (-40, 30, 1.0, 1)])
def test_path_change_threshold(deg, steps, dist, expect):
    sc = ScenarioConfig()
    det = EventDetector(sc, 1, 0.2)
    h = synthetic_humans(deg)
    n = 0
    for k in range(steps):
        ev = det.update(k * sc.sim_dt, (1.0 - dist, 1.0), h)
        n += sum(e.kind == "HumanPathChange" for e in ev)
    assert n == expect


def test_path_change_rearms_after_straightening():
    sc = ScenarioConfig()
    det = EventDetector(sc, 1, 0.2)
    n = 0
    for deg in [40] * 10 + [0] * 3 + [40] * 10:
        n += sum(e.kind == "HumanPathChange" for e in det.update(0.0, (0.0, 1.0), synthetic_humans(deg)))
    assert n == 2


def test_empty_corridor_time_matches_trapezoid():
    for length in (25.0, 50.0):
        sc = ScenarioConfig(corridor_length=length, n_humans_same_dir=0, n_humans_opposing=0)
        cfg = PlannerConfig()
        m, _ = run_episode(sc, cfg)
        assert m.outcome == "goal"
        dist = sc.start_pose().distance_to(sc.goal_pose()) - cfg.goal_tolerance
        ref = trapezoid_time(dist, cfg.limits.v_max, cfg.limits.a_max)
        assert abs(m.time_to_goal - ref) <= 0.10 * ref
        assert abs(m.time_to_goal - (length / 3.0 + 0.75)) <= 0.15 * (length / 3.0 + 0.75)


def test_goal_behind_turns_first():
    sc = ScenarioConfig(corridor_length=25.0, n_humans_same_dir=0, n_humans_opposing=0,
                        robot_start=Pose2(12.0, 1.5, 0.0), robot_goal=Pose2(4.0, 1.5, 0.0))
    err, first = [], []

    def record(ep, plan):
        p, g = ep.robot_pose, ep.goal
        e = math.atan2(g.y - p.y, g.x - p.x) - p.theta
        err.append(abs(math.atan2(math.sin(e), math.cos(e))))
        first.append(plan.control)

    m, _ = run_episode(sc, PlannerConfig(), record)
    assert m.outcome == "goal"
    assert all(abs(c.omega) > 0 and c.v <= 1.0 for c in first[:3])
    assert err[0] > err[1] > err[2] > err[3]


def test_replan_determinism():
    sc, cfg = small_scenario(rng_seed=3), light_planner(seed=3)
    a = run_episode(sc, cfg)
    b = run_episode(sc, cfg)
    assert a[0] == b[0]
    assert a[1].robot == b[1].robot and a[1].plans == b[1].plans and a[1].humans == b[1].humans


def test_static_humans_are_easy():
    for seed in range(20):
        sc = ScenarioConfig(corridor_length=25.0, n_humans_same_dir=2, n_humans_opposing=1, human_speed=0.0,
                            rng_seed=seed)
        m, _ = run_episode(sc, light_planner(seed=seed))
        assert m.outcome == "goal" and m.collisions == 0


def test_zero_time_budget_times_out():
    sc = small_scenario(max_episode_time=0.0)
    m, logs = run_episode(sc, light_planner())
    assert m.outcome == "timeout" and math.isinf(m.time_to_goal) and m.avg_speed == 0.0
    assert [e.kind for e in logs.events] == ["Timeout"]


def test_no_teleport_and_walls_respected():
    sc = small_scenario(n_humans_same_dir=2, n_humans_opposing=2, human_speed=1.5, rng_seed=1)
    cfg = light_planner(seed=1)
    _, logs = run_episode(sc, cfg)
    r = np.array(logs.robot)
    steps = np.hypot(np.diff(r[:, 1]), np.diff(r[:, 2]))
    assert np.all(steps <= cfg.limits.v_max * sc.sim_dt + 1e-9)
    h = np.array(logs.humans)
    for aid in np.unique(h[:, 1]):
        rows = h[h[:, 1] == aid]
        assert np.all(np.diff(rows[:, 0]) == pytest.approx(sc.sim_dt))
        d = np.hypot(np.diff(rows[:, 2]), np.diff(rows[:, 3]))
        assert np.all(d <= sc.human_speed * sc.sim_dt + 1e-9)
        assert np.all((rows[:, 3] >= sc.human_radius) & (rows[:, 3] <= sc.corridor_width - sc.human_radius))


def test_events_replay_from_logs():
    sc = small_scenario(n_humans_same_dir=2, n_humans_opposing=2, rng_seed=2)
    m, logs = run_episode(sc, light_planner(seed=2))
    c = replay_events(logs.robot, logs.humans, sc)
    assert (c["ps"], c["path"], c["collision"]) == (m.ps_violations, m.path_changes, m.collisions)


def test_metrics_consistency():
    m, _ = run_episode(small_scenario(rng_seed=4), light_planner(seed=4))
    assert m.outcome == "goal"
    assert m.avg_speed == pytest.approx(m.path_length / m.time_to_goal)
    assert min(m.path_changes, m.ps_violations, m.collisions) >= 0


def test_write_logs(tmp_path):
    m, logs = run_episode(small_scenario(), light_planner())
    paths = write_logs(logs, m, tmp_path)
    assert sorted(p.rsplit("/", 1)[1] for p in paths) == sorted(
        ["robot.csv", "humans.csv", "plans.csv", "events.csv", "metrics.csv"])
    assert (tmp_path / "metrics.csv").read_text() == metrics_csv(m)
    assert (tmp_path / "metrics.csv").read_text().splitlines()[0] == ",".join(METRICS_HEADER)
    assert (tmp_path / "events.csv").read_text().splitlines()[0] == ",".join(EVENT_LOG_HEADER)
    assert len((tmp_path / "robot.csv").read_text().splitlines()) == len(logs.robot) + 1


def test_follow_mode_runs():
    m, logs = run_episode(small_scenario(rng_seed=1), light_planner(mode="follow", seed=1))
    assert m.outcome in ("goal", "timeout")
    assert all(math.isnan(r[6]) for r in logs.plans)


@pytest.mark.parametrize("kw", [dict(human_speed=4.0), dict(sim_dt=0.0), dict(corridor_width=0.5),
                                dict(n_humans_opposing=-1)])
def test_scenario_validation(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw).validate()
