"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Reports the best of N runs per kernel at planner-realistic sizes, then a
whole planning call with each backend swapped in. Outputs are checked for
bit equality along the way.
"""
import argparse
import timeit

import numpy as np

from peekpass import _kernels as K
from peekpass.dynamics import Pose2, Twist
from peekpass.planner import PlannerConfig, plan, spawn_frontier
from peekpass.predict import AgentTrack, heading_bins, predict_fan, spawn_phantoms
from peekpass.sim import corridor_grid
from peekpass.world import frontier_cells, inflate, visible_region


def best(fn, repeat):
    fn()  # warm-up, includes jit compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    g = corridor_grid(50.0, 3.0)
    agents = np.array([[6.0, 0.75, 0.25], [9.0, 2.25, 0.25], [12.0, 0.8, 0.25]])
    vis = (g.cells, g.resolution, g.origin[0], g.origin[1], 2.0, 0.75, 10.0, agents)
    rng = np.random.default_rng(0)
    gap = (rng.normal(size=(8000, 5, 2)), rng.normal(size=(640, 5, 2)), np.full(640, 0.45))
    mask = visible_region(g, Pose2(2.0, 0.75), 10.0, [((a[0], a[1]), a[2]) for a in agents])
    cells = frontier_cells(mask, g)
    cone = (mask.visible & (g.cells == 0), g.resolution, g.origin[0], g.origin[1], cells, heading_bins(), 1.0)
    return {"visibility": vis, "min_gap": gap, "cone": cone}


def plan_case():
    g = corridor_grid(50.0, 3.0)
    cm = inflate(g, 0.2, 0.6)
    cfg = PlannerConfig()
    pose = Pose2(2.0, 0.75)
    tr = AgentTrack(1, np.array([5.0, 0.75]), np.array([0.5, 0.0]))
    mask = visible_region(g, pose, cfg.sensor_range, [((5.0, 0.75), 0.25)])
    fans = [predict_fan(tr, cfg.horizon, cfg.dt_sample, cfg.n_samples, rng_seed=0)]
    ph = spawn_phantoms(spawn_frontier(mask, g, [tr], 0.25), mask, pose, cfg.horizon, cfg.dt_sample,
                        cfg.m_samples, rng_seed=0)
    return lambda: plan(pose, Twist(1.0, 0.0), Pose2(49.0, 0.75), cm, fans, ph, cfg)


def use(backend):
    src = {"numpy": (K.visibility_numpy, K.min_gap_numpy, K.cone_numpy),
           "numba": (K.visibility_numba, K.min_gap_numba, K.cone_numba)}[backend]
    K.visibility, K.min_gap, K.cone = src


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if K.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'case':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, a in kernel_cases().items():
        f_np, f_nb = getattr(K, f"{name}_numpy"), getattr(K, f"{name}_numba")
        assert np.array_equal(f_np(*a), f_nb(*a)), name
        t_np = best(lambda: f_np(*a), args.repeat)
        t_nb = best(lambda: f_nb(*a), args.repeat)
        print(f"{name:<12} {1e3 * t_np:>10.2f} {1e3 * t_nb:>10.2f} {t_np / t_nb:>7.1f}x")
    run = plan_case()
    times = {}
    for backend in ("numpy", "numba"):
        use(backend)
        times[backend] = best(run, args.repeat)
    print(f"{'plan':<12} {1e3 * times['numpy']:>10.2f} {1e3 * times['numba']:>10.2f} "
          f"{times['numpy'] / times['numba']:>7.1f}x")


if __name__ == "__main__":
    main()
