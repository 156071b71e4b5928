"""
One hallway episode, two planners
=================================

Runs the same seeded scene with the continuous-time planner and with the
variant that only checks sample times, then prints the outcome of each
and writes an overhead plot.  Pass a seed as the first argument.
"""

import sys

from zapp.config import ExperimentConfig
from zapp.plotting import plot_episode
from zapp.simulator import generate_scene, run_episode

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

for variant in ("zapp", "discrete-baseline"):
    cfg = ExperimentConfig.from_dict({"variant": variant, "scenes": 1, "seed": seed})
    scene = generate_scene(seed, cfg.simulator)
    log = run_episode(scene, cfg.planner, cfg.simulator, variant)

    # outcome, average speed and planner effort
    print(f"{variant:18s} {log.outcome:8s} after {log.times[-1]:5.1f} s, "
          f"{log.avg_speed:.2f} m/s, {log.solve_times.mean():.3f} s per solve")
    if log.crash_with is not None:
        print("  hit", log.crash_with)

    plot_episode(log, scene, f"hallway_{variant}_{seed}.svg")
