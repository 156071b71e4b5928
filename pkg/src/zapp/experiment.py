"""Run configured episode sets, serially or in a process pool."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig
from .metrics import MetricsRow, compute_metrics
from .simulator import EpisodeLog, Scene, generate_scene, run_episode


@dataclass(eq=False)
class EpisodeResult:
    scene: Scene
    log: EpisodeLog


def _run_one(args) -> EpisodeResult:
    cfg, seed = args
    scene = generate_scene(seed, cfg.simulator)
    return EpisodeResult(scene, run_episode(scene, cfg.planner, cfg.simulator, cfg.label))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[EpisodeResult]:
    """Episodes in seed order; results do not depend on ``jobs``."""
    tasks = [(cfg, s) for s in cfg.seeds]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))


def write_results(results: list[EpisodeResult], out: Path, plots: bool = True) -> MetricsRow:
    """Episode logs as JSONL, optional SVG plots; returns the metrics row."""
    ep_dir = out / "episodes"
    ep_dir.mkdir(parents=True, exist_ok=True)
    if plots:
        from .plotting import plot_episode

        plot_dir = out / "plots"
        plot_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        (ep_dir / f"seed_{r.scene.seed:06d}.jsonl").write_text(r.log.to_jsonl(r.scene))
        if plots:
            plot_episode(r.log, r.scene, plot_dir / f"seed_{r.scene.seed:06d}.svg")
    return compute_metrics([r.log for r in results])
