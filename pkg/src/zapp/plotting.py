"""Overhead SVG plots of an episode with time-faded agents and ego plans."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon, Rectangle  # noqa: E402

from .simulator import EpisodeLog, Scene  # noqa: E402

# Fixed metadata so repeated runs write byte-identical files.
_SVG_META = {"Date": None, "Creator": "zapp"}


def plot_episode(log: EpisodeLog, scene: Scene, path: str | Path | None = None, snapshots: int = 12,
                 half_size: float = 0.5):
    """Draw walls, agent boxes fading in with time, the ego path and its plans."""
    plt.rcParams["svg.hashsalt"] = "zapp"
    fig, ax = plt.subplots(figsize=(12, 3.6))
    for wall in scene.obstacles:
        ax.add_patch(Polygon(wall.vertices_2d(), closed=True, color="0.35", lw=0))
    T = len(log.times)
    idx = np.unique(np.linspace(0, T - 1, snapshots).round().astype(int))
    n = log.states.shape[1]
    cmap = plt.get_cmap("tab10")
    for i in range(1, n):
        color = cmap((i - 1) % 10)
        ax.plot(log.states[:, i, 0], log.states[:, i, 1], color=color, lw=0.6, alpha=0.5)
        for j, k in enumerate(idx):
            fade = 0.1 + 0.6 * (j + 1) / len(idx)
            p = log.states[k, i, :2]
            ax.add_patch(Rectangle(p - half_size, 2 * half_size, 2 * half_size, color=color, alpha=fade, lw=0))
    for j, s in enumerate(log.solves):
        fade = 0.15 + 0.6 * (j + 1) / max(1, len(log.solves))
        for plan in np.asarray(s.ego_plans):
            ax.plot(plan[:, 0], plan[:, 1], color="crimson", lw=0.8, alpha=fade)
    ax.plot(log.states[:, 0, 0], log.states[:, 0, 1], color="black", lw=1.6, label="ego")
    ax.plot(*scene.goal, marker="*", color="gold", ms=12, mec="black")
    if log.outcome == "crash":
        ax.plot(*log.states[-1, 0, :2], marker="x", color="red", ms=12, mew=2.5)
    ax.set_aspect("equal")
    lo = min(scene.start[0], scene.goal[0]) - 3.0
    hi = max(scene.start[0], scene.goal[0]) + 6.0
    ax.set_xlim(lo, hi)
    ys = np.concatenate([w.vertices_2d()[:, 1] for w in scene.obstacles]) if scene.obstacles else np.array([-5, 5])
    ax.set_ylim(ys.min(), ys.max())
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{log.variant}  seed {log.seed}  {log.outcome} at {log.outcome_time:.2f} s")
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg", metadata=_SVG_META)
        plt.close(fig)
        return None
    return fig
