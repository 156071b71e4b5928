"""
Why sample-time reach sets are not enough
=========================================

A fast agent can jump across a thin region between two planner steps.
Checking only the sets at the sample times misses it.  Covering each
interval with two swept pieces closes the gap.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from zapp.reachset import interval_pieces
from zapp.zonotope import Zonotope, are_disjoint, confidence_zonotope, to_hrep

# agent moving at 3 m/s, sampled every 0.4 s
Sigma = 0.01 * np.eye(2)
z0 = confidence_zonotope([0.0, 0.0], Sigma)
z1 = confidence_zonotope([1.2, 0.0], Sigma)

# a thin post sitting between the two samples
post = Zonotope([0.6, 0.0], np.diag([0.05, 0.3]))

print("post hit at sample times:", not (are_disjoint(z0, post) and are_disjoint(z1, post)))
a, b = interval_pieces(z0, z1)
print("post hit by swept pieces:", not (are_disjoint(a, post) and are_disjoint(b, post)))

# every point on the straight path is covered by one of the pieces
path = np.linspace(0, 1, 101)[:, None] * np.array([1.2, 0.0])
ha, hb = to_hrep(a), to_hrep(b)
covered = [ha.contains(p, 1e-9) or hb.contains(p, 1e-9) for p in path]
print("path points covered:", sum(covered), "of", len(path))

fig, ax = plt.subplots(figsize=(6, 2.5))
for z, color in ((a, "tab:orange"), (b, "tab:green")):
    ax.fill(*z.vertices_2d().T, color=color, alpha=0.3)
for z in (z0, z1):
    ax.fill(*z.vertices_2d().T, color="tab:blue", alpha=0.6)
ax.fill(*post.vertices_2d().T, color="0.3")
ax.plot(path[:, 0], path[:, 1], "k--", lw=0.8)
ax.set_aspect("equal")
fig.savefig("continuous_reach.svg")
print("wrote continuous_reach.svg")
