"""
Zonotope collision checks
=========================

Two boxes collide exactly when the center of one lies inside the
collision zonotope built from both.  Converting that set to half-spaces
turns the check into a handful of dot products, and the largest
half-space value is a signed distance proxy usable as a constraint.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from zapp.zonotope import Zonotope, are_disjoint, collision_zonotope, point_outside_margin, to_hrep

# an axis-aligned ego box and a rotated, skewed obstacle
ego = Zonotope([0.0, 0.0], 0.5 * np.eye(2))
obstacle = Zonotope([1.6, 0.4], [[0.6, 0.2, 0.0], [0.1, 0.4, 0.3]])

# centered on the obstacle, carrying both generator sets
cz = collision_zonotope(ego, obstacle)
h = to_hrep(cz)
print("collision zonotope has", cz.n_generators, "generators and", h.A.shape[0], "facets")

# slide the ego along x and watch the margin change sign
for x in np.linspace(-1.0, 2.0, 7):
    moved = ego.translate([x, 0.0])
    margin = point_outside_margin(h, moved.center)
    print(f"ego at x={x:5.2f}  margin={margin:6.3f}  disjoint={are_disjoint(moved, obstacle)}")

fig, ax = plt.subplots(figsize=(5, 4))
ax.fill(*cz.vertices_2d().T, color="tab:red", alpha=0.2, label="collision zonotope")
ax.fill(*obstacle.vertices_2d().T, color="0.4", label="obstacle")
ax.fill(*ego.vertices_2d().T, color="tab:blue", alpha=0.6, label="ego")
ax.set_aspect("equal")
ax.legend(loc="lower right")
fig.savefig("collision_check.svg")
print("wrote collision_check.svg")
