"""The quadratic chance constraint P((x xi1)^2 + (y xi2)^2 <= 1) >= 1 - eps.

Its feasible set can be nonconvex; three convex inner approximations are
compared against the exact probability on a coarse grid.
"""

import numpy as np

from twosided import quadcc

w = quadcc.nonconvexity_witness(n_trace=7)
print(f"eps = {w['eps']}: P at (0.6, 1.0) = {w['endpoint_left']:.4f}, "
      f"at (1.0, 0.6) = {w['endpoint_right']:.4f}, at the midpoint = {w['midpoint']:.4f}")
print(f"nonconvex: {w['nonconvex']}\n")

for eps in (0.5, 0.05):
    print(f"eps = {eps}: ball radius {quadcc.ball_radius(eps):.4f}, "
          f"box half-width {quadcc.box_half_width(eps):.4f}")
    rows = quadcc.compare_grid(eps, n=13)
    cells = np.array([r[3:] for r in rows], dtype=bool)
    names = ("exact", "two_sided", "robust", "cvar")
    print("   cells feasible: " + ", ".join(f"{n} {c}" for n, c in zip(names, cells.sum(axis=0))))
    worst = min((r[2] for r in rows if any(r[4:])), default=float("nan"))
    print(f"   lowest true probability among approximation-feasible cells: {worst:.4f}\n")
