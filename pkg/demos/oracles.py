"""Membership, support, projection and separation for S(eps).

S(eps) is the set of (x, y) with Phi(y) - Phi(x) >= 1 - eps: the interval
endpoints a standard normal stays inside with probability at least 1 - eps.
"""

from twosided import seps
from twosided.gauss import Phi_inv

eps = 0.05

# the narrowest symmetric interval sits where x - y is largest
value, argmax = seps.support(1.0, -1.0, eps)
print(f"max x - y over S({eps}) = {value:.6f}  (2 Phi_inv(eps/2) = {2 * Phi_inv(eps / 2):.6f})")
print(f"attained at {tuple(round(v, 6) for v in argmax)}")

for p in [(-3.0, 3.0), (-1.0, 1.0), (0.5, 2.0)]:
    inside = seps.contains(p, eps)
    line = f"point {p}: mass {seps.mass(p):.4f}, inside {inside}"
    if not inside:
        proj = seps.project(p, eps)
        cut = seps.separate_tangent(p, eps)
        line += (f"\n    projection {tuple(round(v, 4) for v in proj.point)}"
                 f"\n    tangent cut {cut.a1:.4f} x + {cut.a2:.4f} y <= {cut.rhs:.4f}")
    print(line)

# the conic hull handles a scaled standard deviation t
q = (-2.0, 2.0, 1.2)
print(f"cone point {q}: inside {seps.cone_contains(q, eps)}")
h = seps.cone_separate(q, eps)
print(f"    cut {h.a1:.4f} a + {h.a2:.4f} b + {h.a3:.4f} t <= 0, value {h.violation(q):.4f}")
