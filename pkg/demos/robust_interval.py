"""An interval that must hold for every mean in a box and every covariance in a family."""

import numpy as np

from twosided.distrobust import CovFamily, MeanBox, robust_feasible, worst_mean, worst_sigma
from twosided.formulation import AffineExpr as X, ChanceProblem, GaussianVector, RobustSet, TwoSidedCC
from twosided.solver import kelley_solve

x = np.array([1.0, 0.5])
box = MeanBox([-0.2, -0.1], [0.3, 0.1])
fam = CovFamily((np.eye(2), np.array([[1.5, 0.3], [0.3, 0.8]])))
print(f"mu' x ranges over {worst_mean(x, box)}, worst variance {worst_sigma(x, fam):.4f}")
for a, b in ((-2.5, 2.5), (-3.0, 3.0)):
    print(f"interval [{a}, {b}] robustly holds at eps = 0.05: "
          f"{robust_feasible(a, b, x, 0.05, box, fam)}")

cc = TwoSidedCC(X.var("a"), X.var("b"), tuple(X.const(v) for v in x),
                GaussianVector.standard(2), 0.05, RobustSet(box, fam))
p = ChanceProblem(("a", "b"), X.var("b") - X.var("a"), (), (cc,),
                  bounds={"a": (-20, 20), "b": (-20, 20)})
r = kelley_solve(p)
v = r.values()
print(f"narrowest robust interval [{v['a']:.4f}, {v['b']:.4f}], width {r.objective:.4f}, "
      f"worst-case probability {r.probabilities[0]:.6f} after {r.iterations} rounds")
