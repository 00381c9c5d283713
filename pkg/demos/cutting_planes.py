"""Kelley's method over the exact separation oracle, round by round."""

from twosided.formulation import AffineExpr as X, ChanceProblem, GaussianVector, TwoSidedCC
from twosided.gauss import Phi_inv
from twosided.solver import KelleyOptions, kelley_solve

eps = 0.05
cc = TwoSidedCC(X.var("a"), X.var("b"), (X.const(1.0),), GaussianVector.standard(1), eps)
p = ChanceProblem(("a", "b"), X.var("b") - X.var("a"), (), (cc,),
                  bounds={"a": (-10, 10), "b": (-10, 10)})
r = kelley_solve(p, KelleyOptions(seed_cuts=False))
print(r.history_csv())
print(f"width {r.objective:.9f}, closed form {-2 * Phi_inv(eps / 2):.9f}, cuts {r.cuts_added}")
