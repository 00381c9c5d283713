"""Three-cut and two-cut polyhedral outer approximations with their factors.

A factor alpha means every point of the polyhedron captures mass at least
1 - alpha * eps, so using the polyhedron at eps / alpha is conservative.
"""

from twosided import polyapprox

print(f"{'eps':>8} {'alpha(A)':>10} {'alpha(B)':>10} {'alpha(T16)':>11}")
for eps in (1e-4, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.5):
    a = polyapprox.certify_alpha(polyapprox.build_A(eps), eps).alpha
    b = polyapprox.certify_alpha(polyapprox.build_B(eps), eps).alpha
    t = polyapprox.certify_alpha(polyapprox.build_tangent(eps, 16), eps).alpha
    print(f"{eps:8.4g} {a:10.5f} {b:10.5f} {t:11.5f}")

cert = polyapprox.certify_alpha(polyapprox.build_B(0.5), 0.5)
print(f"\nworst vertex of B at eps = 1/2: {tuple(round(v, 5) + 0.0 for v in cert.worst_vertex)}, "
      f"uncaptured mass {cert.worst_mass_deficit:.6f}")

print("\nsquared quantile gap Phi_inv(1 - eps/2)^2 - Phi_inv(1 - eps)^2 approaches 2 log 2 slowly:")
for eps in (1e-2, 1e-6, 1e-12, 1e-50, 1e-300):
    print(f"  eps = {eps:8.0e}: {polyapprox.squared_quantile_gap(eps):.6f}")
