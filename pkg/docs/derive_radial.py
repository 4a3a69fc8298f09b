"""Symbolic check of the radial vortex equations used by ``glvortex.vortex``.

Run with ``python3 docs/derive_radial.py``; it exits non-zero on a mismatch.
"""
import sympy as sp

r, th, kappa = sp.symbols("r theta kappa", positive=True)
n = sp.symbols("n", integer=True, nonzero=True)
f, a = sp.Function("f")(r), sp.Function("a")(r)

# equivariant ansatz in polar coordinates: Psi = f e^{i n theta}, A = n a / r e_theta
psi = f * sp.exp(sp.I * n * th)
A_r, A_th = 0, n * a / r

# covariant derivative components (radial, angular) and the field B = curl A
D_r = sp.diff(psi, r) - sp.I * A_r * psi
D_th = sp.diff(psi, th) / r - sp.I * A_th * psi
B = sp.diff(r * A_th, r) / r
# f and a are real, so conjugation only flips the sign of i
conj = lambda e: e.subs(sp.I, -sp.I)
kin = sp.simplify(sp.expand(D_r * conj(D_r) + D_th * conj(D_th)))
density = sp.Rational(1, 2) * (kin + B**2 + kappa**2 / 2 * (1 - f**2) ** 2)

# angular integration gives the radial Lagrangian 2 pi r * density
lagrangian = sp.simplify(2 * sp.pi * r * density)
expected = sp.pi * r * (sp.diff(f, r) ** 2 + n**2 * (1 - a) ** 2 * f**2 / r**2
                        + n**2 * sp.diff(a, r) ** 2 / r**2 + kappa**2 / 2 * (1 - f**2) ** 2)
assert sp.simplify(lagrangian - expected) == 0, "radial energy density mismatch"

eq_f, eq_a = sp.euler_equations(lagrangian, [f, a], r)
ode_f = sp.diff(f, r, 2) + sp.diff(f, r) / r - n**2 / r**2 * (1 - a) ** 2 * f + kappa**2 * (1 - f**2) * f
ode_a = sp.diff(a, r, 2) - sp.diff(a, r) / r + (1 - a) * f**2
assert sp.simplify(eq_f.lhs / (-2 * sp.pi * r) - ode_f) == 0, "f equation mismatch"
assert sp.simplify(eq_a.lhs * r / (-2 * sp.pi * n**2) - ode_a) == 0, "a equation mismatch"

# flux of the ansatz through a disc of radius R is 2 pi n a(R)
R = sp.symbols("R", positive=True)
flux = sp.integrate(B * 2 * sp.pi * r, (r, 0, R))
assert sp.simplify(flux - 2 * sp.pi * n * (a.subs(r, R) - a.subs(r, 0))) == 0

print("radial energy density:", sp.simplify(expected / (2 * sp.pi * r)))
print("f equation:", sp.Eq(ode_f, 0))
print("a equation:", sp.Eq(ode_a, 0))
print("all symbolic checks passed")
