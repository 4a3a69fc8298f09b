"""Radial n-vortex profiles, their energy and fields, critical fields, and
the fiber blocks of the linearized operator.

Discretization
--------------
Continuous piecewise polynomials of degree ``p`` on equal elements of
``[0, R_max]``.  Element nodes are Gauss-Lobatto points, except on the
element touching the axis where Gauss-Radau points exclude ``r = 0``.
Integrals use the nodal quadrature of each element, so the mass matrix is
diagonal.  ``a`` is represented through ``w = a / r`` so that ``a(0) = 0``
holds identically; ``f = a = 1`` at ``R_max``.  The profile equations are
the exact gradient of the quadrature energy

    E_h = pi sum_q w_q r_q [ f'^2 + n^2 (1-a)^2 f^2 / r^2 + n^2 a'^2 / r^2
                             + kappa^2/2 (1 - f^2)^2 ]

so Newton's method uses the exact Hessian.  Fiber operators are Hessians of
quadrature sums on the same grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import k1, roots_jacobi

TWO_PI = 2.0 * math.pi
SELF_DUAL = 1.0 / math.sqrt(2.0)


def decay_rate(kappa: float) -> float:
    """``m_kappa = min(sqrt(2) kappa, 2)``."""
    return min(math.sqrt(2.0) * kappa, 2.0)


def default_rmax(kappa: float) -> float:
    return max(20.0 / decay_rate(kappa), 20.0)


# ---------------------------------------------------------------------------
# Spectral-element grid
# ---------------------------------------------------------------------------

DEGREE = 8


def _diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the interpolant through nodes ``x``."""
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    lam = 1.0 / np.prod(diff, axis=1)
    D = (lam[None, :] / lam[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def _lagrange_eval(xn: np.ndarray, yn: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Interpolating polynomial through ``(xn, yn)`` evaluated at ``x`` (low degree)."""
    diff = x[:, None] - xn[None, :]
    out = np.zeros(x.size)
    for j in range(xn.size):
        others = np.delete(np.arange(xn.size), j)
        basis = np.prod(diff[:, others] / (xn[j] - xn[others])[None, :], axis=1)
        out += yn[j] * basis
    return out


def _lobatto(p: int):
    c = np.zeros(p + 1)
    c[-1] = 1.0
    inner = np.sort(np.real(np.polynomial.legendre.legroots(np.polynomial.legendre.legder(c))))
    x = np.concatenate([[-1.0], inner, [1.0]])
    w = 2.0 / (p * (p + 1) * np.polynomial.legendre.legval(x, c) ** 2)
    return x, w


def _radau(p: int):
    x, w = roots_jacobi(p - 1, 1, 0)
    return np.append(x, 1.0), np.append(w / (1 - x), 2.0 / p**2)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes, quadrature points and element operators on ``(0, R_max]``.

    ``nodes`` are the ``N`` global nodes (last one ``R_max``).  Quadrature
    points are the element nodes listed per element, so interface nodes
    appear twice.  ``P`` maps nodal values to quadrature points, ``D``
    gives element-wise derivatives there and ``wq`` are the weights.
    """

    N: int
    R_max: float
    p: int
    nodes: np.ndarray
    rq: np.ndarray
    wq: np.ndarray
    P: sp.csr_matrix
    D: sp.csr_matrix

    @property
    def Wq(self) -> np.ndarray:
        """Quadrature weights times ``r``."""
        return self.wq * self.rq

    @property
    def mass(self) -> np.ndarray:
        """Lumped (and exact for the rule) nodal weights of ``r dr``."""
        return self.P.T @ self.Wq

    def nodal_derivative(self, values: np.ndarray) -> np.ndarray:
        """Weighted average of the element derivatives at each node."""
        return (self.P.T @ (self.Wq * (self.D @ values))) / self.mass

    def evaluate(self, values: np.ndarray, x, derivative: bool = False) -> np.ndarray:
        """Evaluate the piecewise polynomial (or its derivative) at points ``x`` in ``[0, R_max]``."""
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        E = self.N // self.p
        h = self.R_max / E
        elem = np.clip((flat // h).astype(int), 0, E - 1)
        out = np.empty_like(flat)
        vq = self.P @ values
        dq = self.D @ values
        starts = np.concatenate([[0], self.p + np.arange(E) * (self.p + 1)])
        for e in np.unique(elem):
            sl = slice(starts[e], starts[e + 1])
            xe = self.rq[sl]
            ye = dq[sl] if derivative else vq[sl]
            m = elem == e
            out[m] = _lagrange_eval(xe, ye, flat[m])
        return out.reshape(x.shape)


@lru_cache(maxsize=16)
def radial_grid(N: int, R_max: float, p: int = DEGREE) -> RadialGrid:
    if N % p:
        raise ValueError(f"N must be a multiple of the element degree {p}")
    E = N // p
    h = R_max / E
    xr, wr = _radau(p)
    xl, wl = _lobatto(p)
    Dr, Dl = _diff_matrix(xr), _diff_matrix(xl)
    rq, wq, rows_P, cols, rows_D, cols_D, vals_D = [], [], [], [], [], [], []
    q0 = 0
    for e in range(E):
        left = e * h
        if e == 0:
            x, w, Dloc, gidx = xr, wr, Dr, np.arange(p)
        else:
            x, w, Dloc, gidx = xl, wl, Dl, np.arange(e * p - 1, (e + 1) * p)
        k = x.size
        rq.append(left + 0.5 * h * (x + 1.0))
        wq.append(0.5 * h * w)
        rows_P.append(q0 + np.arange(k))
        cols.append(gidx)
        ii, jj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        rows_D.append(q0 + ii.ravel())
        cols_D.append(gidx[jj.ravel()])
        vals_D.append((Dloc * (2.0 / h)).ravel())
        q0 += k
    rq, wq = np.concatenate(rq), np.concatenate(wq)
    P = sp.csr_matrix((np.ones(q0), (np.concatenate(rows_P), np.concatenate(cols))), shape=(q0, N))
    D = sp.csr_matrix((np.concatenate(vals_D), (np.concatenate(rows_D), np.concatenate(cols_D))), shape=(q0, N))
    nodes = np.zeros(N)
    nodes[P.indices] = rq
    return RadialGrid(N, float(R_max), p, nodes, rq, wq, P, D)


def _dirichlet_maps(g: RadialGrid, bval: float):
    """Quadrature values and derivatives of a field with value ``bval`` at ``R_max``.

    Unknowns are the first ``N - 1`` nodal values.  Returns ``(P, p0, D, d0)``.
    """
    P, D = g.P, g.D
    return (
        P[:, :-1].tocsr(),
        P[:, -1].toarray().ravel() * bval,
        D[:, :-1].tocsr(),
        D[:, -1].toarray().ravel() * bval,
    )


@lru_cache(maxsize=16)
def _profile_maps(N: int, R_max: float):
    """Affine maps for ``f`` and for ``a = r w`` (``w`` the unknown)."""
    g = radial_grid(N, R_max)
    Pf, pf, Df, df = _dirichlet_maps(g, 1.0)
    Pw, pw, Dw, dw = _dirichlet_maps(g, 1.0 / R_max)
    r = sp.diags(g.rq)
    return (Pf, pf, Df, df), ((r @ Pw).tocsr(), g.rq * pw, (r @ Dw + Pw).tocsr(), g.rq * dw + pw)


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """Radial vortex pair ``(f, a)`` at the grid nodes ``r`` (last node ``R_max``)."""

    n: int
    kappa: float
    r: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    residual: float = float("nan")
    history: tuple = field(default=(), repr=False)

    @property
    def N(self) -> int:
        return self.r.size

    @property
    def R_max(self) -> float:
        return float(self.r[-1])

    @property
    def grid(self) -> RadialGrid:
        return radial_grid(self.N, self.R_max)

    @property
    def weights(self) -> np.ndarray:
        """Nodal weights of ``r dr``."""
        return self.grid.mass

    @property
    def unknowns(self) -> np.ndarray:
        return np.concatenate([self.f[:-1], (self.a / self.r)[:-1]])

    @property
    def fprime(self) -> np.ndarray:
        return self.grid.nodal_derivative(self.f)

    @property
    def aprime(self) -> np.ndarray:
        return self.grid.nodal_derivative(self.a)

    def interpolator(self) -> dict:
        """Callables for ``f, a, f', a'`` on ``[0, inf)``; constant beyond ``R_max``."""
        return _interpolants(self)

    def to_rows(self):
        B, J = profile_field(self)
        return [(float(r), float(f), float(a), float(b), float(j)) for r, f, a, b, j in zip(self.r, self.f, self.a, B, J)]


def _interpolants(p: RadialProfile) -> dict:
    g = p.grid
    R = p.R_max
    w = p.a / p.r

    def clip(fun, outside):
        def h(x):
            x = np.asarray(x, dtype=float)
            out = np.full(x.shape, outside)
            m = x <= R
            if np.any(m):
                out[m] = fun(x[m])
            return out

        return h

    return {
        "f": clip(lambda x: g.evaluate(p.f, x), 1.0),
        "a": clip(lambda x: x * g.evaluate(w, x), 1.0),
        "fp": clip(lambda x: g.evaluate(p.f, x, True), 0.0),
        "ap": clip(lambda x: g.evaluate(w, x) + x * g.evaluate(w, x, True), 0.0),
    }


def _fields(x, N, R_max):
    (Pf, pf, Df, df), (Pa, pa, Da, da) = _profile_maps(N, R_max)
    xf, xw = x[: N - 1], x[N - 1 :]
    return Pf @ xf + pf, Df @ xf + df, Pa @ xw + pa, Da @ xw + da


def discrete_energy(x: np.ndarray, n: int, kappa: float, N: int, R_max: float) -> float:
    """Quadrature energy of the unknowns ``[f_1..f_{N-1}, w_1..w_{N-1}]`` with ``w = a/r``."""
    n = abs(n)
    g = radial_grid(N, R_max)
    r = g.rq
    fv, fd, av, ad = _fields(x, N, R_max)
    dens = fd**2 + n * n * ((1 - av) ** 2 * fv**2 + ad**2) / r**2 + 0.5 * kappa**2 * (1 - fv**2) ** 2
    return float(math.pi * np.sum(g.Wq * dens))


def energy_gradient(x, n, kappa, N, R_max):
    """Gradient and (sparse) Hessian of :func:`discrete_energy`."""
    n = abs(n)
    (Pf, _, Df, _), (Pa, _, Da, _) = _profile_maps(N, R_max)
    g = radial_grid(N, R_max)
    r, W = g.rq, g.Wq
    fv, fd, av, ad = _fields(x, N, R_max)
    n2 = n * n
    dg = sp.diags
    gf = Df.T @ (W * fd) + Pf.T @ (W * (n2 * (1 - av) ** 2 * fv / r**2 - kappa**2 * (1 - fv**2) * fv))
    ga = Da.T @ (W * n2 * ad / r**2) + Pa.T @ (W * (-n2 * (1 - av) * fv**2 / r**2))
    grad = 2 * math.pi * np.concatenate([gf, ga])
    Hff = Df.T @ dg(W) @ Df + Pf.T @ dg(W * (n2 * (1 - av) ** 2 / r**2 - kappa**2 * (1 - 3 * fv**2))) @ Pf
    Haa = Da.T @ dg(W * n2 / r**2) @ Da + Pa.T @ dg(W * n2 * fv**2 / r**2) @ Pa
    Hfa = Pf.T @ dg(W * (-2 * n2 * (1 - av) * fv / r**2)) @ Pa
    H = 2 * math.pi * sp.bmat([[Hff, Hfa], [Hfa.T, Haa]], format="csc")
    return grad, H


def strong_residual(x, n, kappa, N, R_max) -> np.ndarray:
    """ODE residuals at the interior nodes recovered from the energy gradient.

    ``f'' + f'/r - n^2 (1-a)^2 f / r^2 + kappa^2 (1-f^2) f`` and
    ``a'' - a'/r + (1-a) f^2``, each from the gradient divided by the nodal
    weight (``w = a/r`` contributes a factor ``r``).
    """
    n = abs(n)
    grad, _ = energy_gradient(x, n, kappa, N, R_max)
    g = radial_grid(N, R_max)
    r, M = g.nodes[:-1], g.mass[:-1]
    gf, gw = grad[: N - 1], grad[N - 1 :]
    return np.concatenate([-gf / (2 * math.pi * M), -gw * r / (2 * math.pi * M * n * n)])


def _initial_guess(n: int, r: np.ndarray, kappa: float):
    s = max(1.0, 1.0 / decay_rate(kappa))
    f = np.tanh(r / (s * math.sqrt(n))) ** n
    a = r**2 / (r**2 + 2.0 * n)
    return f, a


def solve_profile(n: int, kappa: float, R_max: float | None = None, N: int = 800,
                  tol: float = 1e-8, max_iter: int = 80) -> RadialProfile:
    """Newton solution of the radial vortex equations.

    Newton's method on the quadrature energy gradient with Armijo
    backtracking on the energy.  Convergence requires the ODE residual
    sup-norm to drop below ``tol``; iteration continues to round-off.
    ``N`` (the number of grid nodes) must be a multiple of the element
    degree.
    """
    if int(n) != n or n == 0:
        raise ValueError("vortex degree must be a nonzero integer")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if R_max is None:
        R_max = default_rmax(kappa)
    if R_max < 20.0 / decay_rate(kappa) - 1e-12:
        raise ValueError(f"R_max must be at least 20/m_kappa = {20.0 / decay_rate(kappa):.6g}")
    if N < 400:
        raise ValueError("N must be at least 400")
    m = abs(int(n))
    R_max = float(R_max)
    r = radial_grid(N, R_max).nodes
    f0, a0 = _initial_guess(m, r, kappa)
    x = np.concatenate([f0[:-1], (a0 / r)[:-1]])
    history = []
    res = np.inf
    best = (np.inf, x)
    for it in range(max_iter):
        grad, H = energy_gradient(x, m, kappa, N, R_max)
        res = float(np.max(np.abs(strong_residual(x, m, kappa, N, R_max))))
        if res < best[0]:
            best = (res, x)
        if res < tol and (res < 1e-11 or (history and history[-1][1] < 10 * res)):
            break
        step = spla.spsolve(H, -grad)
        E0 = discrete_energy(x, m, kappa, N, R_max)
        slope = float(grad @ step)
        t = 1.0
        if slope < 0 and res > 1e-6:
            while t > 1e-6 and discrete_energy(x + t * step, m, kappa, N, R_max) > E0 + 1e-4 * t * slope:
                t *= 0.5
        history.append((it, res, t))
        x = x + t * step
    res, x = best
    if not res < tol:
        raise RuntimeError(f"profile Newton iteration did not converge; history {history}")
    f = np.append(x[: N - 1], 1.0)
    a = r * np.append(x[N - 1 :], 1.0 / R_max)
    return RadialProfile(int(n), float(kappa), r, f, a, res, tuple(history))


def _require_converged(p: RadialProfile):
    if not p.residual < 1e-8:
        raise ValueError("profile is not converged")


def profile_energy(p: RadialProfile) -> float:
    """Energy ``pi int_0^R_max [...] r dr`` by the element quadrature of the profile grid.

    This is the functional whose gradient the solver drives to zero.  The
    neglected tail beyond ``R_max`` is of order ``exp(-2 m_kappa R_max)``
    (see :func:`energy_tail_estimate`).
    """
    _require_converged(p)
    return discrete_energy(p.unknowns, p.n, p.kappa, p.N, p.R_max)


def energy_tail_estimate(p: RadialProfile) -> float:
    return float(math.pi * p.R_max * math.exp(-2.0 * decay_rate(p.kappa) * p.R_max))


def bogomolnyi_excess(p: RadialProfile) -> float:
    """``pi int [(f' - n(1-a)f/r)^2 + (n a'/r - (1-f^2)/2)^2] r dr`` at ``kappa = 1/sqrt(2)``.

    Non-negative by construction; equals ``E - pi |n|`` for the self-dual
    functional up to the boundary term at ``R_max``.
    """
    n = abs(p.n)
    g = p.grid
    r = g.rq
    fv, fd, av, ad = _fields(p.unknowns, p.N, p.R_max)
    sq = (fd - n * (1 - av) * fv / r) ** 2 + (n * ad / r - 0.5 * (1 - fv**2)) ** 2
    return float(math.pi * math.fsum(g.Wq * sq))


def profile_field(p: RadialProfile) -> tuple[np.ndarray, np.ndarray]:
    """Magnetic field ``B = n a'/r`` and supercurrent ``J = n f^2 (1-a)/r`` at the nodes."""
    _require_converged(p)
    B = p.n * p.aprime / p.r
    J = p.n * p.f**2 * (1 - p.a) / p.r
    return B, J


def total_flux(p: RadialProfile) -> float:
    """``2 pi int B r dr`` by the element quadrature."""
    g = p.grid
    w = p.a / p.r
    a_prime = g.P @ w + g.rq * (g.D @ w)
    return float(TWO_PI * p.n * np.sum(g.wq * a_prime))


def fit_decay_rate(p: RadialProfile, lo: float = 1e-10, hi: float = 1e-4, margin: float = 4.0) -> float:
    """Asymptotic decay rate of ``1 - f``.

    The local rate ``-(log(1-f))'`` is regressed on ``[1, 1/r]`` over the
    window where ``lo < 1-f < hi`` (away from the outer boundary) and the
    intercept is returned, which removes algebraic prefactors of the tail.
    """
    w = 1.0 - p.f
    mask = (w > lo) & (w < hi) & (p.r < p.R_max - margin)
    if mask.sum() < 8:
        raise ValueError("decay window too short; increase R_max")
    r = p.r[mask]
    rate = -np.gradient(np.log(w[mask]), r)
    A = np.column_stack([np.ones_like(r), 1.0 / r])
    return float(np.linalg.lstsq(A, rate, rcond=None)[0][0])


def field_bessel_ratio(p: RadialProfile, r_lo: float = 8.0, r_hi: float = 12.0) -> np.ndarray:
    """``B(r) / K_1(r)`` on ``[r_lo, r_hi]``."""
    B, _ = profile_field(p)
    mask = (p.r >= r_lo) & (p.r <= r_hi)
    return B[mask] / k1(p.r[mask])


@dataclass(frozen=True)
class CriticalFields:
    kappa: float
    h_c1: float
    h_c2: float
    E1: float

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "h_c1": self.h_c1, "h_c2": self.h_c2, "E1": self.E1}


def critical_fields(kappa: float, N: int = 800) -> CriticalFields:
    """``h_c2 = kappa^2`` and ``h_c1 = E^(1) / (2 pi)``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    E1 = profile_energy(solve_profile(1, kappa, N=N))
    return CriticalFields(float(kappa), E1 / TWO_PI, float(kappa**2), E1)


# ---------------------------------------------------------------------------
# Fiber operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiberOperator:
    """Block ``L_m`` of the gauge-fixed Hessian on ``(u, v, p, q)``.

    Perturbations are ``xi = e^{i n theta} (u cos m theta - i v sin m theta)``
    and ``alpha = p sin(m theta) e_r + q cos(m theta) e_theta``.  ``H`` is
    the symmetric matrix of the quadrature form and ``mass`` the diagonal
    weights of the ``L^2(r dr)`` inner product, so ``L_m = mass^{-1} H``.
    Unknowns are the four components at the grid nodes below R_max.
    """

    n: int
    m: int
    kappa: float
    H: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)
    boundary: str = "Dirichlet at R_max"

    @property
    def shape(self) -> tuple:
        return self.H.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (self.H @ x) / self.mass

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.mass * x * x)))

    def symmetric_form(self) -> sp.csr_matrix:
        s = sp.diags(1.0 / np.sqrt(self.mass))
        return (s @ self.H @ s).tocsr()

    def lowest(self, k: int = 4) -> tuple[np.ndarray, np.ndarray]:
        """Lowest ``k`` eigenpairs of ``L_m`` (eigenvectors in the unknown variables).

        Shift-invert Lanczos below the spectrum; dense fallback for small grids.
        """
        A = self.symmetric_form()
        if A.shape[0] <= 600:
            vals, vecs = sla.eigh(A.toarray(), subset_by_index=(0, k - 1))
        else:
            sigma = -2.0 - 2.0 * self.kappa**2
            vals, vecs = spla.eigsh(A.tocsc(), k=k, sigma=sigma, which="LM")
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        return vals, vecs / np.sqrt(self.mass)[:, None]


def fiber_operator(p: RadialProfile, m: int, gauge_weight: float = 1.0) -> FiberOperator:
    """Assemble ``L_m`` for the profile ``p``.

    The quadratic form (per unit ``r dr``) is

        u'^2 + (v' + f p)^2 + (m u/r - b v)^2 + (b u - m v/r - f q)^2
        + (q' + q/r - m p/r)^2 + (p' + p/r - m q/r + f v)^2
        - 2 f' p v - 2 b f q u + kappa^2 [(3 f^2 - 1) u^2 + (f^2 - 1) v^2]

    with ``b = n (1 - a)/r``; the second-to-last square fixes the gauge.
    Components vanish at ``R_max`` and are otherwise unconstrained.
    """
    if abs(m) > 8:
        raise ValueError("fiber index must satisfy |m| <= 8")
    if not p.residual < 1e-8:
        raise ValueError("fiber operators need a converged profile")
    n, N, kappa = p.n, p.N, p.kappa
    g = p.grid
    r, W = g.rq, g.Wq
    f = g.P @ p.f
    fp = g.D @ p.f
    bb = n * (1 - g.P @ p.a) / r
    P, _, D, _ = _dirichlet_maps(g, 0.0)
    Q = P.shape[0]
    Z = sp.csr_matrix((Q, N - 1))
    dg = sp.diags

    def row(cu=Z, cv=Z, cp=Z, cq=Z):
        return sp.hstack([cu, cv, cp, cq], format="csr")

    squares = [
        row(cu=D),
        row(cv=D, cp=dg(f) @ P),
        row(cu=dg(m / r) @ P, cv=dg(-bb) @ P),
        row(cu=dg(bb) @ P, cv=dg(-m / r) @ P, cq=dg(-f) @ P),
        row(cp=dg(-m / r) @ P, cq=D + dg(1 / r) @ P),
    ]
    gauge = row(cv=dg(f) @ P, cp=D + dg(1 / r) @ P, cq=dg(-m / r) @ P)
    H = sum(T.T @ dg(W) @ T for T in squares) + gauge_weight * (gauge.T @ dg(W) @ gauge)
    U, V, Pm, Qm = row(cu=P), row(cv=P), row(cp=P), row(cq=P)
    H = H + U.T @ dg(W * kappa**2 * (3 * f**2 - 1)) @ U + V.T @ dg(W * kappa**2 * (f**2 - 1)) @ V
    cross = Pm.T @ dg(-W * fp) @ V + Qm.T @ dg(-W * bb * f) @ U
    H = H + cross + cross.T
    H = (0.5 * (H + H.T)).tocsr()
    mass = np.tile(g.mass[:-1], 4)
    return FiberOperator(int(n), int(m), float(kappa), H, mass)


def translation_mode(p: RadialProfile) -> np.ndarray:
    """Gauge-adjusted translational mode ``(f', b f, B, B)`` at the interior nodes."""
    B, _ = profile_field(p)
    bb = p.n * (1 - p.a) / p.r
    comps = [p.fprime, bb * p.f, B, B]
    return np.concatenate([c[:-1] for c in comps])


def zero_mode_residual(p: RadialProfile) -> float:
    """``|L_1 T| / |T|`` for the translational mode ``T``."""
    L1 = fiber_operator(p, 1)
    T = translation_mode(p)
    return L1.norm(L1.apply(T)) / L1.norm(T)


@dataclass(frozen=True)
class StabilityReport:
    n: int
    kappa: float
    verdict: str
    worst_m: int
    lowest_eigenvalue: float
    per_m: dict

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kappa": self.kappa,
            "verdict": self.verdict,
            "worst_m": self.worst_m,
            "lowest_eigenvalue": self.lowest_eigenvalue,
            "per_m": {str(k): v for k, v in self.per_m.items()},
        }


def fiber_minimum(p: RadialProfile, m: int, k: int = 4) -> float:
    """Lowest eigenvalue of ``L_m``, discarding the translational mode for ``|m| = 1``."""
    L = fiber_operator(p, m)
    vals, vecs = L.lowest(k)
    if abs(m) == 1:
        T = translation_mode(p)
        overlap = [abs(np.sum(L.mass * T * vecs[:, i])) / (L.norm(T) * L.norm(vecs[:, i])) for i in range(k)]
        keep = np.ones(k, dtype=bool)
        keep[int(np.argmax(overlap))] = False
        vals = vals[keep]
    return float(np.min(vals))


def stability_report(n: int, kappa: float, N: int = 800, R_max: float | None = None,
                     m_range=range(0, 9), threshold: float = -1e-4) -> StabilityReport:
    """Scan the fibers ``m`` and report the most negative eigenvalue."""
    p = solve_profile(n, kappa, R_max, N)
    per_m = {int(m): fiber_minimum(p, m) for m in m_range}
    worst = min(per_m, key=per_m.get)
    lowest = per_m[worst]
    verdict = "stable" if lowest >= threshold else "unstable"
    return StabilityReport(int(n), float(kappa), verdict, worst, lowest, per_m)
