"""Gauge-covariant Ginzburg-Landau solver on one lattice cell.

Order parameter values live on the sites of a :class:`~glvortex._mesh.CellMesh`
and the vector potential is carried by link phases ``theta_e``, the line
integrals of ``A`` along the edges (minus the boundary twist on edges that
wrap).  The magnetic flux through a plaquette is ``curl(theta) + 2 pi m_p``
with integer windings ``m_p`` that are never changed by the dynamics, so the
total flux ``2 pi sum m_p`` is exactly quantized.

The discrete energy is

    E = 1/2 sum_e w_e |exp(-i theta_e) psi_head - psi_tail|^2
        + 1/2 sum_p Phi_p^2 / |p|
        + kappa^2/4 sum_sites |site| (1 - |psi|^2)^2.

Real unknowns are ordered ``[Re psi, Im psi, theta]``.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._mesh import CellMesh
from .abrikosov import beta_lattice_sum, epsilon, in_regime
from .landau import LLLState
from .lattice import GaugeExponent, Lattice, as_shape, dot, lattice_with_field, wedge
from .vortex import SELF_DUAL, decay_rate, solve_profile

TWO_PI = 2.0 * math.pi
CHECKPOINT_MAGIC = b"GLCELL1\n"


class NormalStateError(RuntimeError):
    """Newton iteration collapsed onto the normal state ``psi = 0``."""


class RegimeError(ValueError):
    """Parameters lie outside the gate of the bifurcation theory."""


# ---------------------------------------------------------------------------
# Field container
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CellField:
    """Order parameter and link phases on an ``N1 x N2`` mesh of one cell."""

    exponent: GaugeExponent
    N1: int
    N2: int
    psi: np.ndarray
    links: np.ndarray
    winding: np.ndarray
    kappa: float

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        self.links = np.asarray(self.links, dtype=float)
        self.winding = np.asarray(self.winding, dtype=np.int64)
        m = self.mesh
        if self.psi.shape != (m.n_sites,) or self.links.shape != (m.n_edges,):
            raise ValueError("field arrays do not match the mesh")
        if self.winding.shape != (m.curl.shape[0],):
            raise ValueError("winding array does not match the plaquettes")

    @property
    def lattice(self) -> Lattice:
        return self.exponent.lattice

    @cached_property
    def mesh(self) -> CellMesh:
        return _cached_mesh(self.lattice, self.N1, self.N2)

    @property
    def N(self) -> int:
        if self.N1 != self.N2:
            raise AttributeError("mesh is not square; use N1 and N2")
        return self.N1

    @property
    def flux_quanta(self) -> int:
        """Total winding ``sum m_p``; exact integer."""
        return int(self.winding.sum())

    def plaquette_flux(self) -> np.ndarray:
        return self.mesh.curl @ self.links + TWO_PI * self.winding

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def mean_density(self) -> float:
        return float(np.mean(self.density()))

    def copy(self, **changes) -> "CellField":
        c = replace(self, **changes)
        if "psi" not in changes:
            c.psi = self.psi.copy()
        if "links" not in changes:
            c.links = self.links.copy()
        return c

    def vector(self) -> np.ndarray:
        return np.concatenate([self.psi.real, self.psi.imag, self.links])

    def with_vector(self, v: np.ndarray) -> "CellField":
        n = self.mesh.n_sites
        return self.copy(psi=v[:n] + 1j * v[n : 2 * n], links=v[2 * n :].copy())

    def sample(self, x0):
        """Interpolated ``(psi, A)`` at points of the base cell.

        ``psi`` is interpolated bilinearly in lattice coordinates, with the
        gauge factors of the exponent applied to corners across the cell
        edge.  ``A`` is the symmetric-gauge potential of the average field
        plus the periodic link correction, constant on each grid
        parallelogram.  ``A`` is returned as a complex-encoded vector.
        """
        m = self.mesh
        L = self.lattice
        g = self.exponent
        x0 = np.asarray(x0, dtype=complex)
        u, v = L.coordinates(x0)
        s, t = np.asarray(u) * self.N1, np.asarray(v) * self.N2
        i = np.clip(np.floor(s).astype(int), 0, self.N1 - 1)
        j = np.clip(np.floor(t).astype(int), 0, self.N2 - 1)
        al, be = s - i, t - j
        out = np.zeros(np.shape(x0), dtype=complex)
        for di, dj, wt in ((0, 0, (1 - al) * (1 - be)), (1, 0, al * (1 - be)), (0, 1, (1 - al) * be), (1, 1, al * be)):
            ii, jj = i + di, j + dj
            p, q = ii // self.N1, jj // self.N2
            base = m.positions[m._index(ii, jj)]
            val = self.psi[m._index(ii, jj)]
            if np.any((p != 0) | (q != 0)):
                val = val * np.exp(1j * _twist(g, p, q, base))
            out = out + wt * val
        dtheta = self.links - m.uniform_links(g)
        k0 = m.edge_id(i, j, 0)
        k0b = m.edge_id(i, j + 1, 0)
        k1 = m.edge_id(i, j, 1)
        k1b = m.edge_id(i + 1, j, 1)
        a1 = 0.5 * (dtheta[k0] + dtheta[k0b])
        a2 = 0.5 * (dtheta[k1] + dtheta[k1b])
        h1, h2 = m.h1, m.h2
        det = h1.real * h2.imag - h1.imag * h2.real
        ax = (a1 * h2.imag - a2 * h1.imag) / det
        ay = (a2 * h1.real - a1 * h2.real) / det
        A = 0.5 * g.b * 1j * x0 + ax + 1j * ay
        return out, A


def _twist(g: GaugeExponent, p, q, x):
    """``g_{p nu1 + q nu2}(x)`` for arrays of integer shifts."""
    p = np.asarray(p)
    q = np.asarray(q)
    out = np.zeros(np.broadcast(p, q, x).shape)
    x = np.broadcast_to(x, out.shape)
    pb, qb = np.broadcast_to(p, out.shape), np.broadcast_to(q, out.shape)
    for pq in set(zip(pb.ravel().tolist(), qb.ravel().tolist())):
        if pq == (0, 0):
            continue
        mask = (pb == pq[0]) & (qb == pq[1])
        out[mask] = np.real(g.g(pq[0], pq[1], x[mask]))
    return out


_MESHES: dict = {}


def _cached_mesh(lattice: Lattice, N1: int, N2: int) -> CellMesh:
    key = (lattice.nu1, lattice.nu2, lattice.n, lattice.b, N1, N2)
    if key not in _MESHES:
        if len(_MESHES) > 32:
            _MESHES.clear()
        _MESHES[key] = CellMesh(lattice, N1, N2)
    return _MESHES[key]


def _grid_shape(N) -> tuple[int, int]:
    if isinstance(N, (tuple, list)):
        return int(N[0]), int(N[1])
    return int(N), int(N)


def normal_state(lattice: Lattice, kappa: float, N=32, exponent: GaugeExponent | None = None) -> CellField:
    """``psi = 0`` in the uniform field of ``lattice`` (exact discrete flux ``2 pi n``)."""
    if not lattice.is_quantized():
        raise ValueError("flux quantization b |Omega| = 2 pi n is violated")
    g = GaugeExponent.canonical(lattice) if exponent is None else exponent
    N1, N2 = _grid_shape(N)
    mesh = _cached_mesh(lattice, N1, N2)
    links = mesh.uniform_links(g)
    winding = mesh.flux_offsets(links, g.b * mesh.plaquette_areas)
    if int(winding.sum()) != lattice.n:
        raise RuntimeError("plaquette windings do not add up to the flux quanta")
    return CellField(g, N1, N2, np.zeros(mesh.n_sites, dtype=complex), links, winding, float(kappa))


def gauge_transform(c: CellField, chi: np.ndarray) -> CellField:
    """``psi -> exp(i chi) psi`` and ``theta_e -> theta_e + chi_head - chi_tail``."""
    chi = np.asarray(chi, dtype=float)
    return c.copy(psi=c.psi * np.exp(1j * chi), links=c.links + c.mesh.grad @ chi)


# ---------------------------------------------------------------------------
# Energy, gradient, Hessian
# ---------------------------------------------------------------------------


def _edge_terms(c: CellField):
    e = c.mesh.edges
    U = np.exp(-1j * c.links)
    ph, pt = c.psi[e["head"]], c.psi[e["tail"]]
    return e, U, ph, pt


def cell_energy(c: CellField) -> float:
    """Discrete Ginzburg-Landau energy of the cell."""
    m = c.mesh
    e, U, ph, pt = _edge_terms(c)
    kin = 0.5 * np.sum(e["weight"] * np.abs(U * ph - pt) ** 2)
    Phi = c.plaquette_flux()
    mag = 0.5 * np.sum(Phi**2 / m.plaquette_areas)
    pot = 0.25 * c.kappa**2 * m.site_area * np.sum((1 - np.abs(c.psi) ** 2) ** 2)
    return float(kin + mag + pot)


def energy_gradient(c: CellField) -> np.ndarray:
    """Gradient of :func:`cell_energy` in ``[Re psi, Im psi, theta]``."""
    m = c.mesh
    e, U, ph, pt = _edge_terms(c)
    w = e["weight"]
    K = m.covariant_laplacian(c.links)
    gc = K @ c.psi - c.kappa**2 * m.site_area * (1 - np.abs(c.psi) ** 2) * c.psi
    gt = -w * np.imag(U * ph * np.conj(pt)) + m.curl.T @ (c.plaquette_flux() / m.plaquette_areas)
    return np.concatenate([gc.real, gc.imag, gt])


def energy_hessian(c: CellField) -> sp.csr_matrix:
    """Sparse Hessian of :func:`cell_energy` in ``[Re psi, Im psi, theta]``."""
    m = c.mesh
    n, E = m.n_sites, m.n_edges
    e, U, ph, pt = _edge_terms(c)
    w = e["weight"]
    h, t = e["head"], e["tail"]
    K = m.covariant_laplacian(c.links)
    Kr, Ki = K.real, K.imag
    x, y = c.psi.real, c.psi.imag
    A = m.site_area * c.kappa**2
    pxx = sp.diags(A * (3 * x**2 + y**2 - 1))
    pyy = sp.diags(A * (x**2 + 3 * y**2 - 1))
    pxy = sp.diags(2 * A * x * y)
    Hpp = sp.bmat([[Kr + pxx, -Ki + pxy], [Ki + pxy, Kr + pyy]])
    Htt = sp.diags(w * np.real(U * ph * np.conj(pt))) + m.curl.T @ sp.diags(1 / m.plaquette_areas) @ m.curl
    rows = np.tile(np.arange(E), 4)
    cols = np.concatenate([h, n + h, t, n + t])
    vals = np.concatenate([
        -w * np.imag(U * np.conj(pt)),
        -w * np.real(U * np.conj(pt)),
        -w * np.imag(U * ph),
        w * np.real(U * ph),
    ])
    Htp = sp.csr_matrix((vals, (rows, cols)), shape=(E, 2 * n))
    return sp.bmat([[Hpp, Htp.T], [Htp, Htt]], format="csr")


def gauge_modes(c: CellField) -> sp.csr_matrix:
    """Columns ``(i chi psi, grad chi)`` for site indicators ``chi``."""
    m = c.mesh
    n = m.n_sites
    top = sp.vstack([sp.diags(-c.psi.imag), sp.diags(c.psi.real)])
    return sp.vstack([top, m.grad], format="csr")


def residual_norms(c: CellField, grad: np.ndarray | None = None) -> np.ndarray:
    """Strong-form residuals: ``psi`` part per unit site area, link part per ``w_e |l_e|``."""
    m = c.mesh
    n = m.n_sites
    g = energy_gradient(c) if grad is None else grad
    rp = np.abs(g[:n] + 1j * g[n : 2 * n]) / m.site_area
    e = m.edges
    rt = np.abs(g[2 * n :]) / (e["weight"] * np.abs(e["vector"]) + 1e-300)
    rt[e["weight"] == 0] = 0.0
    return np.concatenate([rp, rt])


def gl_residual(c: CellField) -> float:
    """Sup norm of the discrete GL equations."""
    return float(np.max(residual_norms(c)))


def newton_refine(c: CellField, tol: float = 1e-9, max_iter: int = 40) -> tuple[CellField, float, list]:
    """Newton's method on the discrete GL gradient with gauge fixing.

    Each step solves ``(H + alpha G G^T) d = -grad`` where the columns of
    ``G`` span the discrete gauge orbit, which removes the gauge kernel of
    ``H``.  Steps are backtracked on the residual sup-norm.
    """
    alpha = 1.0 / c.mesh.site_area
    history = []
    res = gl_residual(c)
    for it in range(max_iter):
        history.append(res)
        if res < tol:
            return c, res, history
        g = energy_gradient(c)
        H = energy_hessian(c)
        G = gauge_modes(c)
        step = spla.spsolve((H + alpha * (G @ G.T)).tocsc(), -g)
        if not np.all(np.isfinite(step)):
            raise RuntimeError(f"Newton linear solve failed; residual history {history}")
        v = c.vector()
        t = 1.0
        while True:
            trial = c.with_vector(v + t * step)
            r_new = gl_residual(trial)
            if r_new < res or t < 1e-3:
                break
            t *= 0.5
        c, res = trial, r_new
    history.append(res)
    if res < tol:
        return c, res, history
    raise RuntimeError(f"Newton iteration did not converge; residual history {history}")


# ---------------------------------------------------------------------------
# Bifurcation from the normal state
# ---------------------------------------------------------------------------


def lll_values(lattice: Lattice, positions: np.ndarray) -> np.ndarray:
    """Lowest Landau level state of ``lattice`` (one quantum), cell average ``|phi|^2 = 1``."""
    if lattice.n != 1:
        raise ValueError("the lowest Landau level state is built for one flux quantum")
    st = LLLState(lattice.tau).normalized()
    # rescale the unit-field state to the field of the lattice
    return st(np.asarray(positions) * math.sqrt(lattice.b) * lattice.nu1.conjugate() / abs(lattice.nu1))


@dataclass(frozen=True)
class BifurcationPoint:
    tau: complex
    kappa: float
    b: float
    epsilon: float
    beta: float
    cell: CellField = field(repr=False)
    energy_per_area: float
    mean_density: float
    residual: float
    history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "tau": [self.tau.real, self.tau.imag],
            "kappa": self.kappa,
            "b": self.b,
            "epsilon": self.epsilon,
            "beta": self.beta,
            "energy_per_area": self.energy_per_area,
            "mean_density": self.mean_density,
            "residual": self.residual,
            "N": [self.cell.N1, self.cell.N2],
        }


def bifurcation_guess(tau, kappa: float, b: float, N=32, beta: float | None = None) -> CellField:
    """``c phi_0`` on the normal-state links with ``c^2 = (kappa^2 - b) / (kappa^2 beta <|phi_0|^2>)``."""
    t = as_shape(tau).tau
    L = lattice_with_field(t, b, 1)
    c = normal_state(L, kappa, N)
    if beta is None:
        beta = beta_lattice_sum(t).beta
    phi = lll_values(L, c.mesh.positions)
    amp = math.sqrt(abs(kappa**2 - b) / (kappa**2 * beta * np.mean(np.abs(phi) ** 2)))
    return c.copy(psi=amp * phi)


def newton_solve_near_hc2(tau, kappa: float, b: float, N=32, tol: float = 1e-9,
                          check_regime: bool = True) -> BifurcationPoint:
    """Abrikosov lattice solution bifurcating from the normal state at ``b`` below ``kappa^2``.

    Raises :class:`RegimeError` outside the bifurcation gate (unless
    ``check_regime`` is off) and :class:`NormalStateError` when the iteration
    ends at ``psi = 0``.
    """
    t = as_shape(tau).tau
    beta = beta_lattice_sum(t).beta
    if check_regime:
        ok, reason = in_regime(kappa, b, beta)
        if not ok:
            raise RegimeError(f"(tau, kappa, b) = ({t}, {kappa}, {b}) is outside the bifurcation regime: {reason}")
    c0 = bifurcation_guess(t, kappa, b, N, beta)
    c, res, hist = newton_refine(c0, tol=tol)
    rho = c.mean_density()
    if rho < 1e-10:
        raise NormalStateError(f"iteration converged to the normal state (mean |psi|^2 = {rho:.3e})")
    E = cell_energy(c)
    return BifurcationPoint(t, float(kappa), float(b), epsilon(kappa, b, beta), beta, c,
                            E / c.lattice.area, rho, res, tuple(hist))


# ---------------------------------------------------------------------------
# Low-field lattices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LowFieldLattice:
    solution: CellField = field(repr=False)
    initial: CellField = field(repr=False)
    correction_norm: float
    rho: float
    residual: float
    history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        L = self.solution.lattice
        return {"tau": [L.tau.real, L.tau.imag], "b": L.b, "n": L.n, "kappa": self.solution.kappa,
                "rho": self.rho, "correction_norm": self.correction_norm, "residual": self.residual,
                "N": [self.solution.N1, self.solution.N2]}


def field_distance(c1: CellField, c2: CellField) -> float:
    """``L^2`` norm of ``(psi1 - psi2, A1 - A2)`` on the common mesh."""
    m = c1.mesh
    dp = np.sum(np.abs(c1.psi - c2.psi) ** 2) * m.site_area
    dt = np.sum(m.edges["weight"] * (c1.links - c2.links) ** 2)
    return float(math.sqrt(dp + dt))


def _edge_line_integral(fun, x0: np.ndarray, x1: np.ndarray, order: int = 6) -> np.ndarray:
    """Gauss-Legendre line integral of the 1-form ``fun(x) . dl`` along straight segments."""
    s, wts = np.polynomial.legendre.leggauss(order)
    s, wts = 0.5 * (s + 1), 0.5 * wts
    d = x1 - x0
    out = np.zeros(x0.shape)
    for si, wi in zip(s, wts):
        out += wi * dot(fun(x0 + si * d), d)
    return out


def vortex_cell_guess(lattice: Lattice, kappa: float, N, profile=None) -> CellField:
    """An ``n``-vortex at the cell centre with the cell's gauge-periodic phase.

    ``psi = f(r) exp(i S_n)`` and ``A = n a(r)/r e_theta + grad(S_n - n theta)``
    where ``S_n = n arg(phi)`` and ``phi`` is the one-quantum lowest Landau
    level state at field ``b/n``, whose single zero sits at the centre.
    """
    n = lattice.n
    if profile is None:
        profile = solve_profile(n, kappa, R_max=max(20.0 / decay_rate(kappa), 20.0), N=800)
    base = normal_state(lattice, kappa, N)
    m = base.mesh
    g = base.exponent
    L1 = Lattice(lattice.nu1, lattice.nu2, 1, lattice.b / n)
    centre = 0.5 * (lattice.nu1 + lattice.nu2)
    ip = profile.interpolator()

    def smooth_phase(x):
        # arg(phi) - arg(x - centre), regular at the centre
        x = np.asarray(x, dtype=complex)
        d = x - centre
        small = np.abs(d) < 1e-9
        d = np.where(small, 1e-7, d)
        x = np.where(small, centre + 1e-7, x)
        return np.angle(lll_values(L1, x) / d)

    def vortex_form(x):
        # n a(r)/r e_theta as a complex-encoded vector
        d = np.asarray(x, dtype=complex) - centre
        r = np.abs(d)
        safe = np.where(r > 0, r, 1.0)
        val = n * ip["a"](r) / safe**2 * (1j * d)
        return np.where(r > 0, val, 0.0)

    pos = m.positions
    d = pos - centre
    r = np.abs(d)
    S = smooth_phase(pos)
    psi = ip["f"](r) * np.exp(1j * n * (S + np.angle(d)))
    e = m.edges
    x0 = pos[e["tail"]]
    x1 = x0 + e["vector"]
    dS = np.angle(np.exp(1j * (smooth_phase(x1) - smooth_phase(x0))))
    theta = n * dS + _edge_line_integral(vortex_form, x0, x1) - m.boundary_phase(g)
    winding = m.flux_offsets(theta, _plaquette_smooth_flux(m, vortex_form))
    if int(winding.sum()) != n:
        raise RuntimeError("vortex guess does not carry the lattice flux")
    return CellField(g, base.N1, base.N2, psi, theta, winding, float(kappa))


def _plaquette_smooth_flux(m: CellMesh, vortex_form) -> np.ndarray:
    """Approximate plaquette fluxes of the vortex guess; only used to pick the windings."""
    _, areas, cents = m.plaquettes
    h = 1e-4
    up = dot(vortex_form(cents + h), 1j * np.ones_like(cents)) - dot(vortex_form(cents - h), 1j * np.ones_like(cents))
    vp = dot(vortex_form(cents + 1j * h), np.ones_like(cents)) - dot(vortex_form(cents - 1j * h), np.ones_like(cents))
    return (up - vp) / (2 * h) * areas


def assemble_low_field_lattice(tau, kappa: float, b: float, n: int = 1, N=None, spacing: float = 0.15,
                               tol: float = 1e-8, overlap_tol: float = 1e-2) -> LowFieldLattice:
    """Lattice of well separated ``n``-vortices, refined by Newton's method.

    The mesh spacing is about ``spacing`` unless ``N`` is given.  The
    correction norm is ``|(psi, A)_refined - (psi, A)_guess| / |psi_guess|``
    in ``L^2`` of the cell.
    """
    if abs(kappa - SELF_DUAL) < 1e-12:
        raise ValueError("low-field assembly requires kappa != 1/sqrt(2)")
    t = as_shape(tau).tau
    L = lattice_with_field(t, b, n)
    dmin = min(abs(L.nu1), abs(L.nu2), abs(L.nu2 - L.nu1), abs(L.nu1 + L.nu2))
    overlap = math.exp(-min(decay_rate(kappa), 1.0) * dmin / 2)
    if overlap > overlap_tol:
        raise ValueError(f"cell too small: vortex tail overlap {overlap:.2e} exceeds {overlap_tol:.0e}")
    if N is None:
        N1 = 2 * math.ceil(abs(L.nu1) / spacing / 2)
        N2 = 2 * math.ceil(abs(L.nu2) / spacing / 2)
        N = (N1, N2)
    c0 = vortex_cell_guess(L, kappa, N)
    c, res, hist = newton_refine(c0, tol=tol)
    m = c0.mesh
    norm0 = math.sqrt(np.sum(np.abs(c0.psi) ** 2) * m.site_area)
    return LowFieldLattice(c, c0, field_distance(c, c0) / norm0, 1.0 / math.sqrt(b), res, tuple(hist))


# ---------------------------------------------------------------------------
# Time-dependent relaxation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxationTrace:
    times: np.ndarray
    energies: np.ndarray
    residuals: np.ndarray
    windings: np.ndarray
    distances: np.ndarray
    final: CellField = field(repr=False)
    rejected: int = 0

    def to_rows(self):
        return [(float(t), float(e), float(r), int(w), float(d))
                for t, e, r, w, d in zip(self.times, self.energies, self.residuals, self.windings, self.distances)]


def explicit_stability_bound(c: CellField) -> float:
    """Largest stable step of explicit diffusion: ``0.1 h^2`` with ``h`` the shortest edge."""
    return 0.1 * float(np.min(np.abs(c.mesh.edges["vector"]))) ** 2


def _tdgl_step(c: CellField, dt: float, scheme: str) -> CellField:
    m = c.mesh
    A = m.site_area
    nl = c.kappa**2 * (1 - np.abs(c.psi) ** 2) * c.psi
    K = m.covariant_laplacian(c.links) / A
    e = m.edges
    w = e["weight"]
    curlcurl = m.curl.T @ sp.diags(1 / m.plaquette_areas) @ m.curl
    if scheme == "explicit":
        psi = c.psi + dt * (nl - K @ c.psi)
        g = energy_gradient(c)[2 * m.n_sites :]
        links = c.links - dt * g / w
        return c.copy(psi=psi, links=links)
    I = sp.identity(m.n_sites, format="csc")
    psi = spla.spsolve((I + dt * K).tocsc(), c.psi + dt * nl)
    mid = c.copy(psi=psi)
    _, U, ph, pt = _edge_terms(mid)
    jt = -w * np.imag(U * ph * np.conj(pt))
    rhs = w * c.links - dt * (jt + m.curl.T @ (TWO_PI * c.winding / m.plaquette_areas))
    links = spla.spsolve((sp.diags(w) + dt * curlcurl).tocsc(), rhs)
    return c.copy(psi=psi, links=links)


def invariant_distance(c1: CellField, c2: CellField) -> float:
    """Gauge- and translation-invariant distance between two cell fields.

    Compares the moduli of the discrete Fourier coefficients of ``|psi|^2``
    and of the plaquette fluxes (per unit area); returns the largest
    difference.
    """
    if (c1.N1, c1.N2) != (c2.N1, c2.N2):
        raise ValueError("fields live on different meshes")
    shape = (c1.N1, c1.N2)

    def spectra(c):
        rho = np.abs(np.fft.fft2(c.density().reshape(shape))) / c.mesh.n_sites
        B = c.plaquette_flux() / c.mesh.plaquette_areas
        nb = B.size // c.mesh.n_sites
        bs = [np.abs(np.fft.fft2(B[k * c.mesh.n_sites : (k + 1) * c.mesh.n_sites].reshape(shape))) / c.mesh.n_sites
              for k in range(nb)]
        return rho, bs

    r1, b1 = spectra(c1)
    r2, b2 = spectra(c2)
    return float(max(np.max(np.abs(r1 - r2)), max(np.max(np.abs(x - y)) for x, y in zip(b1, b2))))


def tdgl_relax(c0: CellField, dt: float, T: float, scheme: str = "semi-implicit",
               reference: CellField | None = None, record_every: int = 1,
               max_rejections: int = 20) -> RelaxationTrace:
    """Gradient flow ``d psi/dt = Delta_A psi + kappa^2 (1-|psi|^2) psi``, ``d theta/dt = -dE/dtheta / w``.

    ``semi-implicit`` treats the covariant Laplacian and the curl-curl
    operator implicitly and the rest explicitly.  A step that raises the
    energy is rejected and retried with half the step; the step is grown
    back afterwards.  ``explicit`` requires ``dt`` below
    :func:`explicit_stability_bound`.  Windings never change, so the flux is
    conserved exactly.  ``reference`` adds :func:`invariant_distance` to the
    trace.
    """
    if scheme not in ("semi-implicit", "explicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "explicit" and dt > explicit_stability_bound(c0):
        raise ValueError(f"dt = {dt} exceeds the explicit stability bound {explicit_stability_bound(c0):.3e}")
    if dt <= 0 or T < 0:
        raise ValueError("dt must be positive and T non-negative")
    c = c0
    E = cell_energy(c)
    dist = (lambda x: invariant_distance(x, reference)) if reference is not None else (lambda x: float("nan"))
    times, energies, residuals, windings, distances = [0.0], [E], [gl_residual(c)], [c.flux_quanta], [dist(c)]
    t, h, rejected, step = 0.0, dt, 0, 0
    while t < T - 1e-12:
        hh = min(h, T - t)
        new = _tdgl_step(c, hh, scheme)
        if not (np.all(np.isfinite(new.psi)) and np.all(np.isfinite(new.links))):
            raise FloatingPointError(f"non-finite field at t = {t}; energies so far {energies[-5:]}")
        E_new = cell_energy(new)
        if E_new > E + 1e-13 * max(1.0, abs(E)):
            rejected += 1
            h *= 0.5
            if h < dt * 0.5**max_rejections:
                raise RuntimeError(f"step rejected {max_rejections} times at t = {t}; dt too large")
            continue
        c, E, t = new, E_new, t + hh
        h = min(dt, 1.5 * h)
        step += 1
        if step % record_every == 0 or t >= T - 1e-12:
            times.append(t)
            energies.append(E)
            residuals.append(gl_residual(c))
            windings.append(c.flux_quanta)
            distances.append(dist(c))
    return RelaxationTrace(np.array(times), np.array(energies), np.array(residuals), np.array(windings),
                           np.array(distances), c, rejected)


def perturbed(c: CellField, amplitude: float, seed: int = 0) -> CellField:
    """Add seeded random noise of size ``amplitude`` to ``psi`` and to the links."""
    rng = np.random.default_rng(seed)
    n, E = c.mesh.n_sites, c.mesh.n_edges
    dpsi = amplitude * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    dth = amplitude * rng.standard_normal(E) * np.abs(c.mesh.edges["vector"])
    return c.copy(psi=c.psi + dpsi, links=c.links + dth)


def supercell(c: CellField, n1: int, n2: int) -> CellField:
    """Tile a cell field over the ``n1 x n2`` supercell with the canonical exponent."""
    if c.exponent.chi is not None or c.exponent.offsets or c.exponent.c1 or c.exponent.c2:
        raise ValueError("tiling is implemented for the canonical exponent")
    L = c.lattice
    big = Lattice(n1 * L.nu1, n2 * L.nu2, n1 * n2 * L.n, L.b)
    g_small = c.exponent
    out = normal_state(big, c.kappa, (n1 * c.N1, n2 * c.N2))
    mb, ms = out.mesh, c.mesh
    I, J = np.meshgrid(np.arange(n1 * c.N1), np.arange(n2 * c.N2), indexing="ij")
    I, J = I.ravel(), J.ravel()
    p, q = I // c.N1, J // c.N2
    small_idx = ms._index(I, J)
    x0 = ms.positions[small_idx]
    psi = np.empty(mb.n_sites, dtype=complex)
    psi[mb._index(I, J)] = c.psi[small_idx] * np.exp(1j * _twist(g_small, p, q, x0))
    dth_small = c.links - ms.uniform_links(g_small)
    dth = np.empty(mb.n_edges)
    for k in range(len(ms.directions)):
        dth[mb.edge_id(I, J, k)] = dth_small[ms.edge_id(I, J, k)]
    links = mb.uniform_links(out.exponent) + dth
    winding = mb.flux_offsets(links, _tiled_flux(c, n1, n2))
    return out.copy(psi=psi, links=links, winding=winding)


def _tiled_flux(c: CellField, n1: int, n2: int) -> np.ndarray:
    ms = c.mesh
    F = c.plaquette_flux()
    nb = F.size // ms.n_sites
    F = F.reshape(nb, c.N1, c.N2)
    return np.tile(F, (1, n1, n2)).reshape(nb, -1).ravel()


# ---------------------------------------------------------------------------
# Energy-per-cell scans
# ---------------------------------------------------------------------------


def _scan_one(args):
    tau, kappa, b, N = args
    try:
        bp = newton_solve_near_hc2(tau, kappa, b, N)
        return (complex(tau), bp.energy_per_area, bp.mean_density, bp.beta, True, "")
    except (RuntimeError, ValueError) as exc:
        return (complex(tau), float("nan"), float("nan"), float("nan"), False, str(exc))


@dataclass(frozen=True)
class EnergyScan:
    kappa: float
    b: float
    N: int
    rows: tuple

    @property
    def minimizer(self) -> complex:
        ok = [r for r in self.rows if r[4]]
        if not ok:
            raise RuntimeError("no scan point converged")
        return min(ok, key=lambda r: r[1])[0]

    def to_rows(self):
        return [(t.real, t.imag, e, rho, beta, int(ok), msg) for t, e, rho, beta, ok, msg in self.rows]


def energy_per_cell_scan(tau_list, kappa: float, b: float, N=32, jobs: int = 1) -> EnergyScan:
    """Average energy per unit area ``E_b(tau)`` of the bifurcating lattice for each shape."""
    if kappa <= SELF_DUAL:
        raise ValueError("energy scans require kappa > 1/sqrt(2)")
    if not b < kappa**2:
        raise ValueError("energy scans require b < kappa^2")
    args = [(as_shape(t).tau, kappa, b, N) for t in tau_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_scan_one, args))
    else:
        rows = [_scan_one(a) for a in args]
    return EnergyScan(float(kappa), float(b), N, tuple(rows))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(c: CellField, path) -> None:
    """JSON header followed by little-endian ``psi`` (re/im interleaved), links and windings."""
    header = {
        "exponent": c.exponent.to_dict(),
        "kappa": c.kappa,
        "N": [c.N1, c.N2],
        "n_sites": c.mesh.n_sites,
        "n_edges": c.mesh.n_edges,
        "n_plaquettes": int(c.winding.size),
        "layout": "psi complex128 as (re, im) float64 pairs; links float64; winding int64; little-endian",
    }
    raw = json.dumps(header, sort_keys=True).encode()
    inter = np.empty(2 * c.psi.size, dtype="<f8")
    inter[0::2], inter[1::2] = c.psi.real, c.psi.imag
    with open(Path(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(inter.tobytes())
        fh.write(c.links.astype("<f8").tobytes())
        fh.write(c.winding.astype("<i8").tobytes())


def load_checkpoint(path) -> CellField:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a cell checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack("<Q", data[off : off + 8])
    off += 8
    header = json.loads(data[off : off + hlen])
    off += hlen
    ns, ne, npq = header["n_sites"], header["n_edges"], header["n_plaquettes"]
    inter = np.frombuffer(data, dtype="<f8", count=2 * ns, offset=off)
    off += 16 * ns
    links = np.frombuffer(data, dtype="<f8", count=ne, offset=off)
    off += 8 * ne
    winding = np.frombuffer(data, dtype="<i8", count=npq, offset=off)
    g = GaugeExponent.from_dict(header["exponent"])
    N1, N2 = header["N"]
    return CellField(g, N1, N2, inter[0::2] + 1j * inter[1::2], links.copy(), winding.copy(), float(header["kappa"]))
