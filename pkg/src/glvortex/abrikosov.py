"""The Abrikosov function beta(tau), the stability function gamma(tau) and
related thresholds.

All sums run over the dual of the normalized lattice,
``L* = sqrt(2 pi / Im tau) * i * (Z - tau Z)``, which has cell area ``2 pi``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._mesh import CellMesh
from .landau import DEFAULT_M, LLLState, lll_state
from .lattice import (
    LatticeShape,
    as_shape,
    dual_lattice,
    gauss_reduce,
    in_fundamental_domain,
    lattice_points,
    normalized_lattice,
    reduce_shape,
    wedge,
)

TWO_PI = 2.0 * math.pi
DEFAULT_TAIL = 1e-12
REGIME_CONSTANT = 0.1


def dual_basis(tau) -> tuple[complex, complex]:
    """Basis of the normalized dual lattice (area 2 pi)."""
    L = dual_lattice(normalized_lattice(tau, 1))
    return L.nu1, L.nu2


def truncation_radius(tau, tol: float = DEFAULT_TAIL) -> float:
    """Radius ``R`` whose Gaussian tail bound is below ``tol``.

    Uses ``sum_{|t|>R} exp(-|t|^2/2) <= sum_{j>=0} N_j exp(-(R+j)^2/2)`` with
    the shell count ``N_j <= 2 pi (R + j + 1 + d)^2 / |Omega*|``, where ``d``
    is the diameter of a reduced dual cell and ``|Omega*| = 2 pi``.
    """
    t1, t2 = gauss_reduce(*dual_basis(tau))
    d = abs(t1) + abs(t2)
    R = 1.0
    while tail_bound(R, d) > tol:
        R += 0.25
    return R


def tail_bound(R: float, diameter: float) -> float:
    j = np.arange(0, 200)
    return float(np.sum((R + j + 1 + diameter) ** 2 * np.exp(-((R + j) ** 2) / 2)))


def dual_points(tau, R: float | None = None) -> np.ndarray:
    if R is None:
        R = truncation_radius(tau)
    return lattice_points(*dual_basis(tau), R)


@dataclass(frozen=True)
class AbrikosovValue:
    tau: complex
    beta: float
    method: str
    truncation: float

    def to_dict(self) -> dict:
        return {"tau": [self.tau.real, self.tau.imag], "beta": self.beta, "method": self.method,
                "truncation": self.truncation}


def beta_lattice_sum(tau, R: float | None = None) -> AbrikosovValue:
    """``beta = sum_{t in L*, |t| <= R} exp(-|t|^2 / 2)``."""
    t = as_shape(tau).tau
    if R is None:
        R = truncation_radius(t)
    pts = dual_points(t, R)
    return AbrikosovValue(t, float(np.sum(np.exp(-np.abs(pts) ** 2 / 2))), "lattice-sum", float(R))


def beta_quadrature(tau, N: int = 64, field=None, M: int = DEFAULT_M) -> AbrikosovValue:
    """``<|phi|^4> / <|phi|^2>^2`` by the periodic trapezoidal rule on an ``N x N`` grid.

    ``field`` optionally replaces the LLL state by any callable of the
    complex-encoded position.
    """
    if N < 32:
        raise ValueError("beta_quadrature needs N >= 32")
    t = as_shape(tau).tau
    if field is None:
        field = LLLState(t, 0j, M)
    mesh = CellMesh(normalized_lattice(t, 1), N, N)
    rho = np.abs(np.broadcast_to(field(mesh.positions), mesh.positions.shape)) ** 2
    return AbrikosovValue(t, float(np.mean(rho**2) / np.mean(rho) ** 2), "quadrature", float(N))


def gamma_k(tau, k, R: float | None = None, pts: np.ndarray | None = None):
    """Fiber stability function.

    ``gamma_k = 2 sum e^{-|t|^2/2} cos(Im(conj(k) t)) + |sum e^{-|t+k|^2/2 + i Im(conj(k) t)}|
    - sum e^{-|t|^2/2}``, vectorized over ``k``.
    """
    t = as_shape(tau).tau
    if pts is None:
        pts = dual_points(t, R)
    k = np.asarray(k, dtype=complex)
    kk = k.reshape(-1, 1)
    w = np.exp(-np.abs(pts) ** 2 / 2)
    ph = np.imag(np.conj(kk) * pts[None, :])
    first = 2 * np.sum(w[None, :] * np.cos(ph), axis=1)
    second = np.abs(np.sum(np.exp(-np.abs(pts[None, :] + kk) ** 2 / 2 + 1j * ph), axis=1))
    out = first + second - np.sum(w)
    return out.reshape(k.shape) if k.ndim else float(out[0])


def to_wigner_seitz(k: complex, t1: complex, t2: complex) -> complex:
    """Representative of ``k`` modulo the lattice ``(t1, t2)`` closest to the origin."""
    area = wedge(t1, t2)
    u = wedge(k, t2) / area
    v = wedge(t1, k) / area
    base = k - math.floor(u) * t1 - math.floor(v) * t2
    cands = [base - a * t1 - b * t2 for a in (-1, 0, 1, 2) for b in (-1, 0, 1, 2)]
    return min(cands, key=lambda c: (round(abs(c), 12), -c.real, -c.imag))


@dataclass(frozen=True)
class GammaValue:
    tau: complex
    gamma: float
    argmin_k: complex
    grid: int
    simplex_diameter: float
    converged: bool
    grid_min: float = field(default=float("nan"))

    def to_dict(self) -> dict:
        return {
            "tau": [self.tau.real, self.tau.imag],
            "gamma": self.gamma,
            "argmin_k": [self.argmin_k.real, self.argmin_k.imag],
            "grid": self.grid,
            "simplex_diameter": self.simplex_diameter,
            "converged": self.converged,
        }


def gamma(tau, grid: int = 48, R: float | None = None, xatol: float = 1e-10) -> GammaValue:
    """``gamma(tau) = min_k gamma_k(tau)`` over the dual cell.

    A ``grid x grid`` scan of the dual parallelogram (half of it, by the
    ``k -> -k`` symmetry) seeds a Nelder-Mead refinement.  The minimizer is
    reported in the Wigner-Seitz cell of the dual lattice.
    """
    t = as_shape(tau).tau
    if R is None:
        R = truncation_radius(t)
    t1, t2 = gauss_reduce(*dual_basis(t))
    pts = lattice_points(t1, t2, R)
    u = np.arange(grid // 2 + 1) / grid
    v = np.arange(grid) / grid - 0.5
    U, V = np.meshgrid(u, v, indexing="ij")
    K = U * t1 + V * t2
    vals = gamma_k(t, K.ravel(), pts=pts)
    i = int(np.argmin(vals))
    k0 = K.ravel()[i]
    h = abs(t1) / grid

    def f(p):
        return gamma_k(t, complex(p[0], p[1]), pts=pts)

    simplex = np.array([[k0.real, k0.imag], [k0.real + h, k0.imag], [k0.real, k0.imag + h]])
    res = minimize(f, [k0.real, k0.imag], method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": 1e-15, "initial_simplex": simplex, "maxiter": 4000})
    final = res.final_simplex[0]
    diam = float(max(np.linalg.norm(final[a] - final[b]) for a in range(3) for b in range(a + 1, 3)))
    converged = bool(res.success) and diam < 1e-8 and res.fun <= vals[i]
    if converged:
        kmin, gmin = complex(res.x[0], res.x[1]), float(res.fun)
    else:
        warnings.warn("gamma refinement did not converge; returning the best grid value", RuntimeWarning)
        kmin, gmin = k0, float(vals[i])
    return GammaValue(t, gmin, to_wigner_seitz(kmin, t1, t2), grid, diam, converged, float(vals[i]))


def kappa_c(tau, beta: float | None = None) -> float:
    """``sqrt((1 - 1/beta) / 2)``."""
    if beta is None:
        beta = beta_lattice_sum(tau).beta
    if beta < 1:
        raise ValueError(f"beta = {beta!r} < 1 is impossible; the evaluation is broken")
    return math.sqrt(0.5 * (1.0 - 1.0 / beta))


@dataclass(frozen=True)
class StabilityVerdict:
    tau: complex
    kappa: float
    b: float
    verdict: str
    kappa_c: float
    gamma: float
    beta: float
    epsilon: float
    mu_leading: float
    gate_kappa: bool
    gate_kappa_squared: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "tau": [self.tau.real, self.tau.imag],
            "kappa": self.kappa,
            "b": self.b,
            "verdict": self.verdict,
            "kappa_c": self.kappa_c,
            "gamma": self.gamma,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "mu_leading": self.mu_leading,
            "gate_kappa_gt_kappa_c": self.gate_kappa,
            "gate_kappa2_gt_kappa_c": self.gate_kappa_squared,
            "reason": self.reason,
        }


def bifurcation_bracket(kappa: float, beta: float) -> float:
    return kappa**2 * ((2 * kappa**2 - 1) * beta + 1)


def epsilon(kappa: float, b: float, beta: float) -> float:
    """Bifurcation parameter ``sqrt((kappa^2 - b) / (kappa^2 [(2 kappa^2 - 1) beta + 1]))``; NaN when not real."""
    ratio = (kappa**2 - b) / bifurcation_bracket(kappa, beta)
    return math.sqrt(ratio) if ratio >= 0 else float("nan")


def in_regime(kappa: float, b: float, beta: float, constant: float = REGIME_CONSTANT) -> tuple[bool, str]:
    kc = kappa_c(None, beta)
    bracket = bifurcation_bracket(kappa, beta)
    if abs(kappa**2 - b) > constant * abs(bracket):
        return False, f"|kappa^2 - b| exceeds {constant} * kappa^2 [(2 kappa^2 - 1) beta + 1]"
    if not ((kappa > kc and kappa**2 > b) or (kappa < kc and kappa**2 < b)):
        return False, "sign pairing of (kappa - kappa_c) and (kappa^2 - b) fails"
    return True, ""


def classify_stability(tau, kappa: float, b: float, constant: float = REGIME_CONSTANT,
                       gamma_value: float | None = None) -> StabilityVerdict:
    """Linear stability verdict for the lattice bifurcating at shape ``tau``."""
    t = as_shape(tau).tau
    beta = beta_lattice_sum(t).beta
    kc = kappa_c(t, beta)
    g = gamma(t).gamma if gamma_value is None else float(gamma_value)
    eps = epsilon(kappa, b, beta)
    mu = (kappa**2 - 0.5) * g * eps**2 if not math.isnan(eps) else float("nan")
    ok, reason = in_regime(kappa, b, beta, constant)
    if not ok:
        verdict = "outside-regime"
    elif kappa > 1 / math.sqrt(2) and g > 0:
        verdict = "stable"
    else:
        verdict = "unstable"
    return StabilityVerdict(t, float(kappa), float(b), verdict, kc, g, beta, eps, mu,
                            bool(kappa > kc), bool(kappa**2 > kc), reason)


def _scan_point(args):
    tau, quantity = args
    if quantity == "beta":
        return beta_lattice_sum(tau).beta
    if quantity == "gamma":
        return gamma(tau).gamma
    if quantity == "kappa_c":
        return kappa_c(tau)
    raise ValueError(f"unknown quantity {quantity!r}")


def scan_grid(resolution: int) -> list[complex]:
    re = np.linspace(-0.5, 0.5, resolution)
    im = np.linspace(0.5, 2.2, resolution)
    return [complex(x, y) for y in im for x in re]


def scan_fundamental_domain(resolution: int, quantity: str = "beta", jobs: int = 1) -> list[tuple]:
    """Rows ``(Re tau, Im tau, value, in_fundamental_domain)`` in row-major order.

    The grid covers ``Re tau in [-1/2, 1/2]`` and ``Im tau in [0.5, 2.2]``.
    """
    if resolution < 8:
        raise ValueError("scan resolution must be at least 8")
    if quantity not in ("beta", "gamma", "kappa_c"):
        raise ValueError(f"unknown quantity {quantity!r}")
    taus = scan_grid(resolution)
    args = [(t, quantity) for t in taus]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            values = list(ex.map(_scan_point, args, chunksize=max(1, len(args) // (4 * jobs))))
    else:
        values = [_scan_point(a) for a in args]
    return [(t.real, t.imag, float(v), in_fundamental_domain(t)) for t, v in zip(taus, values)]


def shape_distance(tau1: complex, tau2: complex) -> float:
    """Distance between shapes after reduction, accounting for the ``T`` identification."""
    a = reduce_shape(tau1)[0].tau
    b = reduce_shape(tau2)[0].tau
    d = a - b
    return abs(complex(d.real - round(d.real), d.imag))
