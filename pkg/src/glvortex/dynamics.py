"""Reduced dynamics of well separated vortices.

Multi-vortex fields are products of radial vortices with summed potentials.
Their interaction energy ``W`` is computed either from the glued field or
from the asymptotic form ``C sum_{j != k} n_j n_k exp(-R_jk) / sqrt(R_jk)``
whose constant ``C`` is calibrated once per ``kappa`` against the field
method.  Centres move by ``gamma z_j' = -grad_j W`` or
``gamma z_j'' = -grad_j W``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .vortex import SELF_DUAL, decay_rate, profile_energy, solve_profile

VALIDITY_FLOOR = 4.0
CALIBRATION_R = 10.0


@dataclass(frozen=True)
class VortexConfig:
    """Centres ``z_j`` (complex), degrees ``n_j`` and the GL parameter."""

    centers: tuple
    degrees: tuple
    kappa: float
    gamma: float = 1.0

    def __post_init__(self):
        z = tuple(complex(c) for c in self.centers)
        n = tuple(int(d) for d in self.degrees)
        object.__setattr__(self, "centers", z)
        object.__setattr__(self, "degrees", n)
        if len(z) != len(n) or not z:
            raise ValueError("centres and degrees must be non-empty and of equal length")
        if any(d == 0 for d in n):
            raise ValueError("vortex degrees must be nonzero")
        if self.kappa > SELF_DUAL and any(abs(d) != 1 for d in n):
            raise ValueError("for kappa > 1/sqrt(2) only degrees +-1 are allowed")
        if len(z) > 1 and not self.separation > 0:
            raise ValueError("vortex centres must be distinct")
        if not self.gamma > 0:
            raise ValueError("friction coefficient gamma must be positive")

    @property
    def z(self) -> np.ndarray:
        return np.array(self.centers)

    @property
    def separation(self) -> float:
        """``R = min_{j != k} |z_j - z_k|`` (infinite for one vortex)."""
        z = self.z
        if z.size < 2:
            return math.inf
        d = np.abs(z[:, None] - z[None, :])
        return float(np.min(d[~np.eye(z.size, dtype=bool)]))

    @property
    def epsilon(self) -> float:
        """``R^{-1/2} exp(-R)``."""
        R = self.separation
        return 0.0 if math.isinf(R) else float(R**-0.5 * math.exp(-R))

    def moved(self, centers) -> "VortexConfig":
        return VortexConfig(tuple(centers), self.degrees, self.kappa, self.gamma)

    def to_dict(self) -> dict:
        return {"centers": [[c.real, c.imag] for c in self.centers], "degrees": list(self.degrees),
                "kappa": self.kappa, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d) -> "VortexConfig":
        return cls(tuple(complex(a, b) for a, b in d["centers"]), tuple(d["degrees"]), float(d["kappa"]),
                   float(d.get("gamma", 1.0)))


@lru_cache(maxsize=32)
def _profile(n: int, kappa: float):
    p = solve_profile(abs(n), kappa, N=800)
    return p, p.interpolator(), profile_energy(p)


# ---------------------------------------------------------------------------
# Glued fields
# ---------------------------------------------------------------------------


def glued_values(cfg: VortexConfig, x):
    """``Psi = prod_j f_j(r_j) exp(i n_j theta_j)`` and ``A = sum_j n_j a_j(r_j)/r_j e_theta_j``.

    ``A`` is complex-encoded; ``x`` is array-like of complex points.
    """
    x = np.asarray(x, dtype=complex)
    psi = np.ones(x.shape, dtype=complex)
    A = np.zeros(x.shape, dtype=complex)
    for z, n in zip(cfg.centers, cfg.degrees):
        _, ip, _ = _profile(n, cfg.kappa)
        d = x - z
        r = np.abs(d)
        phase = np.where(r > 0, d / np.where(r > 0, r, 1.0), 1.0)
        if n < 0:
            phase = np.conj(phase)
        psi = psi * ip["f"](r) * phase ** abs(n)
        safe = np.where(r > 0, r, 1.0)
        A = A + np.where(r > 0, n * ip["a"](r) / safe**2 * (1j * d), 0.0)
    return psi, A


def energy_density(cfg: VortexConfig, x) -> np.ndarray:
    """``1/2 (|grad_A Psi|^2 + B^2 + kappa^2/2 (1 - |Psi|^2)^2)`` of the glued field."""
    x = np.asarray(x, dtype=complex)
    fs, us, vs, Bs = [], [], [], []
    for z, n in zip(cfg.centers, cfg.degrees):
        _, ip, _ = _profile(n, cfg.kappa)
        d = x - z
        # the density is smooth; on a centre take the limit from a nearby point
        d = np.where(np.abs(d) < 1e-6, 1e-6, d)
        r = np.abs(d)
        er = d / r
        f = ip["f"](r)
        a = ip["a"](r)
        fs.append(f)
        # radial and azimuthal parts of grad_A psi_j / psi_j, times f_j
        us.append(ip["fp"](r) * er)
        vs.append(f * n * (1 - a) / r * (1j * er))
        Bs.append(n * ip["ap"](r) / r)
    fs = np.array(fs)
    # |grad_A Psi|^2 = |sum_j w_j u_j|^2 + |sum_j w_j v_j|^2, w_j = prod_{k != j} f_k
    kin = np.abs(sum(_weighted(us, fs))) ** 2 + np.abs(sum(_weighted(vs, fs))) ** 2
    rho = np.prod(fs, axis=0) ** 2
    B = np.sum(Bs, axis=0)
    return 0.5 * (kin + B**2 + 0.5 * cfg.kappa**2 * (1 - rho) ** 2)


def _weighted(vecs, fs):
    k = len(fs)
    for j in range(k):
        others = np.prod(np.delete(fs, j, axis=0), axis=0) if k > 1 else 1.0
        yield others * vecs[j]


@dataclass(frozen=True)
class GluedField:
    x: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    spacing: float
    window: tuple


def default_window(cfg: VortexConfig, margin: float | None = None) -> tuple:
    if margin is None:
        margin = 12.0 / min(decay_rate(cfg.kappa), 1.0)
    z = cfg.z
    return (z.real.min() - margin, z.real.max() + margin, z.imag.min() - margin, z.imag.max() + margin)


def _check_window(cfg: VortexConfig, window) -> None:
    need = 5.0 / min(decay_rate(cfg.kappa), 1.0)
    x0, x1, y0, y1 = window
    z = cfg.z
    if (z.real.min() - x0 < need or x1 - z.real.max() < need or z.imag.min() - y0 < need
            or y1 - z.imag.max() < need):
        warnings.warn("window does not cover all centres plus 5 decay lengths", RuntimeWarning)


def _grid(window, spacing):
    x0, x1, y0, y1 = window
    nx = max(2, int(round((x1 - x0) / spacing)) + 1)
    ny = max(2, int(round((y1 - y0) / spacing)) + 1)
    X, Y = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny), indexing="ij")
    return X + 1j * Y, (x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1)


def glued_field(cfg: VortexConfig, window=None, N: int = 256) -> GluedField:
    """Glued field sampled on an ``N x N`` grid over ``window = (x0, x1, y0, y1)``."""
    if window is None:
        window = default_window(cfg)
    _check_window(cfg, window)
    x0, x1, y0, y1 = window
    X, Y = np.meshgrid(np.linspace(x0, x1, N), np.linspace(y0, y1, N), indexing="ij")
    x = X + 1j * Y
    psi, A = glued_values(cfg, x)
    return GluedField(x, psi, A, float((x1 - x0) / (N - 1)), tuple(window))


def winding_number(cfg: VortexConfig, radius: float, centre: complex = 0j, samples: int = 4096) -> int:
    """Degree of the glued ``Psi`` on the circle ``|x - centre| = radius``."""
    th = np.linspace(0, 2 * math.pi, samples, endpoint=False)
    psi, _ = glued_values(cfg, centre + radius * np.exp(1j * th))
    ph = np.angle(psi)
    jumps = np.angle(np.exp(1j * np.diff(np.append(ph, ph[0]))))
    return int(round(np.sum(jumps) / (2 * math.pi)))


# ---------------------------------------------------------------------------
# Interaction energy
# ---------------------------------------------------------------------------


def _field_interaction(cfg: VortexConfig, window, spacing: float) -> float:
    if window is None:
        window = default_window(cfg)
    _check_window(cfg, window)
    x, hx, hy = _grid(window, spacing)
    dens = energy_density(cfg, x)
    for z, n in zip(cfg.centers, cfg.degrees):
        dens = dens - energy_density(VortexConfig((z,), (n,), cfg.kappa, cfg.gamma), x)
    # trapezoidal rule; the integrand decays away from the centres
    w = np.ones(x.shape)
    w[0, :] *= 0.5
    w[-1, :] *= 0.5
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    return float(np.sum(w * dens) * hx * hy)


def _pair_sum(cfg: VortexConfig) -> float:
    z, n = cfg.z, np.array(cfg.degrees)
    total = 0.0
    for j in range(z.size):
        for k in range(z.size):
            if j != k:
                R = abs(z[j] - z[k])
                total += n[j] * n[k] * math.exp(-R) / math.sqrt(R)
    return total


@dataclass(frozen=True)
class Calibration:
    kappa: float
    C: float
    R: float
    W_field: float
    spacing: float

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "C": self.C, "calibration_R": self.R, "W_field": self.W_field,
                "spacing": self.spacing, "pair": "(+1, +1)"}


@lru_cache(maxsize=32)
def calibrate(kappa: float, R: float = CALIBRATION_R, spacing: float = 0.05) -> Calibration:
    """Constant ``C`` of the asymptotic form, matched to the field method for a ``(+1, +1)`` pair."""
    cfg = VortexConfig((-R / 2, R / 2), (1, 1), kappa)
    W = _field_interaction(cfg, None, spacing)
    return Calibration(float(kappa), W / _pair_sum(cfg), float(R), W, float(spacing))


def interaction_energy(cfg: VortexConfig, method: str = "field", window=None, spacing: float = 0.05) -> float:
    """Interaction energy ``W`` of the configuration.

    ``field``: energy of the glued field minus the single-vortex energies,
    by the trapezoidal rule on ``window``.  ``asymptotic``:
    ``C sum_{j != k} n_j n_k exp(-R_jk)/sqrt(R_jk)`` with ``C`` from
    :func:`calibrate`; requires ``R >= 4``.
    """
    if len(cfg.centers) < 2:
        return 0.0
    if method == "field":
        return _field_interaction(cfg, window, spacing)
    if method == "asymptotic":
        if cfg.separation < VALIDITY_FLOOR:
            raise ValueError(f"asymptotic interaction needs R >= {VALIDITY_FLOOR}")
        return calibrate(cfg.kappa).C * _pair_sum(cfg)
    raise ValueError(f"unknown method {method!r}")


def interaction_gradient(cfg: VortexConfig) -> np.ndarray:
    """``grad_{z_j} W`` of the asymptotic form, complex-encoded per centre."""
    C = calibrate(cfg.kappa).C
    return C * _pair_gradient(cfg.z, np.array(cfg.degrees))


def _pair_gradient(z: np.ndarray, n: np.ndarray) -> np.ndarray:
    d = z[:, None] - z[None, :]
    R = np.abs(d)
    np.fill_diagonal(R, np.inf)
    dphi = -np.exp(-R) / np.sqrt(R) * (1 + 0.5 / R)
    # each unordered pair appears twice in the ordered sum
    return np.sum(2 * n[:, None] * n[None, :] * dphi * d / R, axis=1)


def _pair_energy(z: np.ndarray, n: np.ndarray) -> float:
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    return float(np.sum(n[:, None] * n[None, :] * np.exp(-d) / np.sqrt(d)))


def _min_sep(z: np.ndarray) -> float:
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


# ---------------------------------------------------------------------------
# Motion laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MotionTrace:
    times: np.ndarray
    centers: np.ndarray
    W: np.ndarray
    separation: np.ndarray
    epsilon: np.ndarray
    law: str
    halted: bool = False
    reason: str = ""
    velocities: np.ndarray | None = field(default=None, repr=False)
    reduced_energy: np.ndarray | None = field(default=None, repr=False)

    def to_rows(self):
        rows = []
        for i, t in enumerate(self.times):
            zs = []
            for z in self.centers[i]:
                zs += [float(z.real), float(z.imag)]
            rows.append((float(t), *zs, float(self.W[i]), float(self.separation[i])))
        return rows


def _trace(cfg, C, times, Z, law, halted, reason, V=None):
    n = np.array(cfg.degrees)
    W = np.array([C * _pair_energy(z, n) for z in Z])
    R = np.array([_min_sep(z) for z in Z])
    eps = R**-0.5 * np.exp(-R)
    E = None
    if V is not None:
        E = 0.5 * cfg.gamma * np.sum(np.abs(V) ** 2, axis=1) + W
    return MotionTrace(np.asarray(times), np.asarray(Z), W, R, eps, law, halted, reason, V, E)


def integrate_gradient_law(cfg: VortexConfig, T: float, dt: float, floor: float = VALIDITY_FLOOR,
                           rtol: float = 1e-10, atol: float = 1e-14) -> MotionTrace:
    """``gamma z_j' = -grad_j W`` by adaptive Runge-Kutta, sampled every ``dt``.

    Integration stops early (``halted``) if the separation drops below
    ``floor``.
    """
    if len(cfg.centers) < 2:
        raise ValueError("the motion law needs at least two vortices")
    if cfg.separation < 6.0:
        raise ValueError("initial separation must be at least 6")
    C = calibrate(cfg.kappa).C
    n = np.array(cfg.degrees)
    k = n.size

    def rhs(t, y):
        z = y[:k] + 1j * y[k:]
        v = -C * _pair_gradient(z, n) / cfg.gamma
        return np.concatenate([v.real, v.imag])

    def hit_floor(t, y):
        return _min_sep(y[:k] + 1j * y[k:]) - floor

    hit_floor.terminal = True
    hit_floor.direction = -1
    z0 = cfg.z
    t_eval = np.arange(0.0, T + 0.5 * dt, dt)
    t_eval = t_eval[t_eval <= T]
    sol = solve_ivp(rhs, (0.0, T), np.concatenate([z0.real, z0.imag]), method="RK45", t_eval=t_eval,
                    events=hit_floor, rtol=rtol, atol=atol, max_step=max(dt, 1e-3))
    if sol.status == -1:
        raise RuntimeError(f"integration failed: {sol.message}")
    times, Y = sol.t, sol.y
    halted = sol.status == 1
    if halted:
        times = np.append(times, sol.t_events[0][0])
        Y = np.column_stack([Y, sol.y_events[0][0]])
    Z = (Y[:k] + 1j * Y[k:]).T
    reason = f"separation fell below the validity floor {floor}" if halted else ""
    return _trace(cfg, C, times, Z, "gradient", halted, reason)


def integrate_second_order_law(cfg: VortexConfig, velocities, T: float, dt: float,
                               floor: float = VALIDITY_FLOOR, record_every: int = 1) -> MotionTrace:
    """``gamma z_j'' = -grad_j W`` by the velocity Verlet (leapfrog) scheme."""
    if len(cfg.centers) < 2:
        raise ValueError("the motion law needs at least two vortices")
    if cfg.separation < 6.0:
        raise ValueError("initial separation must be at least 6")
    C = calibrate(cfg.kappa).C
    n = np.array(cfg.degrees)
    z = cfg.z.copy()
    v = np.asarray(velocities, dtype=complex).copy()
    if v.shape != z.shape:
        raise ValueError("one velocity per vortex is required")
    acc = lambda zz: -C * _pair_gradient(zz, n) / cfg.gamma
    a = acc(z)
    steps = int(round(T / dt))
    times, Z, V = [0.0], [z.copy()], [v.copy()]
    halted, reason = False, ""
    for i in range(1, steps + 1):
        v_half = v + 0.5 * dt * a
        z = z + dt * v_half
        a = acc(z)
        v = v_half + 0.5 * dt * a
        if _min_sep(z) < floor:
            halted, reason = True, f"separation fell below the validity floor {floor}"
        if i % record_every == 0 or i == steps or halted:
            times.append(i * dt)
            Z.append(z.copy())
            V.append(v.copy())
        if halted:
            break
    return _trace(cfg, C, np.array(times), np.array(Z), "second-order", halted, reason, np.array(V))
