"""Lattice shapes, modular reduction, dual lattices and gauge exponents.

Points of the plane are represented as complex numbers ``x1 + 1j*x2``.
The wedge product is ``s ^ t = s1*t2 - s2*t1`` and the dot product is
``s . t = Re(conj(s)*t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

TWO_PI = 2.0 * math.pi


def wedge(s, t):
    """Return ``s ^ t = s1*t2 - s2*t1`` for complex-encoded vectors."""
    return np.imag(np.conj(s) * t)


def dot(s, t):
    """Return the Euclidean dot product of complex-encoded vectors."""
    return np.real(np.conj(s) * t)


def wrap_phase(theta):
    """Reduce angles to the half-open interval (-pi, pi]."""
    out = -np.remainder(-np.asarray(theta, dtype=float) + math.pi, TWO_PI) + math.pi
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Shapes and modular words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeShape:
    """Shape parameter ``tau`` in the upper half plane."""

    tau: complex

    def __post_init__(self):
        tau = complex(self.tau)
        if not (math.isfinite(tau.real) and math.isfinite(tau.imag)):
            raise ValueError(f"shape parameter must be finite, got {tau!r}")
        if tau.imag <= 0:
            raise ValueError(f"shape parameter must satisfy Im(tau) > 0, got {tau!r}")
        object.__setattr__(self, "tau", tau)

    def to_dict(self) -> dict:
        return {"tau": [self.tau.real, self.tau.imag]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LatticeShape":
        re, im = d["tau"]
        return cls(complex(re, im))


def as_shape(tau) -> LatticeShape:
    return tau if isinstance(tau, LatticeShape) else LatticeShape(complex(tau))


_GENERATORS = {
    "T": ((1, 1), (0, 1)),
    "Ti": ((1, -1), (0, 1)),
    "S": ((0, -1), (1, 0)),
}


@dataclass(frozen=True)
class ModularWord:
    """A word in the generators ``T``, ``Ti`` (inverse of T) and ``S``.

    Generators act on ``tau`` in reading order: the first tag is applied
    first.  ``matrix`` is the product ``G_k ... G_1`` acting by Moebius
    transformation.
    """

    tags: tuple = ()

    def __post_init__(self):
        tags = tuple(self.tags)
        for t in tags:
            if t not in _GENERATORS:
                raise ValueError(f"unknown generator tag {t!r}")
        object.__setattr__(self, "tags", tags)

    @property
    def matrix(self) -> tuple:
        m = ((1, 0), (0, 1))
        for t in self.tags:
            g = _GENERATORS[t]
            m = (
                (g[0][0] * m[0][0] + g[0][1] * m[1][0], g[0][0] * m[0][1] + g[0][1] * m[1][1]),
                (g[1][0] * m[0][0] + g[1][1] * m[1][0], g[1][0] * m[0][1] + g[1][1] * m[1][1]),
            )
        return m

    def apply(self, tau: complex) -> complex:
        """Apply the generators one by one (numerically stable for long words)."""
        tau = complex(tau)
        for t in self.tags:
            if t == "T":
                tau = tau + 1
            elif t == "Ti":
                tau = tau - 1
            else:
                tau = -1.0 / tau
        return tau

    def __add__(self, other: "ModularWord") -> "ModularWord":
        return ModularWord(self.tags + other.tags)


def apply_matrix(m, tau: complex) -> complex:
    (a, b), (c, d) = m
    return (a * tau + b) / (c * tau + d)


def in_fundamental_domain(tau: complex, tol: float = 0.0) -> bool:
    """Membership in {|tau| >= 1, -1/2 < Re tau <= 1/2}, with |tau| = 1 only for Re >= 0."""
    tau = complex(tau)
    if not (-0.5 < tau.real <= 0.5):
        return False
    r2 = abs(tau) ** 2
    if r2 < 1.0 - tol:
        return False
    if abs(r2 - 1.0) <= tol and tau.real < 0:
        return False
    return True


def reduce_shape(tau, max_iter: int = 64, tol: float = 1e-12) -> tuple[LatticeShape, ModularWord]:
    """Map ``tau`` into the fundamental domain of SL(2, Z).

    Alternates integer translations (bringing Re into (-1/2, 1/2]) and the
    inversion ``S`` until a fixed point is reached.  Points on the unit arc
    with negative real part are sent across by ``S``.
    """
    t = as_shape(tau).tau
    tags: list[str] = []
    for _ in range(max_iter):
        # round-off near Re = -1/2 is resolved towards the kept edge Re = +1/2
        shift = math.ceil(t.real - 0.5 - tol)
        if shift:
            tags.extend(["Ti"] * shift if shift > 0 else ["T"] * (-shift))
            t = complex(t.real - shift, t.imag)
        if abs(t) ** 2 < 1.0 - tol:
            tags.append("S")
            t = -1.0 / t
            continue
        break
    else:
        raise RuntimeError(f"reduction of {tau!r} did not terminate in {max_iter} steps")
    if abs(abs(t) ** 2 - 1.0) <= tol and t.real < 0:
        tags.append("S")
        t = -1.0 / t
        shift = math.ceil(t.real - 0.5 - tol)
        if shift:
            tags.extend(["Ti"] * shift if shift > 0 else ["T"] * (-shift))
            t = complex(t.real - shift, t.imag)
    return LatticeShape(t), ModularWord(tuple(tags))


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    """A planar lattice with basis ``(nu1, nu2)`` and flux data ``(b, n)``."""

    nu1: complex
    nu2: complex
    n: int = 1
    b: float = 1.0

    def __post_init__(self):
        nu1, nu2 = complex(self.nu1), complex(self.nu2)
        if abs(nu1) == 0 or not wedge(nu1, nu2) > 1e-14 * abs(nu1) * abs(nu2):
            raise ValueError("lattice basis must be non-degenerate and positively oriented")
        object.__setattr__(self, "nu1", nu1)
        object.__setattr__(self, "nu2", nu2)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "b", float(self.b))

    @property
    def basis(self) -> tuple[complex, complex]:
        return self.nu1, self.nu2

    @property
    def area(self) -> float:
        return float(wedge(self.nu1, self.nu2))

    @property
    def tau(self) -> complex:
        return self.nu2 / self.nu1

    @property
    def flux_defect(self) -> float:
        """``b*|Omega| - 2*pi*n``; zero for a quantized lattice."""
        return self.b * self.area - TWO_PI * self.n

    def is_quantized(self, rtol: float = 1e-9) -> bool:
        return abs(self.flux_defect) <= rtol * max(1.0, TWO_PI * abs(self.n))

    def vector(self, p, q):
        return p * self.nu1 + q * self.nu2

    def coordinates(self, x):
        """Real coordinates ``(u, v)`` with ``x = u*nu1 + v*nu2``."""
        x = np.asarray(x, dtype=complex)
        area = self.area
        return wedge(x, self.nu2) / area, wedge(self.nu1, x) / area

    def integer_coordinates(self, s, tol: float = 1e-8) -> tuple[int, int]:
        u, v = self.coordinates(s)
        p, q = int(round(float(u))), int(round(float(v)))
        if abs(u - p) > tol or abs(v - q) > tol:
            raise ValueError(f"{s!r} is not a lattice vector")
        return p, q

    def points(self, radius: float) -> np.ndarray:
        """All lattice points with modulus at most ``radius``."""
        return lattice_points(self.nu1, self.nu2, radius)

    def to_dict(self) -> dict:
        return {
            "basis": [[self.nu1.real, self.nu1.imag], [self.nu2.real, self.nu2.imag]],
            "n": self.n,
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Lattice":
        (a, b), (c, e) = d["basis"]
        return cls(complex(a, b), complex(c, e), int(d["n"]), float(d["b"]))


def gauss_reduce(v1: complex, v2: complex) -> tuple[complex, complex]:
    """Lagrange-Gauss reduction of a planar basis; keeps the orientation."""
    v1, v2 = complex(v1), complex(v2)
    orient = np.sign(wedge(v1, v2))
    for _ in range(200):
        if abs(v2) < abs(v1):
            v1, v2 = v2, v1
        mu = round(dot(v1, v2) / abs(v1) ** 2)
        if mu == 0:
            break
        v2 = v2 - mu * v1
    if np.sign(wedge(v1, v2)) != orient:
        v2 = -v2
    return v1, v2


def lattice_points(v1: complex, v2: complex, radius: float) -> np.ndarray:
    """Enumerate ``p*v1 + q*v2`` with modulus at most ``radius``."""
    w1, w2 = gauss_reduce(v1, v2)
    area = abs(wedge(w1, w2))
    pmax = int(math.ceil(radius * abs(w2) / area)) + 1
    qmax = int(math.ceil(radius * abs(w1) / area)) + 1
    p = np.arange(-pmax, pmax + 1)
    q = np.arange(-qmax, qmax + 1)
    pts = (p[:, None] * w1 + q[None, :] * w2).ravel()
    return pts[np.abs(pts) <= radius]


def normalized_lattice(tau, n: int = 1) -> Lattice:
    """Lattice ``r*(Z + tau*Z)`` of area ``2*pi*n`` carrying unit average field."""
    if int(n) != n or n < 1:
        raise ValueError(f"flux quanta must be a positive integer, got {n!r}")
    t = as_shape(tau).tau
    r = math.sqrt(TWO_PI * n / t.imag)
    return Lattice(complex(r), r * t, int(n), 1.0)


def lattice_with_field(tau, b: float, n: int = 1) -> Lattice:
    """Lattice of shape ``tau`` whose cell carries ``n`` flux quanta at field ``b``."""
    if b <= 0:
        raise ValueError("average field must be positive")
    t = as_shape(tau).tau
    r = math.sqrt(TWO_PI * n / (t.imag * b))
    return Lattice(complex(r), r * t, int(n), float(b))


def dual_lattice(L: Lattice) -> Lattice:
    """Reciprocal lattice ``{t : t.s in 2*pi*Z for all s in L}``.

    The returned lattice carries one flux quantum at the field that makes it
    quantized; only its geometry is meaningful.
    """
    area = L.area
    if not area > 0:
        raise ValueError("degenerate lattice")
    # t1 . nu1 = 2pi, t1 . nu2 = 0 and t2 . nu1 = 0, t2 . nu2 = 2pi
    t1 = -1j * L.nu2 * TWO_PI / area
    t2 = 1j * L.nu1 * TWO_PI / area
    dual_area = TWO_PI**2 / area
    return Lattice(t1, t2, 1, TWO_PI / dual_area)


# ---------------------------------------------------------------------------
# Gauge exponents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaugeExponent:
    """Exponents ``g_s(x) = (b/2) s^x + c_s`` for lattice vectors ``s``.

    ``c_s`` is fixed on the basis (``c1``, ``c2``) and extended by
    ``c_{s+t} = c_s + c_t + (b/2) s^t``, giving
    ``c_{p nu1 + q nu2} = p c1 + q c2 + (b/2) p q |Omega|``.
    ``offsets`` adds phases to individual vectors without propagating them
    (used to build deliberately broken exponents) and ``chi`` applies the
    gauge change ``g_s(x) -> g_s(x) + chi(x + s) - chi(x)``.
    """

    lattice: Lattice
    c1: float = 0.0
    c2: float = 0.0
    offsets: Mapping = field(default_factory=dict)
    chi: Callable | None = None

    @classmethod
    def canonical(cls, lattice: Lattice) -> "GaugeExponent":
        return cls(lattice)

    @property
    def b(self) -> float:
        return self.lattice.b

    def c(self, p: int, q: int) -> float:
        L = self.lattice
        val = p * self.c1 + q * self.c2 + 0.5 * L.b * p * q * L.area
        return val + self.offsets.get((p, q), 0.0)

    def __call__(self, s, x):
        """Evaluate ``g_s(x)``; ``s`` a lattice vector (complex), ``x`` array-like."""
        p, q = self.lattice.integer_coordinates(s)
        return self.g(p, q, x)

    def g(self, p: int, q: int, x):
        s = self.lattice.vector(p, q)
        x = np.asarray(x, dtype=complex)
        val = 0.5 * self.b * wedge(s, x) + self.c(p, q)
        if self.chi is not None:
            val = val + self.chi(x + s) - self.chi(x)
        return val

    def grad(self, p: int, q: int, x=0j, h: float = 1e-6):
        """Gradient of ``g_s`` at ``x`` as a complex-encoded vector."""
        s = self.lattice.vector(p, q)
        val = 0.5 * self.b * (-s.imag + 1j * s.real)
        if self.chi is not None:
            x = np.asarray(x, dtype=complex)
            d = lambda e: (self.chi(x + s + e) - self.chi(x + e) - self.chi(x + s - e) + self.chi(x - e)) / (2 * h)
            val = val + d(h) + 1j * d(1j * h)
        return val

    def with_offset(self, p: int, q: int, delta: float) -> "GaugeExponent":
        offsets = dict(self.offsets)
        offsets[(p, q)] = offsets.get((p, q), 0.0) + delta
        return GaugeExponent(self.lattice, self.c1, self.c2, offsets, self.chi)

    def gauge_transformed(self, chi: Callable) -> "GaugeExponent":
        if self.chi is None:
            new = chi
        else:
            old = self.chi
            new = lambda x: old(x) + chi(x)
        return GaugeExponent(self.lattice, self.c1, self.c2, dict(self.offsets), new)

    def to_dict(self) -> dict:
        if self.chi is not None:
            raise ValueError("exponents with a gauge function are not serializable")
        return {
            "lattice": self.lattice.to_dict(),
            "c1": self.c1,
            "c2": self.c2,
            "offsets": [[p, q, v] for (p, q), v in sorted(self.offsets.items())],
            "convention": "c_{p nu1 + q nu2} = p c1 + q c2 + (b/2) p q |Omega|",
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GaugeExponent":
        offsets = {(int(p), int(q)): float(v) for p, q, v in d.get("offsets", [])}
        return cls(Lattice.from_dict(d["lattice"]), float(d["c1"]), float(d["c2"]), offsets)


def cocycle_defect(g: GaugeExponent, s, t, x) -> float:
    """``g_{s+t}(x) - g_s(x+t) - g_t(x)`` reduced to (-pi, pi]."""
    L = g.lattice
    ps, qs = L.integer_coordinates(s)
    pt, qt = L.integer_coordinates(t)
    t_vec = L.vector(pt, qt)
    val = g.g(ps + pt, qs + qt, x) - g.g(ps, qs, np.asarray(x) + t_vec) - g.g(pt, qt, x)
    return wrap_phase(val)


def chern_number(g: GaugeExponent, x=0j, tol: float = 1e-8) -> int:
    """Winding of the exponent around one cell.

    Equals the flux ``(1/2pi) * oint A.dl`` around the positively oriented
    cell boundary: ``g_{nu1}(x+nu2) - g_{nu1}(x) - g_{nu2}(x+nu1) + g_{nu2}(x)``.
    """
    L = g.lattice
    val = (g.g(1, 0, x + L.nu2) - g.g(1, 0, x) - g.g(0, 1, x + L.nu1) + g.g(0, 1, x)) / TWO_PI
    val = float(np.real(val))
    k = round(val)
    if abs(val - k) > tol:
        raise ValueError(f"exponent is not a cocycle: winding {val!r} is not an integer")
    return int(k)


def lift_field(cell_values, g: GaugeExponent, x):
    """Extend a cell field to the plane by gauge-periodicity.

    ``cell_values`` is either a callable ``x0 -> (psi, a)`` defined on the
    base cell ``{u*nu1 + v*nu2 : 0 <= u, v < 1}`` or an object with a
    ``sample(x0)`` method returning the same pair.  ``a`` is a
    complex-encoded vector.  Returns ``(Psi(x), A(x))`` with
    ``Psi(x) = psi(x0) exp(i g_alpha(x0))`` and ``A(x) = a(x0) + grad g_alpha``
    where ``x = x0 + alpha``.
    """
    sample = cell_values.sample if hasattr(cell_values, "sample") else cell_values
    L = g.lattice
    x = np.asarray(x, dtype=complex)
    u, v = L.coordinates(x)
    p = np.floor(u).astype(int)
    q = np.floor(v).astype(int)
    x0 = x - (p * L.nu1 + q * L.nu2)
    psi, a = sample(x0)
    psi = np.asarray(psi, dtype=complex)
    a = np.asarray(a, dtype=complex)
    if np.ndim(x) == 0:
        p, q = int(p), int(q)
        return psi * np.exp(1j * g.g(p, q, x0)), a + g.grad(p, q, x0)
    out_psi = np.empty_like(psi)
    out_a = np.empty_like(a)
    for pq in set(zip(p.ravel().tolist(), q.ravel().tolist())):
        mask = (p == pq[0]) & (q == pq[1])
        out_psi[mask] = psi[mask] * np.exp(1j * g.g(pq[0], pq[1], x0[mask]))
        out_a[mask] = a[mask] + g.grad(pq[0], pq[1], x0[mask])
    return out_psi, out_a


def uniform_field_potential(b: float, x):
    """Symmetric-gauge potential ``A = (b/2)(-x2, x1)`` as a complex-encoded vector."""
    x = np.asarray(x, dtype=complex)
    return 0.5 * b * 1j * x


def uniform_field_link(b: float, x, y):
    """Exact line integral of the symmetric-gauge potential along ``x -> y``."""
    return 0.5 * b * wedge(x, y)
