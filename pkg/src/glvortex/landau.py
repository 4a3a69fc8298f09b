"""Theta functions with characteristics, lowest Landau level states and
the spectrum of the magnetic Laplacian on a flux cell."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from ._mesh import CellMesh
from .lattice import (
    GaugeExponent,
    Lattice,
    LatticeShape,
    as_shape,
    lattice_with_field,
    normalized_lattice,
)

TWO_PI = 2.0 * math.pi
DEFAULT_M = 12


@dataclass(frozen=True)
class ThetaCharacteristic:
    """Characteristic ``q = -a*tau + b_char`` with real ``a`` and ``b_char``."""

    q: complex
    tau: complex

    @property
    def a(self) -> float:
        return -self.q.imag / self.tau.imag

    @property
    def b_char(self) -> float:
        return self.q.real + self.a * self.tau.real

    @classmethod
    def from_ab(cls, a: float, b_char: float, tau) -> "ThetaCharacteristic":
        tau = as_shape(tau).tau
        return cls(complex(-a * tau + b_char), tau)


def theta_tail_bound(z, tau, M: int) -> float:
    """Bound on the omitted terms, of order ``exp(-pi Im tau (M - |Im z|/Im tau)^2)``."""
    tau = as_shape(tau).tau
    y = np.max(np.abs(np.imag(z))) / tau.imag
    d = max(M + 1 - y, 0.0)
    return float(2.0 * math.exp(-math.pi * tau.imag * d * d) / (1.0 - math.exp(-math.pi * tau.imag)))


def theta_q(z, tau, q=0j, M: int = DEFAULT_M):
    """Theta function with characteristic ``q``, truncated to ``|m| <= M``.

    ``theta_q(z) = exp(i pi (a^2 tau - 2 a b - 2 a z)) sum_m exp(i pi m^2 tau + 2 pi i m (z + q))``
    with ``q = -a*tau + b``.  Accepts array ``z``.
    """
    tau = as_shape(tau).tau
    if M < 1:
        raise ValueError("truncation order must be at least 1")
    if not isinstance(q, ThetaCharacteristic):
        q = ThetaCharacteristic(complex(q), tau)
    a, b = q.a, q.b_char
    z = np.asarray(z, dtype=complex)
    m = np.arange(-M, M + 1).reshape((-1,) + (1,) * z.ndim)
    terms = np.exp(1j * math.pi * m * m * tau + 2j * math.pi * m * (z[None, ...] + q.q))
    s = terms.sum(axis=0)
    return np.exp(1j * math.pi * (a * a * tau - 2 * a * b - 2 * a * z)) * s


@dataclass(frozen=True)
class LLLState:
    """Lowest Landau level state on the normalized lattice of shape ``tau``.

    Satisfies ``phi(x + s) = exp(i (s^x / 2 + c_s + k.s)) phi(x)`` for ``s``
    in the lattice, with ``c_s`` the canonical constants of
    :class:`~glvortex.lattice.GaugeExponent`.
    """

    tau: complex
    k: complex = 0j
    M: int = DEFAULT_M
    c0: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tau", as_shape(self.tau).tau)
        object.__setattr__(self, "k", complex(self.k))

    @property
    def scale(self) -> float:
        return math.sqrt(TWO_PI / self.tau.imag)

    @property
    def lattice(self) -> Lattice:
        return normalized_lattice(self.tau, 1)

    @property
    def characteristic(self) -> ThetaCharacteristic:
        # k = -scale * i * q gives the character exp(+i k.s)
        return ThetaCharacteristic(-self.k / (1j * self.scale), self.tau)

    def normalized(self, N: int = 64) -> "LLLState":
        """Rescale ``c0`` so that the cell average of ``|phi|^2`` is one."""
        mesh = CellMesh(self.lattice, N, N)
        raw = LLLState(self.tau, self.k, self.M, 1.0)
        mean = np.mean(np.abs(raw(mesh.positions)) ** 2)
        return LLLState(self.tau, self.k, self.M, 1.0 / math.sqrt(mean))

    def __call__(self, x):
        return phi_k(x, self)


def phi_k(x, state: LLLState):
    """Evaluate the LLL state at complex-encoded points ``x``."""
    tau = state.tau
    z = np.asarray(x, dtype=complex) / state.scale
    gauss = np.exp(math.pi / (2 * tau.imag) * (z * z - np.abs(z) ** 2))
    return state.c0 * gauss * theta_q(z, tau, state.characteristic, state.M)


def lll_state(tau, k=0j, M: int = DEFAULT_M, N: int = 64) -> LLLState:
    """Normalized LLL state with quasimomentum ``k``."""
    return LLLState(tau, k, M).normalized(N)


def magnetic_operator(mesh: CellMesh, g: GaugeExponent, k: complex = 0j):
    """Sparse ``-Delta_A`` (divided by the site area) for the uniform field ``g.b``."""
    links = mesh.uniform_links(g, k)
    return mesh.covariant_laplacian(links) / mesh.site_area


def lll_residual(state: LLLState, N: int) -> float:
    """Relative residual ``|(-Delta_A - 1) phi| / |phi|`` on an ``N x N`` grid."""
    if N < 16:
        raise ValueError("lll_residual needs N >= 16")
    L = state.lattice
    mesh = CellMesh(L, N, N)
    op = magnetic_operator(mesh, GaugeExponent.canonical(L), state.k)
    v = state(mesh.positions)
    r = op @ v - v
    return float(np.linalg.norm(r) / np.linalg.norm(v))


@dataclass(frozen=True)
class LandauSpectrumResult:
    b: float
    n: int
    N: int
    tau: complex
    eigenvalues: np.ndarray
    multiplicities: tuple
    cluster_ids: np.ndarray = field(repr=False)
    vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def cluster_means(self) -> np.ndarray:
        return np.array([self.eigenvalues[self.cluster_ids == c].mean() for c in range(len(self.multiplicities))])

    def to_rows(self):
        return [(i, float(e), int(c)) for i, (e, c) in enumerate(zip(self.eigenvalues, self.cluster_ids))]

    def metadata(self) -> dict:
        return {"b": self.b, "n": self.n, "tau": [self.tau.real, self.tau.imag], "N": self.N}


def cluster_eigenvalues(vals: np.ndarray, gap: float) -> np.ndarray:
    ids = np.zeros(len(vals), dtype=int)
    for i in range(1, len(vals)):
        ids[i] = ids[i - 1] + (vals[i] - vals[i - 1] > gap)
    return ids


def landau_spectrum(
    b: float,
    n: int,
    N: int,
    count: int,
    tau=1j,
    lattice: Lattice | None = None,
    return_vectors: bool = False,
) -> LandauSpectrumResult:
    """Lowest ``count`` eigenvalues of the discretized ``-Delta_A`` on a flux cell.

    The cell is ``lattice`` if given (it must satisfy ``b |Omega| = 2 pi n``),
    otherwise the cell of shape ``tau`` carrying ``n`` quanta at field ``b``.
    """
    if N < 32:
        raise ValueError("landau_spectrum needs N >= 32")
    if lattice is None:
        lattice = lattice_with_field(tau, b, n)
    if abs(lattice.b - b) > 1e-12 * b or lattice.n != n or not lattice.is_quantized():
        raise ValueError("flux quantization b |Omega| = 2 pi n is violated")
    mesh = CellMesh(lattice, N, N)
    op = magnetic_operator(mesh, GaugeExponent.canonical(lattice))
    if N <= 48:
        vals, vecs = sla.eigh(op.toarray())
        vals, vecs = vals[:count], vecs[:, :count]
    else:
        vals, vecs = spla.eigsh(op, k=count, sigma=-0.5 * b, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vals = np.real(vals)
    ids = cluster_eigenvalues(vals, 0.2 * b)
    mult = tuple(int(np.sum(ids == c)) for c in range(ids.max() + 1))
    return LandauSpectrumResult(
        float(b), int(n), int(N), complex(lattice.tau), vals, mult, ids, vecs if return_vectors else None
    )
