"""Uniform periodic meshes of a lattice cell used by the gauge-covariant schemes.

Sites sit at ``(i/N1) nu1 + (j/N2) nu2``.  Edges run along ``nu1/N1``,
``nu2/N2`` and, for oblique cells, along the shorter diagonal of each grid
parallelogram.  Edge weights are the cotangent weights of the resulting
triangulation, computed from the isotropy condition
``sum_d w_d l_d l_d^T = A_site * I`` which they satisfy exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .lattice import GaugeExponent, Lattice, dot, uniform_field_link, wedge

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class CellMesh:
    lattice: Lattice
    N1: int
    N2: int

    def __post_init__(self):
        if self.N1 < 3 or self.N2 < 3:
            raise ValueError("cell grids need at least 3 points per direction")

    # -- geometry -----------------------------------------------------------

    @property
    def h1(self) -> complex:
        return self.lattice.nu1 / self.N1

    @property
    def h2(self) -> complex:
        return self.lattice.nu2 / self.N2

    @property
    def n_sites(self) -> int:
        return self.N1 * self.N2

    @property
    def site_area(self) -> float:
        return self.lattice.area / self.n_sites

    @cached_property
    def positions(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.N1), np.arange(self.N2), indexing="ij")
        return (i * self.h1 + j * self.h2).ravel()

    @cached_property
    def directions(self) -> tuple:
        """Grid steps ``(di, dj)`` carrying edges."""
        h1, h2 = self.h1, self.h2
        c = dot(h1, h2) / (abs(h1) * abs(h2))
        if abs(c) < 1e-12:
            return ((1, 0), (0, 1))
        if c > 0:
            return ((1, 0), (0, 1), (-1, 1))
        return ((1, 0), (0, 1), (1, 1))

    @property
    def triangulated(self) -> bool:
        return len(self.directions) == 3

    def step(self, d) -> complex:
        return d[0] * self.h1 + d[1] * self.h2

    @cached_property
    def direction_weights(self) -> np.ndarray:
        ells = [self.step(d) for d in self.directions]
        A = self.site_area
        rows = np.array([[l.real**2 for l in ells], [l.imag**2 for l in ells], [l.real * l.imag for l in ells]])
        rhs = np.array([A, A, 0.0])
        w = np.linalg.lstsq(rows, rhs, rcond=None)[0]
        if np.any(w < -1e-12 * A):
            raise ValueError("mesh has negative edge weights; reduce the lattice shape first")
        return np.maximum(w, 0.0)

    # -- topology -----------------------------------------------------------

    def _index(self, i, j):
        return (i % self.N1) * self.N2 + (j % self.N2)

    @cached_property
    def edges(self) -> dict:
        """Edge arrays: tail, head (flat site indices), wrap (p, q), direction id, weight."""
        i, j = np.meshgrid(np.arange(self.N1), np.arange(self.N2), indexing="ij")
        i, j = i.ravel(), j.ravel()
        tails, heads, wp, wq, dirs = [], [], [], [], []
        for k, (di, dj) in enumerate(self.directions):
            ii, jj = i + di, j + dj
            tails.append(self._index(i, j))
            heads.append(self._index(ii, jj))
            wp.append(np.floor_divide(ii, self.N1))
            wq.append(np.floor_divide(jj, self.N2))
            dirs.append(np.full(i.size, k))
        d = np.concatenate(dirs)
        return {
            "tail": np.concatenate(tails),
            "head": np.concatenate(heads),
            "p": np.concatenate(wp),
            "q": np.concatenate(wq),
            "dir": d,
            "weight": self.direction_weights[d],
            "vector": np.array([self.step(s) for s in self.directions])[d],
        }

    @property
    def n_edges(self) -> int:
        return self.edges["tail"].size

    def edge_id(self, i, j, k):
        return k * self.n_sites + self._index(i, j)

    @cached_property
    def plaquettes(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Oriented edge-plaquette incidence, plaquette areas and centroids."""
        i, j = np.meshgrid(np.arange(self.N1), np.arange(self.N2), indexing="ij")
        i, j = i.ravel(), j.ravel()
        dirs = self.directions
        rows, cols, vals, areas, cents = [], [], [], [], []
        base = self.positions[self._index(i, j)]
        h1, h2 = self.h1, self.h2

        blocks = []
        if not self.triangulated:
            # square/rectangular plaquette: e1(i,j) + e2(i+1,j) - e1(i,j+1) - e2(i,j)
            blocks.append(
                (
                    [(self.edge_id(i, j, 0), 1), (self.edge_id(i + 1, j, 1), 1),
                     (self.edge_id(i, j + 1, 0), -1), (self.edge_id(i, j, 1), -1)],
                    self.site_area,
                    base + 0.5 * (h1 + h2),
                )
            )
        elif dirs[2] == (-1, 1):
            # diagonal runs from (i+1, j) to (i, j+1)
            blocks.append(
                (
                    [(self.edge_id(i, j, 0), 1), (self.edge_id(i + 1, j, 2), 1), (self.edge_id(i, j, 1), -1)],
                    0.5 * self.site_area,
                    base + (h1 + h2) / 3,
                )
            )
            blocks.append(
                (
                    [(self.edge_id(i + 1, j, 1), 1), (self.edge_id(i, j + 1, 0), -1), (self.edge_id(i + 1, j, 2), -1)],
                    0.5 * self.site_area,
                    base + (2 * h1 + 2 * h2) / 3,
                )
            )
        else:
            # diagonal runs from (i, j) to (i+1, j+1)
            blocks.append(
                (
                    [(self.edge_id(i, j, 0), 1), (self.edge_id(i + 1, j, 1), 1), (self.edge_id(i, j, 2), -1)],
                    0.5 * self.site_area,
                    base + (2 * h1 + h2) / 3,
                )
            )
            blocks.append(
                (
                    [(self.edge_id(i, j, 2), 1), (self.edge_id(i, j + 1, 0), -1), (self.edge_id(i, j, 1), -1)],
                    0.5 * self.site_area,
                    base + (h1 + 2 * h2) / 3,
                )
            )
        for b_idx, (members, area, centroid) in enumerate(blocks):
            offset = b_idx * i.size
            for eid, sgn in members:
                rows.append(np.arange(i.size) + offset)
                cols.append(eid)
                vals.append(np.full(i.size, sgn, dtype=float))
            areas.append(np.full(i.size, area))
            cents.append(centroid)
        n_p = len(blocks) * i.size
        d1 = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_p, self.n_edges)
        )
        return d1, np.concatenate(areas), np.concatenate(cents)

    @property
    def curl(self) -> sp.csr_matrix:
        return self.plaquettes[0]

    @property
    def plaquette_areas(self) -> np.ndarray:
        return self.plaquettes[1]

    @cached_property
    def grad(self) -> sp.csr_matrix:
        """Site-to-edge difference ``chi[head] - chi[tail]``."""
        e = self.edges
        E = self.n_edges
        rows = np.concatenate([np.arange(E), np.arange(E)])
        cols = np.concatenate([e["head"], e["tail"]])
        vals = np.concatenate([np.ones(E), -np.ones(E)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(E, self.n_sites))

    # -- gauge data ---------------------------------------------------------

    def boundary_phase(self, g: GaugeExponent, k: complex = 0j) -> np.ndarray:
        """Twist ``g_s(x_head) + k.s`` for edges that wrap by ``s``; zero otherwise."""
        e = self.edges
        out = np.zeros(self.n_edges)
        wraps = (e["p"] != 0) | (e["q"] != 0)
        xh = self.positions[e["head"]]
        for p, q in set(zip(e["p"][wraps].tolist(), e["q"][wraps].tolist())):
            m = (e["p"] == p) & (e["q"] == q)
            s = self.lattice.vector(p, q)
            out[m] = g.g(p, q, xh[m]) + dot(k, s)
        return out

    def uniform_links(self, g: GaugeExponent, k: complex = 0j) -> np.ndarray:
        """Torus link phases of the symmetric-gauge uniform field ``g.b``."""
        e = self.edges
        xt = self.positions[e["tail"]]
        return uniform_field_link(g.b, xt, xt + e["vector"]) - self.boundary_phase(g, k)

    def flux_offsets(self, links: np.ndarray, target_flux: np.ndarray) -> np.ndarray:
        """Integers ``m_p`` so that ``curl(links) + 2 pi m_p`` is closest to ``target_flux``."""
        return np.rint((target_flux - self.curl @ links) / TWO_PI).astype(np.int64)

    def covariant_laplacian(self, links: np.ndarray) -> sp.csr_matrix:
        """Hermitian ``K`` with ``psi^H K psi = sum_e w_e |exp(-i theta_e) psi_h - psi_t|^2``."""
        e = self.edges
        w = e["weight"]
        U = np.exp(-1j * links)
        t, h = e["tail"], e["head"]
        n = self.n_sites
        rows = np.concatenate([t, h, t, h])
        cols = np.concatenate([t, h, h, t])
        vals = np.concatenate([w + 0j, w + 0j, -w * U, -w * np.conj(U)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
