"""Ginzburg-Landau vortices, vortex lattices and their stability."""

from . import abrikosov, cell, dynamics, landau, lattice, vortex
from .abrikosov import beta_lattice_sum, beta_quadrature, classify_stability, gamma, gamma_k, kappa_c
from .cell import assemble_low_field_lattice, newton_solve_near_hc2, tdgl_relax
from .dynamics import VortexConfig, integrate_gradient_law, integrate_second_order_law, interaction_energy
from .landau import landau_spectrum, lll_state, theta_q
from .lattice import GaugeExponent, Lattice, lattice_with_field, reduce_shape
from .vortex import solve_profile, stability_report

__version__ = "0.1.0"

__all__ = [
    "abrikosov", "cell", "dynamics", "landau", "lattice", "vortex",
    "beta_lattice_sum", "beta_quadrature", "classify_stability", "gamma", "gamma_k", "kappa_c",
    "assemble_low_field_lattice", "newton_solve_near_hc2", "tdgl_relax",
    "VortexConfig", "integrate_gradient_law", "integrate_second_order_law", "interaction_energy",
    "landau_spectrum", "lll_state", "theta_q",
    "GaugeExponent", "Lattice", "lattice_with_field", "reduce_shape",
    "solve_profile", "stability_report",
]
