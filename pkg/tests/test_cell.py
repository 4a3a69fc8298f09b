import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import TRI, cached_bifurcation, cached_low_field, cached_profile
from glvortex.abrikosov import beta_lattice_sum
from glvortex.cell import (
    CellField,
    NormalStateError,
    RegimeError,
    assemble_low_field_lattice,
    cell_energy,
    energy_gradient,
    energy_hessian,
    energy_per_cell_scan,
    explicit_stability_bound,
    gauge_transform,
    gl_residual,
    invariant_distance,
    load_checkpoint,
    newton_solve_near_hc2,
    normal_state,
    perturbed,
    save_checkpoint,
    supercell,
    tdgl_relax,
)
from glvortex.lattice import GaugeExponent, Lattice, lattice_with_field, lift_field


def _random_field(tau=0.3 + 1.1j, b=0.8, n=1, N=12, kappa=1.3, seed=0):
    rng = np.random.default_rng(seed)
    c = normal_state(lattice_with_field(tau, b, n), kappa, N)
    psi = 0.6 * (rng.standard_normal(c.mesh.n_sites) + 1j * rng.standard_normal(c.mesh.n_sites))
    return c.copy(psi=psi, links=c.links + 0.2 * rng.standard_normal(c.mesh.n_edges))


def test_normal_state_energy():
    L = lattice_with_field(TRI, 0.9, 1)
    c = normal_state(L, 1.2, 24)
    assert_allclose(cell_energy(c), 0.5 * 0.9**2 * L.area + 1.2**2 * L.area / 4, rtol=1e-13)
    assert c.flux_quanta == 1
    assert_allclose(c.plaquette_flux() / c.mesh.plaquette_areas, 0.9, rtol=1e-12)


def test_perfect_superconductor_has_zero_energy():
    c = normal_state(Lattice(2.0 + 0j, 0.5 + 1.7j, 0, 0.0), 0.8, 10)
    c = c.copy(psi=np.ones(c.mesh.n_sites, dtype=complex))
    assert abs(cell_energy(c)) < 1e-14
    assert np.max(np.abs(energy_gradient(c))) < 1e-14


def test_normal_state_rejects_unquantized_cell():
    with pytest.raises(ValueError):
        normal_state(Lattice(1 + 0j, 1j, 1, 2.0), 1.0, 8)


def test_discrete_gauge_invariance():
    rng = np.random.default_rng(1)
    for seed in range(5):
        c = _random_field(seed=seed)
        chi = rng.uniform(-math.pi, math.pi, c.mesh.n_sites) * 3
        c2 = gauge_transform(c, chi)
        E = cell_energy(c)
        assert abs(cell_energy(c2) - E) <= 1e-12 * max(1.0, abs(E))
        assert np.array_equal(c2.winding, c.winding)


def test_energy_gradient_matches_finite_differences():
    c = _random_field(N=10)
    x = c.vector()
    g = energy_gradient(c)
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(10):
        v = rng.standard_normal(x.size)
        fd = (cell_energy(c.with_vector(x + h * v)) - cell_energy(c.with_vector(x - h * v))) / (2 * h)
        assert abs(fd - g @ v) <= 1e-6 * max(1.0, abs(fd))


def test_energy_hessian_matches_gradient_differences():
    c = _random_field(N=8, seed=4)
    x = c.vector()
    H = energy_hessian(c)
    rng = np.random.default_rng(3)
    h = 1e-6
    v = rng.standard_normal(x.size)
    fd = (energy_gradient(c.with_vector(x + h * v)) - energy_gradient(c.with_vector(x - h * v))) / (2 * h)
    assert_allclose(fd, H @ v, atol=1e-6 * np.max(np.abs(H @ v)))


def test_vector_roundtrip():
    c = _random_field(N=6)
    c2 = c.with_vector(c.vector())
    assert np.array_equal(c2.psi, c.psi) and np.array_equal(c2.links, c.links)


def test_bifurcation_solution_exists():
    bp = cached_bifurcation(TRI, 1.0, 0.95)
    assert bp.mean_density > 1e-3
    assert bp.residual < 1e-9
    assert np.max(np.abs(energy_gradient(bp.cell))) < 1e-9
    assert bp.cell.flux_quanta == 1
    # it lies below the normal state
    L = bp.cell.lattice
    assert bp.energy_per_area < 0.5 * 0.95**2 + 0.25


def test_bifurcation_amplitude_scaling():
    a = cached_bifurcation(TRI, 1.0, 0.95).mean_density
    b = cached_bifurcation(TRI, 1.0, 0.975).mean_density
    assert_allclose(b / a, 0.5, rtol=0.1)


def test_bifurcation_density_matches_epsilon():
    bp = cached_bifurcation(TRI, 1.0, 0.95)
    assert_allclose(bp.mean_density, 2 * bp.kappa**2 * bp.epsilon**2, rtol=0.1)


def test_bifurcation_above_hc2_rejected():
    with pytest.raises(RegimeError):
        newton_solve_near_hc2(TRI, 1.0, 1.02)
    with pytest.raises(NormalStateError):
        newton_solve_near_hc2(TRI, 1.0, 1.02, check_regime=False)


def test_low_field_correction_small():
    lf = cached_low_field(TRI, 1.0, 0.05)
    assert lf.correction_norm < 1e-2
    assert lf.residual < 1e-8
    c = lf.solution
    assert c.flux_quanta == 1
    assert_allclose(np.sum(c.plaquette_flux()), 2 * math.pi, rtol=1e-12)


def test_low_field_matches_radial_profile():
    c = cached_low_field(TRI, 1.0, 0.05).solution
    L = c.lattice
    centre = 0.5 * (L.nu1 + L.nu2)
    f = cached_profile(1, 1.0).interpolator()["f"]
    d = np.abs(c.mesh.positions - centre)
    near = d < 3.0
    assert np.max(np.abs(np.abs(c.psi[near]) - f(d[near]))) < 0.01


def test_low_field_lift_is_continuous():
    c = cached_low_field(TRI, 1.0, 0.05).solution
    L, g, m = c.lattice, c.exponent, c.mesh
    rng = np.random.default_rng(0)
    h = max(abs(m.h1), abs(m.h2))
    # interpolation error scales: bilinear psi and piecewise-constant A
    psi_scale = h**2 * np.max(np.abs(m.covariant_laplacian(c.links) @ c.psi)) / m.site_area
    for s, other, N in ((L.nu1, L.nu2, c.N1), (L.nu2, L.nu1, c.N2)):
        step = 1e-7 * s / abs(s)
        x = s + rng.random(100) * other
        pa, aa = lift_field(c, g, x - step)
        pb, ab = lift_field(c, g, x + step)
        xi = (np.arange(1, N) / N)[rng.integers(0, N - 1, 100)] * s + rng.random(100) * other
        a_scale = np.max(np.abs(c.sample(xi - step)[1] - c.sample(xi + step)[1]))
        assert np.max(np.abs(pa - pb)) < psi_scale
        assert np.max(np.abs(aa - ab)) < a_scale


def test_low_field_reflection_symmetric():
    # odd N puts the vortex at a plaquette centre, an inversion centre of the mesh
    c = assemble_low_field_lattice(1j, 1.0, 0.05, N=(61, 61)).solution
    m = c.mesh
    I, J = np.meshgrid(np.arange(c.N1), np.arange(c.N2), indexing="ij")
    I, J = I.ravel(), J.ravel()
    rho = c.density()
    assert np.max(np.abs(rho[m._index(I, J)] - rho[m._index(-I % c.N1, -J % c.N2)])) < 1e-4


def test_low_field_preconditions():
    with pytest.raises(ValueError, match="1/sqrt"):
        assemble_low_field_lattice(TRI, 1 / math.sqrt(2), 0.05)
    with pytest.raises(ValueError, match="too small"):
        assemble_low_field_lattice(TRI, 1.0, 0.5)


def test_tdgl_conserves_flux_and_dissipates():
    L = lattice_with_field(TRI, 0.95, 1)
    c0 = perturbed(normal_state(L, 1.0, 16), 1e-2, seed=1)
    tr = tdgl_relax(c0, 1.0, 60.0)
    assert np.all(np.diff(tr.energies) <= 1e-12 * np.abs(tr.energies[:-1]))
    assert np.all(tr.windings == 1)
    assert np.array_equal(tr.final.winding, c0.winding)
    assert tr.energies[-1] < tr.energies[0]


def test_tdgl_explicit_scheme_bound():
    c0 = perturbed(normal_state(lattice_with_field(1j, 0.95, 1), 1.0, 12), 1e-2, seed=2)
    dt = explicit_stability_bound(c0)
    with pytest.raises(ValueError):
        tdgl_relax(c0, 2 * dt, 1.0, scheme="explicit")
    tr = tdgl_relax(c0, dt, 50 * dt, scheme="explicit")
    assert np.all(np.diff(tr.energies) <= 1e-12 * np.abs(tr.energies[:-1]))


def test_tdgl_fixed_point():
    bp = cached_bifurcation(TRI, 1.0, 0.95)
    tr = tdgl_relax(bp.cell, 1.0, 10.0, reference=bp.cell)
    assert np.max(tr.distances) < 1e-9


def test_invariant_distance_ignores_gauge_and_translation():
    c = cached_bifurcation(TRI, 1.0, 0.95).cell
    rng = np.random.default_rng(5)
    c2 = gauge_transform(c, rng.uniform(-3, 3, c.mesh.n_sites))
    assert invariant_distance(c, c2) < 1e-12
    shifted = c.copy(psi=np.roll(c.psi.reshape(c.N1, c.N2), 3, axis=0).ravel())
    assert abs(invariant_distance(shifted, c2) - invariant_distance(shifted, c)) < 1e-12
    assert invariant_distance(c, normal_state(c.lattice, 1.0, 32)) > 1e-3


def test_supercell_tiles_energy_and_solution():
    c = cached_bifurcation(TRI, 1.0, 0.95).cell
    big = supercell(c, 2, 2)
    assert big.flux_quanta == 4
    assert_allclose(cell_energy(big), 4 * cell_energy(c), rtol=1e-12)
    assert gl_residual(big) < 1e-8


def test_checkpoint_roundtrip(tmp_path):
    c = cached_bifurcation(TRI, 1.0, 0.95).cell
    path = tmp_path / "cell.bin"
    save_checkpoint(c, path)
    c2 = load_checkpoint(path)
    assert isinstance(c2, CellField)
    assert np.array_equal(c2.psi, c.psi)
    assert np.array_equal(c2.links, c.links)
    assert np.array_equal(c2.winding, c.winding)
    assert cell_energy(c2) == cell_energy(c)


def test_energy_scan_prefers_triangular():
    taus = [TRI, 1j, 0.3 + 1.1j, 1.3j]
    scan = energy_per_cell_scan(taus, 1.0, 0.97, N=24)
    rows = [r for r in scan.rows if r[4]]
    assert len(rows) == len(taus)
    assert abs(scan.minimizer - TRI) < 1e-12
    E = [r[1] for r in rows]
    beta = [beta_lattice_sum(t).beta for t in taus]
    assert np.array_equal(np.argsort(E), np.argsort(beta))


def test_energy_scan_preconditions():
    with pytest.raises(ValueError):
        energy_per_cell_scan([TRI], 0.5, 0.2)
    with pytest.raises(ValueError):
        energy_per_cell_scan([TRI], 1.0, 1.1)
