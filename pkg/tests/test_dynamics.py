import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import cached_profile
from glvortex.dynamics import (
    VortexConfig,
    calibrate,
    energy_density,
    glued_field,
    glued_values,
    integrate_gradient_law,
    integrate_second_order_law,
    interaction_energy,
    interaction_gradient,
    winding_number,
)
from glvortex.vortex import profile_energy


def pair(R, n=(1, 1), kappa=1.0, centre=0j, angle=0.0):
    u = cmath.exp(1j * angle) * R / 2
    return VortexConfig((centre - u, centre + u), n, kappa)


def test_single_vortex_density_integrates_to_profile_energy():
    cfg = VortexConfig((0j,), (1,), 1.0)
    h = 0.05
    x = np.arange(-14, 14 + h / 2, h)
    X, Y = np.meshgrid(x, x, indexing="ij")
    E = np.sum(energy_density(cfg, X + 1j * Y)) * h * h
    assert_allclose(E, profile_energy(cached_profile(1, 1.0)), rtol=1e-6)


def test_glued_field_winding_on_large_circle():
    cfg = VortexConfig((-4 + 1j, 3 - 2j, 1 + 5j), (1, 1, -1), 0.6)
    assert winding_number(cfg, 20.0) == 1
    assert winding_number(cfg, 1.0, centre=-4 + 1j) == 1
    assert winding_number(cfg, 1.0, centre=1 + 5j) == -1
    assert winding_number(cfg, 1.0, centre=10 + 10j) == 0


def test_glued_modulus_near_a_centre_matches_profile():
    cfg = pair(12.0)
    f = cached_profile(1, 1.0).interpolator()["f"]
    r = np.linspace(0.1, 2.0, 20)
    psi, _ = glued_values(cfg, 6.0 + r)
    assert np.max(np.abs(np.abs(psi) - f(r))) < 1e-4


def test_glued_field_grid():
    gf = glued_field(pair(8.0), N=64)
    assert gf.psi.shape == (64, 64)
    assert np.max(np.abs(gf.psi)) <= 1.0 + 1e-12


def test_glued_field_warns_on_small_window():
    with pytest.warns(RuntimeWarning):
        glued_field(pair(8.0), window=(-6, 6, -3, 3), N=16)


def test_interaction_vanishes_at_large_separation():
    assert abs(interaction_energy(pair(20.0))) < 1e-6


def test_like_vortices_repel_with_exponential_tail():
    Rs = np.arange(8.0, 12.5, 1.0)
    W = np.array([interaction_energy(pair(R)) for R in Rs])
    assert np.all(W > 0)
    assert np.all(np.diff(W) < 0)
    ratio = W / (np.exp(-Rs) / np.sqrt(Rs))
    assert np.max(ratio) / np.min(ratio) < 1.10


def test_opposite_vortices_attract():
    assert interaction_energy(pair(8.0, (1, -1))) < 0


def test_field_and_asymptotic_agree():
    for R in (8.0, 10.0, 12.0):
        cfg = pair(R)
        Wf = interaction_energy(cfg)
        Wa = interaction_energy(cfg, "asymptotic")
        assert abs(Wf - Wa) <= 0.15 * abs(Wa)


def test_calibration_constant():
    cal = calibrate(1.0)
    assert cal.R == 10.0
    assert_allclose(cal.C, cal.W_field / (2 * math.exp(-10) / math.sqrt(10)), rtol=1e-14)
    assert cal.C > 0


def test_single_vortex_has_no_interaction():
    assert interaction_energy(VortexConfig((0j,), (1,), 1.0)) == 0.0


@settings(max_examples=4, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0, 2 * math.pi))
def test_interaction_rigid_motion_invariance(dx, dy, angle):
    h = 0.1
    base = pair(9.0)
    W0 = interaction_energy(base, spacing=h)
    moved = pair(9.0, centre=complex(dx, dy), angle=angle)
    # a rigid motion only changes where the quadrature nodes fall
    assert abs(interaction_energy(moved, spacing=h) - W0) < 1e-3 * abs(W0)
    # an exactly shifted window reproduces the grid
    win = (-21.0, 21.0, -12.0, 12.0)
    sh = pair(9.0, centre=complex(round(dx), round(dy)))
    swin = (win[0] + round(dx), win[1] + round(dx), win[2] + round(dy), win[3] + round(dy))
    assert_allclose(interaction_energy(sh, window=swin, spacing=h), interaction_energy(base, window=win, spacing=h),
                    rtol=1e-9)


def test_asymptotic_requires_validity_floor():
    with pytest.raises(ValueError):
        interaction_energy(pair(3.0), "asymptotic")
    with pytest.raises(ValueError):
        interaction_energy(pair(8.0), "nonsense")


def test_interaction_gradient_matches_finite_differences():
    cfg = VortexConfig((0j, 7 + 1j, 3 - 6j), (1, 1, -1), 1.0)
    g = interaction_gradient(cfg)
    h = 1e-6
    for j in range(3):
        for d in (1, 1j):
            zp, zm = cfg.z.copy(), cfg.z.copy()
            zp[j] += h * d
            zm[j] -= h * d
            fd = (interaction_energy(cfg.moved(zp), "asymptotic") - interaction_energy(cfg.moved(zm), "asymptotic")) / (2 * h)
            assert abs(fd - (g[j].conjugate() * d).real) < 1e-8


def test_gradient_law_repulsive_pair():
    tr = integrate_gradient_law(pair(8.0), 500.0, 5.0)
    assert not tr.halted
    assert np.all(np.diff(tr.separation) > 0)
    assert np.all(np.diff(tr.W) <= 1e-15)
    com = tr.centers.mean(axis=1)
    assert np.max(np.abs(com)) < 1e-10
    # motion stays along the axis
    assert np.max(np.abs(tr.centers.imag)) < 1e-12


def test_gradient_law_attractive_pair_halts():
    tr = integrate_gradient_law(pair(8.0, (1, -1)), 2000.0, 5.0)
    assert tr.halted
    assert "floor" in tr.reason
    assert_allclose(tr.separation[-1], 4.0, atol=1e-6)
    assert np.all(np.diff(tr.separation) < 0)


def test_leapfrog_conserves_energy_and_is_reversible():
    cfg = pair(8.0)
    v0 = np.array([0.02j, -0.02j])
    tr = integrate_second_order_law(cfg, v0, 200.0, 0.1)
    E = tr.reduced_energy
    assert np.max(np.abs(E - E[0])) / 200.0 < 1e-6
    back = integrate_second_order_law(cfg.moved(tr.centers[-1]), -tr.velocities[-1], 200.0, 0.1)
    assert np.max(np.abs(back.centers[-1] - cfg.z)) < 1e-8


def test_motion_preconditions():
    with pytest.raises(ValueError):
        VortexConfig((0j, 10 + 0j), (2, 1), 1.0)
    with pytest.raises(ValueError):
        VortexConfig((0j, 0j), (1, 1), 0.5)
    with pytest.raises(ValueError):
        integrate_gradient_law(pair(5.0), 10.0, 1.0)
    with pytest.raises(ValueError):
        integrate_gradient_law(VortexConfig((0j,), (1,), 1.0), 10.0, 1.0)
    with pytest.raises(ValueError):
        integrate_second_order_law(pair(8.0), [0j], 10.0, 1.0)
    # two-quantum vortices are admissible in type I
    VortexConfig((0j, 10 + 0j), (2, 1), 0.5)


def test_motion_trace_rows_and_roundtrip():
    cfg = pair(8.0)
    tr = integrate_gradient_law(cfg, 10.0, 1.0)
    rows = tr.to_rows()
    assert len(rows) == 11
    assert len(rows[0]) == 1 + 2 * 2 + 2
    assert rows[0][1:5] == (-4.0, 0.0, 4.0, 0.0)
    assert VortexConfig.from_dict(cfg.to_dict()) == cfg
