import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import k1

from glvortex import vortex
from glvortex.vortex import (
    bogomolnyi_excess,
    critical_fields,
    decay_rate,
    discrete_energy,
    energy_gradient,
    fiber_minimum,
    fiber_operator,
    field_bessel_ratio,
    fit_decay_rate,
    profile_energy,
    profile_field,
    solve_profile,
    stability_report,
    total_flux,
    zero_mode_residual,
)

SELF_DUAL = 1 / math.sqrt(2)


def test_decay_rate_law():
    assert decay_rate(1.0) == pytest.approx(math.sqrt(2))
    assert decay_rate(2.0) == 2.0
    assert decay_rate(SELF_DUAL) == pytest.approx(1.0)


def test_self_dual_energy_single(profile):
    assert_allclose(profile_energy(profile(1, SELF_DUAL)), math.pi, rtol=5e-3)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_bogomolnyi_saturation(profile, n):
    p = profile(n, SELF_DUAL)
    E = profile_energy(p)
    assert_allclose(E, math.pi * n, rtol=1e-2)
    # saturated up to quadrature round-off, never meaningfully below
    assert E - math.pi * n >= -1e-12 * math.pi * n
    assert bogomolnyi_excess(p) >= 0.0
    assert bogomolnyi_excess(p) < 1e-8


@pytest.mark.parametrize("n,kappa", [(1, 1.0), (2, 0.5), (3, SELF_DUAL), (1, 2.0)])
def test_flux_quantized(profile, n, kappa):
    assert_allclose(total_flux(profile(n, kappa)), 2 * math.pi * n, rtol=1e-3)


@pytest.mark.parametrize("n,kappa", [(1, 1.0), (2, 0.5), (2, 1.0)])
def test_profile_shape(profile, n, kappa):
    p = profile(n, kappa)
    assert np.all(p.f >= 0) and np.all(p.f <= 1 + 1e-6)
    assert np.all(np.diff(p.f) > -1e-10)
    small = (p.r > 0) & (p.r < 0.05)
    assert np.all(p.f[small] / p.r[small] ** n < 2.0)
    assert np.all(p.a[small] / p.r[small] ** 2 < 2.0)
    assert p.residual < 1e-8


def test_two_vortex_costs_more_than_two_singles(profile):
    assert profile_energy(profile(2, 1.0)) > 2 * profile_energy(profile(1, 1.0))


def test_type_one_binds(profile):
    assert profile_energy(profile(2, 0.5)) < 2 * profile_energy(profile(1, 0.5))


@pytest.mark.parametrize("kappa", [0.6, 1.0, 2.0])
def test_core_decay_rate(profile, kappa):
    assert_allclose(fit_decay_rate(profile(1, kappa)), decay_rate(kappa), rtol=0.05)


def test_field_tail_is_bessel(profile):
    p = profile(1, 1.0)
    ratio = field_bessel_ratio(p, 8.0, 12.0)
    assert np.max(ratio) / np.min(ratio) < 1.05
    B, J = profile_field(p)
    r = np.linspace(8, 12, 5)
    ip = p.interpolator()
    assert_allclose(p.n * ip["ap"](r) / r / k1(r), np.mean(ratio), rtol=0.05)


def test_current_decays_exponentially(profile):
    p = profile(1, 1.0)
    _, J = profile_field(p)
    j8 = np.max(np.abs(J[(p.r > 7.5) & (p.r < 8.5)]))
    j12 = np.max(np.abs(J[(p.r > 11.5) & (p.r < 12.5)]))
    assert j12 < 1e-4
    assert j12 < j8 * math.exp(-3.0)


def test_field_finite_at_origin(profile):
    B, J = profile_field(profile(1, 1.0))
    assert np.all(np.isfinite(B)) and np.all(np.isfinite(J))


def test_discrete_euler_lagrange_consistency(profile):
    p = profile(1, 1.0)
    N, R = p.N, p.R_max
    x = np.concatenate([p.f[:-1], _w(p)[:-1]])
    grad, _ = energy_gradient(x, 1, 1.0, N, R)
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(20):
        v = rng.standard_normal(x.size)
        v /= np.linalg.norm(v)
        fd = (discrete_energy(x + h * v, 1, 1.0, N, R) - discrete_energy(x - h * v, 1, 1.0, N, R)) / (2 * h)
        assert abs(fd - grad @ v) < 1e-6
        assert abs(grad @ v) < 1e-6


def _w(p):
    # a = r w; recover w at the nodes from the interpolant away from r = 0
    ip = p.interpolator()
    r = p.r.copy()
    w = np.empty_like(r)
    pos = r > 0
    w[pos] = p.a[pos] / r[pos]
    w[~pos] = ip["ap"](np.array([0.0]))[0]
    return w


def test_hessian_matches_gradient_differences():
    N, R = 400, 20.0
    rng = np.random.default_rng(1)
    p = solve_profile(1, 1.0, R, N)
    x = np.concatenate([p.f[:-1], _w(p)[:-1]]) + 1e-3 * rng.standard_normal(2 * N - 2)
    g0, H = energy_gradient(x, 1, 1.0, N, R)
    v = rng.standard_normal(x.size)
    h = 1e-6
    g1, _ = energy_gradient(x + h * v, 1, 1.0, N, R)
    g2, _ = energy_gradient(x - h * v, 1, 1.0, N, R)
    assert_allclose((g1 - g2) / (2 * h), H @ v, atol=1e-6 * np.max(np.abs(H @ v)))


def test_critical_fields_self_dual():
    cf = critical_fields(SELF_DUAL)
    assert_allclose(cf.h_c1, 0.5, rtol=1e-6)
    assert_allclose(cf.h_c2, 0.5, rtol=1e-12)


def test_critical_fields_type_two_and_one():
    assert critical_fields(2.0).h_c1 < 4.0
    cf = critical_fields(0.5)
    assert cf.h_c1 > cf.h_c2


def test_translation_zero_mode(profile):
    assert zero_mode_residual(profile(1, 1.0)) < 1e-4


def test_gauge_mode_fiber_positive(profile):
    assert fiber_minimum(profile(1, 1.0), 0) > 0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_fiber_flip_symmetry(profile, m):
    p = profile(2, 1.0)
    va, _ = fiber_operator(p, m).lowest(6)
    vb, _ = fiber_operator(p, -m).lowest(6)
    assert_allclose(va, vb, atol=1e-8)


def test_stability_single_vortex_type_two():
    rep = stability_report(1, 1.0)
    assert rep.verdict == "stable"
    assert all(v >= -1e-4 for v in rep.per_m.values())


def test_stability_double_vortex_type_two():
    rep = stability_report(2, 1.0)
    assert rep.verdict == "unstable"
    assert rep.lowest_eigenvalue < -1e-3


def test_stability_double_vortex_type_one():
    assert stability_report(2, 0.5).verdict == "stable"


def test_double_vortex_extra_mode_changes_sign():
    below = fiber_minimum(solve_profile(2, 0.65), 2)
    above = fiber_minimum(solve_profile(2, 0.8), 2)
    assert below > 0 > above


def test_fiber_index_bounded(profile):
    with pytest.raises(ValueError):
        fiber_operator(profile(1, 1.0), 9)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=0, kappa=1.0), dict(n=1, kappa=-1.0), dict(n=1, kappa=1.0, N=200), dict(n=1, kappa=1.0, R_max=5.0),
     dict(n=1, kappa=1.0, N=804)],
)
def test_solver_preconditions(kwargs):
    with pytest.raises(ValueError):
        solve_profile(**kwargs)


def test_interpolator_matches_nodes(profile):
    p = profile(1, 1.0)
    ip = p.interpolator()
    assert_allclose(ip["f"](p.r), p.f, atol=1e-12)
    assert_allclose(ip["a"](p.r), p.a, atol=1e-12)
    assert ip["f"](np.array([p.R_max + 5.0]))[0] == pytest.approx(1.0)


def test_profile_rows():
    p = solve_profile(1, 1.0, N=400)
    rows = p.to_rows()
    assert len(rows) == p.N and len(rows[0]) == 5
    assert vortex.energy_tail_estimate(p) < 1e-10


def test_symbolic_radial_derivation():
    pytest.importorskip("sympy")
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).parent.parent / "docs" / "derive_radial.py"
    r = subprocess.run([sys.executable, str(script)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
