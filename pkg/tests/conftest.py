import functools
import math

import pytest

from glvortex import vortex

SELF_DUAL = 1 / math.sqrt(2)
TRI = complex(0.5, math.sqrt(3) / 2)


@functools.lru_cache(maxsize=None)
def cached_profile(n, kappa, N=800):
    return vortex.solve_profile(n, kappa, N=N)


@pytest.fixture(scope="session")
def profile():
    """Factory returning converged radial profiles, solved once per session."""
    return cached_profile


@functools.lru_cache(maxsize=None)
def cached_low_field(tau, kappa, b, spacing=0.15):
    from glvortex.cell import assemble_low_field_lattice

    return assemble_low_field_lattice(tau, kappa, b, spacing=spacing)


@functools.lru_cache(maxsize=None)
def cached_bifurcation(tau, kappa, b, N=32):
    from glvortex.cell import newton_solve_near_hc2

    return newton_solve_near_hc2(tau, kappa, b, N)


ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail, seconds = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  ({seconds:.1f} s)  {detail}")
