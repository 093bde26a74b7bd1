import cmath
import math
import warnings

import numpy as np
import pytest

from qst_exchange.analytic import fidelity, overlap_integral
from qst_exchange.core import DeviceParams, SpinState, ValidationError
from qst_exchange.timedomain import (
    ContinuumModel,
    NarrowBandWarning,
    discretize_continuum,
    evolve,
    fidelity_timedomain,
    initial_state,
    max_stable_dt,
    rho_at,
)

SMALL = DeviceParams(omega_e=0.2, omega_1=0.1, omega_2=-0.05, omega_j=0.3, delta=0.8, gamma_h=0.8)


@pytest.fixture(scope="module")
def small_continuum():
    return discretize_continuum(SMALL, bandwidth=10.0, levels=101)


@pytest.fixture(scope="module")
def baseline_run():
    p = DeviceParams(omega_j=0.04, delta=0.8, gamma_h=0.8)
    return p, fidelity_timedomain(p, SpinState.up())


def test_continuum_construction():
    c = discretize_continuum(DeviceParams(gamma_h=0.8), bandwidth=40.0, levels=4001)
    assert c.spacing == pytest.approx(0.01)
    assert c.coupling == pytest.approx(math.sqrt(0.8 * 0.01 / math.pi))
    assert c.coupling == pytest.approx(0.0505, abs=5e-5)
    assert abs(c.spectral_density() - 0.8) < 1e-12
    assert c.levels[2000] == 0.0 and c.levels[0] == pytest.approx(-20.0) and c.levels[-1] == pytest.approx(20.0)
    assert c.recurrence_time == pytest.approx(2 * math.pi / 0.01)
    assert not c.narrow_band


def test_continuum_rejects_even_grid():
    with pytest.raises(ValidationError):
        discretize_continuum(DeviceParams(), 40.0, 4000)
    with pytest.raises(ValidationError):
        discretize_continuum(DeviceParams(), -1.0, 11)


def test_narrow_band_flagged():
    with pytest.warns(NarrowBandWarning):
        c = discretize_continuum(DeviceParams(gamma_h=0.8), bandwidth=1.0, levels=101)
    assert c.narrow_band


def test_initial_rho_is_pure_up():
    red = rho_at(initial_state(SpinState.up(), 11))
    np.testing.assert_allclose(red.rho.rho, 0.5 * np.ones((2, 2)), atol=1e-15)
    assert red.dot_population == pytest.approx(1.0)


def test_decoupled_dot_keeps_population():
    p = DeviceParams(omega_j=0.0, delta=1e-6, gamma_h=0.8)
    c = discretize_continuum(p, 10.0, 101)
    state = evolve(p, c, SpinState.up(), 1.0)
    assert np.all(np.abs(state.phi1) ** 2 >= 0.5 * (1 - 1e-9))


def test_rabi_flopping_without_continuum():
    p = DeviceParams(omega_j=0.0, delta=0.8, gamma_h=0.8)
    closed = ContinuumModel(levels=np.zeros(3), coupling=0.0, center=0.0, bandwidth=1.0)
    quarter = math.pi / (2 * 0.8)
    state = evolve(p, closed, SpinState(1, 0), quarter, dt=1e-3)
    assert abs(state.phi1[0]) ** 2 < 1e-10
    assert abs(state.phi2[0]) ** 2 == pytest.approx(1.0, abs=1e-10)
    full = evolve(p, closed, SpinState(1, 0), 2 * quarter, dt=1e-3)
    assert abs(full.phi1[0]) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_refuses_beyond_recurrence(small_continuum):
    with pytest.raises(ValidationError, match="recurrence"):
        evolve(SMALL, small_continuum, SpinState.up(), small_continuum.max_time * 1.01)


def test_refuses_oversized_step(small_continuum):
    with pytest.raises(ValidationError, match="stable step"):
        evolve(SMALL, small_continuum, SpinState.up(), 1.0, dt=2 * max_stable_dt(SMALL, small_continuum))


def test_branches_evolve_independently(small_continuum):
    spin = SpinState.normalized(0.6, 0.8j)
    a = evolve(SMALL, small_continuum, spin, 5.0)
    b = evolve(SMALL, small_continuum, spin, 5.0, joint=True)
    assert np.max(np.abs(a.as_vector() - b.as_vector())) < 1e-14


def test_norm_conserved(small_continuum):
    state = evolve(SMALL, small_continuum, SpinState.up(), 20.0)
    assert abs(state.norm - 1) < 1e-8 * 20.0
    assert rho_at(state).rho.trace == pytest.approx(1.0, abs=1e-8 * 20.0)


def test_omega_e_shift_leaves_rho_unchanged(small_continuum):
    spin = SpinState.normalized(0.6, 0.8j)
    shifted = SMALL.replace(omega_e=SMALL.omega_e + 1.0)
    a = rho_at(evolve(SMALL, small_continuum, spin, 5.0, joint=True)).rho.rho
    b = rho_at(evolve(shifted, small_continuum, spin, 5.0, joint=True)).rho.rho
    assert np.max(np.abs(a - b)) < 1e-12


def test_delta_phase_is_a_gauge(small_continuum):
    spin = SpinState.normalized(0.6, 0.8j)
    rotated = SMALL.replace(delta=SMALL.delta * cmath.exp(0.9j))
    a = rho_at(evolve(SMALL, small_continuum, spin, 5.0)).rho.rho
    b = rho_at(evolve(rotated, small_continuum, spin, 5.0)).rho.rho
    assert np.max(np.abs(a - b)) < 1e-12


def test_fourth_order_convergence(small_continuum):
    spin = SpinState.up()
    dt = max_stable_dt(SMALL, small_continuum)
    ref = evolve(SMALL, small_continuum, spin, 10.0, dt / 8).as_vector()
    err = [np.linalg.norm(evolve(SMALL, small_continuum, spin, 10.0, dt / k).as_vector() - ref) for k in (1, 2)]
    assert err[0] / err[1] == pytest.approx(16, abs=3)


def test_trivial_limits_time_domain():
    p = DeviceParams(omega_j=0.0, delta=0.8, gamma_h=0.8)
    c = discretize_continuum(p, 10.0, 201)
    assert fidelity_timedomain(p, SpinState.up(), c, 20.0).fidelity == pytest.approx(1.0, abs=1e-6)
    q = p.replace(omega_j=0.3)
    assert fidelity_timedomain(q, SpinState(1, 0), c, 20.0).fidelity == pytest.approx(1.0, abs=1e-6)


def test_baseline_point_decays(baseline_run):
    _, res = baseline_run
    assert res.t_final == pytest.approx(40 / 0.8)
    assert res.dot_population < 1e-4
    assert res.norm_drift < 1e-8 * res.t_final


def test_baseline_point_matches_analytic(baseline_run):
    p, res = baseline_run
    i_pm = overlap_integral(1, -1, p)
    assert abs(res.rho[0, 1].real - i_pm.real / 2) < 2e-3
    assert abs(res.fidelity - fidelity(p, SpinState.up())) < 2e-3
    assert abs(res.fidelity - 0.996) < 2e-3
    assert abs(res.fidelity - res.fidelity_escaped) <= res.dot_population + 1e-12


def test_default_continuum_quietly_built():
    p = DeviceParams(omega_j=0.0, delta=0.8, gamma_h=8.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = fidelity_timedomain(p, SpinState.up(), t_final=0.5)
    assert 0 < res.fidelity <= 1


@pytest.mark.slow
def test_band_truncation_error_halves_with_bandwidth():
    # same level spacing, twice the band: the residual gap to the analytic
    # result is set by the finite band edges and shrinks like 1/bandwidth
    p = DeviceParams(omega_j=0.4, delta=0.8, gamma_h=0.8)
    exact = fidelity(p, SpinState.up())
    gaps = []
    for bandwidth, levels in ((40.0, 4001), (80.0, 8001)):
        c = discretize_continuum(p, bandwidth, levels)
        gaps.append(abs(fidelity_timedomain(p, SpinState.up(), c, 40 / 0.8).fidelity - exact))
    assert gaps[0] > 2e-3
    assert gaps[0] / gaps[1] == pytest.approx(2.0, abs=0.2)
