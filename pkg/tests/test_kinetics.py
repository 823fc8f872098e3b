import numpy as np
import pytest
from scipy.integrate import solve_ivp

from pentasense.errors import InvalidInputError
from pentasense.kinetics import (
    MicrowaveDrive,
    RateParams,
    emission_weights,
    evolve_populations,
    ground_state,
    integrated_emission,
    load_profile_rates,
    propagate,
    rate_matrix,
    steady_state,
    swap_populations,
)


def test_generator_columns_sum_to_zero():
    G = rate_matrix(RateParams(), 1e6, MicrowaveDrive("Txz"))
    assert np.allclose(G.sum(axis=0), 0)
    assert np.all(G - np.diag(np.diag(G)) >= 0)


def test_against_ode_integration():
    r = RateParams()
    G = rate_matrix(r, 1e9)
    sol = solve_ivp(lambda t, y: G @ y, (0, 65e-9), ground_state(), method="Radau", rtol=1e-10, atol=1e-13)
    N = evolve_populations(ground_state(), [(65e-9, 1e9)], r)
    assert np.allclose(N, sol.y[:, -1], atol=1e-8)


def test_single_decay_channel_e_folding():
    # Only Tx with decay 1e4: after 100 us, exp(-1) remains.
    r = RateParams(decay=(1e4, 0, 0), spin_lattice=(0, 0, 0))
    N = evolve_populations([0, 0, 1, 0, 0], [(1e-4, 0.0)], r)
    assert N[2] == pytest.approx(np.exp(-1), rel=1e-12)
    assert N[0] == pytest.approx(1 - np.exp(-1), rel=1e-12)


def test_trajectory_sampling_matches_endpoint():
    r = RateParams()
    traj = propagate(ground_state(), [(65e-9, 1e9), (1e-6, 0)], r, 1e-8)
    end = evolve_populations(ground_state(), [(65e-9, 1e9), (1e-6, 0)], r)
    assert traj.t[-1] == pytest.approx(1.065e-6)
    assert np.allclose(traj.final, end, atol=1e-12)
    assert np.all(np.abs(traj.populations.sum(axis=1) - 1) < 1e-12)


def test_emission_weights_match_quadrature():
    r = RateParams()
    N = evolve_populations(ground_state(), [(65e-9, 1e9)], r)
    window = 20e-6
    G = rate_matrix(r, 2e5)
    c = (1 - r.phi_isc) * r.k21_total

    def rhs(t, y):
        return np.append(G @ y[:5], c * y[1])

    sol = solve_ivp(rhs, (0, window), np.append(N, 0.0), method="Radau", rtol=1e-10, atol=1e-14)
    assert integrated_emission(N, r, 2e5, window) == pytest.approx(sol.y[5, -1], rel=1e-6)
    assert np.all(emission_weights(r, 2e5, 0.0) == 0)


def test_steady_state_is_null_vector():
    r = RateParams()
    ss = steady_state(r, 1e4)
    G = rate_matrix(r, 1e4)
    assert np.max(np.abs(G @ ss)) <= 1e-12 * np.max(np.abs(G))
    assert ss.sum() == pytest.approx(1)


def test_swap():
    N = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
    assert np.allclose(swap_populations(N, "Tyz"), [0.1, 0.2, 0.3, 0.15, 0.25])


def test_profile_rates_are_defaults():
    assert load_profile_rates() == RateParams()


@pytest.mark.parametrize("kw", [dict(phi_isc=1.5), dict(branching=(0.5, 0.5, 0.5)), dict(decay=(-1, 0, 0))])
def test_invalid_rates(kw):
    with pytest.raises(InvalidInputError):
        RateParams(**kw)


def test_invalid_populations():
    with pytest.raises(InvalidInputError):
        propagate([0.5, 0.5, 0.5, 0, 0], [(1e-6, 0)], RateParams(), 1e-7)
    with pytest.raises(InvalidInputError):
        propagate(ground_state(), [(-1e-6, 0)], RateParams(), 1e-7)
