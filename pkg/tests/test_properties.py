"""Invariants checked over randomised inputs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from pentasense.coherent import (
    ControlPulse,
    Delay,
    NoiseModel,
    NOISELESS,
    ProtocolParams,
    evolve_ensemble,
    populations_to_rho,
    run_protocol,
)
from pentasense.fitting import FitModel, fit
from pentasense.hamiltonian import FieldVector, Orientation, ZfsParams, transition_frequencies
from pentasense.kinetics import MicrowaveDrive, RateParams, evolve_populations, ground_state, propagate

rate = st.floats(0.0, 1e6)
small = settings(max_examples=30, deadline=None)


@st.composite
def rate_params(draw):
    b = np.array([draw(st.floats(0.01, 1.0)) for _ in range(3)])
    return RateParams(
        k21_total=draw(st.floats(1e6, 1e9)),
        phi_isc=draw(st.floats(0.0, 1.0)),
        branching=tuple(b / b.sum()),
        decay=tuple(draw(rate) for _ in range(3)),
        spin_lattice=tuple(draw(rate) for _ in range(3)),
    )


@small
@given(rate_params(), st.floats(0.0, 1e10), st.floats(1e-9, 1e-3), st.booleans())
def test_population_conservation(r, k12, t, mw):
    drive = MicrowaveDrive("Tyz") if mw else None
    N = evolve_populations(ground_state(), [(t, k12, drive), (t, 0.0)], r)
    assert abs(N.sum() - 1) <= 1e-9
    assert N.min() >= -1e-9
    traj = propagate(ground_state(), [(t, k12)], r, t / 7)
    assert np.max(np.abs(traj.populations.sum(axis=1) - 1)) <= 1e-9


@st.composite
def sequences(draw):
    label = draw(st.sampled_from(["Txy", "Txz", "Tyz"]))
    seq = []
    for _ in range(draw(st.integers(1, 6))):
        if draw(st.booleans()):
            seq.append(ControlPulse(label, draw(st.floats(0.1, 30.0)), draw(st.floats(0, 200e-9)),
                                    draw(st.floats(0, 2 * math.pi)), draw(st.floats(-5, 5))))
        else:
            seq.append(Delay(draw(st.floats(0, 5e-6))))
    return seq


noise_models = st.builds(
    NoiseModel,
    static_width=st.floats(0, 2),
    static_shape=st.sampled_from(["gaussian", "lorentzian"]),
    ou_amplitude=st.floats(0, 1),
    ou_correlation_time=st.floats(1e-8, 1e-4),
    dephasing_rate=st.floats(0, 1e6),
    drive_spread=st.floats(0, 0.3),
)


@small
@given(sequences(), noise_models, st.integers(0, 2**32 - 1))
def test_density_matrix_stays_physical(seq, noise, seed):
    rho0 = populations_to_rho(0.6, 0.1, 0.05)
    rho = evolve_ensemble(rho0, seq, RateParams(), noise, seed, 16)
    assert np.max(np.abs(rho - np.conj(np.swapaxes(rho, 1, 2)))) <= 1e-12
    assert np.linalg.eigvalsh(rho).min() >= -1e-9
    tr = np.trace(rho, axis1=1, axis2=2).real
    assert np.all(tr <= 0.75 + 1e-9)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.05, 0.5), st.integers(0, 1000))
def test_echo_insensitive_to_static_width(width, seed):
    p = ProtocolParams(n_ensemble=200)
    x = [1e-6, 3e-6]
    ref = run_protocol("hahn_echo", x, RateParams(), NOISELESS, p, seed=seed).contrast
    got = run_protocol("hahn_echo", x, RateParams(), NoiseModel(static_width=width), p, seed=seed).contrast
    assert np.all(np.abs(got - ref) <= 0.01 * np.abs(ref))


euler = st.tuples(*(st.floats(0, 2 * math.pi) for _ in range(3)))
fields = st.tuples(*(st.floats(-20, 20) for _ in range(3)))


@pytest.mark.filterwarnings("ignore:Gimbal lock")
@small
@given(euler, euler, fields)
def test_transition_frequencies_frame_invariant(site, lab_turn, b):
    zfs = ZfsParams(1392, -53)
    R = Orientation(*site).rotation()
    Q = Rotation.from_euler("ZYZ", lab_turn)
    f1 = transition_frequencies(zfs, FieldVector(*b), Orientation.from_rotation(R))
    f2 = transition_frequencies(zfs, FieldVector(*Q.apply(b)), Orientation.from_rotation(Q * R))
    f3 = transition_frequencies(zfs, FieldVector(*R.inv().apply(b)))
    assert np.allclose(sorted(f1.values()), sorted(f2.values()), atol=1e-8)
    assert np.allclose(sorted(f1.values()), sorted(f3.values()), atol=1e-8)


CASES = {
    "mono_exponential": ([0.8, 12.0, 0.1], np.linspace(0, 60, 40)),
    "stretched_exponential": ([1.2, 3.0, 1.7, -0.05], np.linspace(0, 12, 40)),
    "decaying_sinusoid": ([0.4, 1.3, 4.0, 0.6, 0.2], np.linspace(0, 8, 160)),
    "sqrt_saturation": ([1.9, 6.58], np.geomspace(1e-3, 0.6, 12)),
    "hyperbolic_saturation": ([0.2, 0.35], np.linspace(0.01, 2, 30)),
}


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(sorted(CASES)), st.floats(0.9, 1.1))
def test_fit_round_trip_noiseless(kind, scale):
    true, x = CASES[kind]
    true = np.array(true) * scale
    y = FitModel(kind, true)(x)
    res = fit(FitModel(kind, true * 1.05), x, y)
    assert res.converged
    assert np.allclose(res.params, true, rtol=1e-4, atol=1e-8)
