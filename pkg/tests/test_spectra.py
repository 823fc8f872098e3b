import math
import warnings

import numpy as np
import pytest
from scipy.integrate import trapezoid

from pentasense.errors import InvalidInputError
from pentasense.fitting import count_extremum_pairs, smooth_derivative
from pentasense.hamiltonian import FieldVector, ZfsParams
from pentasense.kinetics import RateParams
from pentasense.spectra import (
    HyperfineSet,
    LineshapeConfig,
    ProtocolAConfig,
    ProtocolBConfig,
    broadened_width,
    chopped_fluorescence,
    contrast_vs_power,
    cw_spectrum,
    depth_for_variation,
    hyperfine_profile,
    hyperfine_sticks,
    line_contrast,
    lockin_demodulate,
    lorentzian,
    pattern_skewness,
    peak_positions,
    polarization_modulation,
    protocol_A_map,
    protocol_B_map,
    relative_variation,
    square_reference,
)

HF = HyperfineSet((0.7, 1.6, 3.1))


def test_broadened_width():
    assert broadened_width(1.9, 6.58, 0.25) == pytest.approx(1.9 + 3.29)


def test_lorentzian_fwhm_and_area():
    assert lorentzian([1.0], 2.0)[0] == pytest.approx(0.5)
    x = np.linspace(-2000, 2000, 400001)
    assert trapezoid(lorentzian(x, 2.0, "area"), x) == pytest.approx(1, abs=1e-3)


def test_lorentzian_max_slope_location():
    # Max |dL/dx| of a unit-peak Lorentzian with FWHM l is 3 sqrt(3) / (4 l) at l / (2 sqrt(3)).
    ell = 1.9
    x = np.linspace(-5, 5, 200001)
    d = np.gradient(lorentzian(x, ell), x)
    i = np.argmax(np.abs(d))
    assert abs(x[i]) == pytest.approx(ell / (2 * math.sqrt(3)), abs=1e-3)
    assert abs(d[i]) == pytest.approx(3 * math.sqrt(3) / (4 * ell), rel=1e-4)


def test_hyperfine_sticks_weights():
    pos, wt = hyperfine_sticks(HF, "signed_linear")
    assert wt.sum() == pytest.approx(1)
    assert pos.size == 27
    assert pattern_skewness(HF, "signed_linear") == pytest.approx(0, abs=1e-12)
    assert pattern_skewness(HF, "one_sided_quadratic") > 0.5


def test_profile_normalisation():
    x = np.linspace(-20, 30, 50001)
    y = hyperfine_profile(x, HF, 0.5)
    assert y.max() == pytest.approx(1, abs=1e-4)
    a = hyperfine_profile(np.linspace(-3000, 3000, 600001), HF, 0.5, normalize="area")
    assert trapezoid(a, dx=0.01) == pytest.approx(1, abs=1e-3)


def test_narrow_lines_resolve_hyperfine_structure():
    f = np.arange(-10, 15, 0.01)
    y = hyperfine_profile(f, HF, 0.3)
    assert count_extremum_pairs(smooth_derivative(f, y, 11, 3)) >= 3


def test_cw_contrast_signs():
    r = RateParams()
    c = {lab: line_contrast(r, 1.19e6, lab) for lab in ("Txy", "Txz", "Tyz")}
    assert np.sign(c["Txy"]) == np.sign(c["Txz"]) != np.sign(c["Tyz"])


def test_cw_spectrum_peaks_near_transitions():
    f = np.arange(50, 1550, 0.25)
    spec = cw_spectrum(ZfsParams(), FieldVector(), RateParams(), 1.19e6, LineshapeConfig(), HF, f)
    peaks = peak_positions(spec, [106, 1339, 1445], 10)
    assert np.allclose(peaks, [106, 1339, 1445], atol=5)
    assert spec.status == "ok"


def test_cw_spectrum_outside_grid_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        spec = cw_spectrum(ZfsParams(), FieldVector(), RateParams(), 1e6, LineshapeConfig(), HF, np.arange(2000, 2100.0))
    assert spec.status == "no_transition_in_grid"
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


def test_saturation_and_polarisation_curves():
    assert contrast_vs_power([0.3], 1.0, 0.3)[0] == pytest.approx(0.5)
    m = depth_for_variation(0.27)
    y = polarization_modulation(np.arange(0, 360, 1), m)
    assert relative_variation(y) == pytest.approx(0.27, rel=1e-6)


def test_lockin_recovers_half_amplitude():
    t = np.arange(0, 20 / 1.8e3, 1e-6)
    s = 3.0 * (square_reference(t, 1.8e3) > 0) + 0.7
    assert lockin_demodulate(t, s) == pytest.approx(1.5, rel=1e-3)


def test_lockin_sign_follows_cw_contrast():
    r = RateParams()
    t, e = chopped_fluorescence(r, 1.19e6, "Tyz", n_periods=4, settle_periods=2)
    assert np.sign(lockin_demodulate(t, e)) == np.sign(line_contrast(r, 1.19e6, "Tyz"))


def test_protocol_maps():
    r = RateParams()
    a = protocol_A_map(ProtocolAConfig(tau_p=tuple(np.logspace(-7, -3, 25))), r)
    assert np.all(np.diff(a.optimum) <= 0)
    b = protocol_B_map(ProtocolBConfig(), r)
    assert abs(b.peak[-1]) == pytest.approx(0.168, abs=2e-3)
    assert np.all(np.diff(np.abs(b.peak)) > 0)


def test_invalid():
    with pytest.raises(InvalidInputError):
        LineshapeConfig(model="gauss")
    with pytest.raises(InvalidInputError):
        HyperfineSet((-1.0,))
    with pytest.raises(InvalidInputError):
        ProtocolAConfig(powers=())


def test_empty_hyperfine_is_plain_lorentzian():
    x = np.linspace(-10, 10, 2001)
    assert np.allclose(hyperfine_profile(x, HyperfineSet(()), 1.5), lorentzian(x, 1.5), atol=1e-6)


def test_one_pair_signed_linear_enumeration():
    # Two spin-1/2 protons: m1 + m2 over four equally likely states.
    A = 2.0
    states = [(a + b) * A for a in (-0.5, 0.5) for b in (-0.5, 0.5)]
    pos, counts = np.unique(states, return_counts=True)
    got_pos, got_w = hyperfine_sticks(HyperfineSet((A,)), "signed_linear")
    assert np.allclose(got_pos, pos)
    assert np.allclose(got_w, counts / 4)
