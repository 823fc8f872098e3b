import math

import numpy as np
import pytest

from pentasense.errors import InvalidInputError, NumericError
from pentasense.sensitivity import (
    DcSensitivityInput,
    PulsedSensitivityInput,
    eta_dc,
    eta_pulsed,
    optimal_coherence_time,
    pulsed_report,
    report_csv,
    spectral_slope,
    volume_normalize,
)
from pentasense.spectra import lorentzian


def _eta_oracle(T, t_i=400e-6, t_r=110e-6, C=0.117, rate=1.9e12):
    hbar_over_gmu = 1 / (2 * math.pi * 28e9)  # s T
    return 8 / (3 * math.sqrt(3)) * hbar_over_gmu * math.sqrt(t_i + T + t_r) / (C * math.sqrt(rate * t_r) * T)


@pytest.mark.parametrize("T", [487e-9, 2.7e-6, 18.4e-6, 510e-6])
def test_eta_pulsed_matches_oracle(T):
    assert eta_pulsed(PulsedSensitivityInput(400e-6, 110e-6, T, 0.117, 1.9e12)) == pytest.approx(_eta_oracle(T), rel=1e-12)


def test_eta_monotone_without_decay():
    ts = np.geomspace(1e-8, 1e-1, 200)
    eta = [eta_pulsed(PulsedSensitivityInput(400e-6, 110e-6, t, 0.117, 1.9e12)) for t in ts]
    assert np.all(np.diff(eta) < 0)


@pytest.mark.parametrize("t2,stretch", [(18.4e-6, 1.0), (2.7e-6, 1.7), (1e-3, 1.0)])
def test_optimum_with_decay(t2, stretch):
    ts = np.geomspace(1e-3 * t2, 10 * t2, 100001)
    log_eta = [
        math.log(eta_pulsed(PulsedSensitivityInput(400e-6, 110e-6, t, 0.117, 1.9e12))) + (t / t2) ** stretch
        for t in ts
    ]
    assert ts[int(np.argmin(log_eta))] == pytest.approx(optimal_coherence_time(400e-6, 110e-6, t2, stretch), rel=1e-3)


def test_volume_normalize():
    assert volume_normalize(2.0, 25.0) == 10.0


def test_eta_dc_units():
    # 1 signal unit noise, 1 s, slope 1 per MHz: 1 / 28 mT = 1/28e3 T.
    assert eta_dc(DcSensitivityInput(1.0, 1.0, 1.0)) == pytest.approx(1 / 28e3)
    with pytest.raises(NumericError):
        eta_dc(DcSensitivityInput(1.0, 1.0, 0.0))


def test_spectral_slope_of_lorentzian():
    f = np.arange(-10, 10, 0.01)
    s, at = spectral_slope(f, lorentzian(f, 2.0))
    assert s == pytest.approx(3 * math.sqrt(3) / 8, rel=1e-4)
    assert abs(at) == pytest.approx(1 / math.sqrt(3), abs=0.01)
    s2, _ = spectral_slope(f, lorentzian(f, 2.0), smooth_window=11, order=3)
    assert s2 == pytest.approx(s, rel=1e-3)


def test_report_csv_columns():
    rows = pulsed_report({"ramsey": 487e-9, "echo": 2.7e-6})
    text = report_csv(rows).splitlines()
    assert text[0].startswith("protocol,T_s,C,N_photons")
    assert len(text) == 3


def test_invalid():
    with pytest.raises(InvalidInputError):
        PulsedSensitivityInput(1e-4, 1e-4, 1e-6, 1.5, 1e12)
    with pytest.raises(InvalidInputError):
        volume_normalize(1.0, 0.0)


def test_eta_dc_linear_in_sigma():
    a = eta_dc(DcSensitivityInput(0.01, 1.0, 0.2))
    b = eta_dc(DcSensitivityInput(0.02, 1.0, 0.2))
    assert b == pytest.approx(2 * a)


def test_eta_pulsed_scales_inverse_contrast():
    a = eta_pulsed(PulsedSensitivityInput(400e-6, 110e-6, 2.7e-6, 0.117, 1.9e12))
    b = eta_pulsed(PulsedSensitivityInput(400e-6, 110e-6, 2.7e-6, 0.0585, 1.9e12))
    assert b == pytest.approx(2 * a)
