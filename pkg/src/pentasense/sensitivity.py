"""DC and shot-noise-limited pulsed magnetometry sensitivity.

Units: times in s, gamma_e in MHz/mT, sensitivities in T/sqrt(Hz), volumes in
um^3 and volume-normalised sensitivities in T um^{3/2}/sqrt(Hz).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .constants import GAMMA_E, HBAR_OVER_GMU
from .errors import InvalidInputError, NumericError
from .fitting import smooth_derivative


@dataclass(frozen=True)
class DcSensitivityInput:
    sigma: float  # noise floor, signal units
    tau: float  # s
    slope: float  # signal units per MHz
    gamma_e: float = GAMMA_E  # MHz/mT

    def __post_init__(self):
        if self.sigma <= 0 or self.tau <= 0 or self.gamma_e <= 0:
            raise InvalidInputError("sigma, tau and gamma_e must be positive")
        if self.slope < 0:
            raise InvalidInputError("slope must be non-negative")


@dataclass(frozen=True)
class PulsedSensitivityInput:
    t_init: float
    t_readout: float
    t_coh: float
    contrast: float
    photon_rate: float

    def __post_init__(self):
        if min(self.t_init, self.t_readout, self.t_coh, self.photon_rate) <= 0:
            raise InvalidInputError("times and photon rate must be positive")
        if not 0 < self.contrast <= 1:
            raise InvalidInputError("contrast must lie in (0, 1]")

    @property
    def photons(self) -> float:
        """Photons per measurement, count rate times readout window."""
        return self.photon_rate * self.t_readout


@dataclass(frozen=True)
class SensingVolume:
    volume: float  # um^3

    def __post_init__(self):
        if not self.volume > 0:
            raise InvalidInputError("volume must be positive")


def eta_dc(inp: DcSensitivityInput) -> float:
    """``sigma sqrt(tau) / (slope gamma_e)`` in T/sqrt(Hz).

    With the slope per MHz and gamma_e in MHz/mT the ratio is in mT/sqrt(Hz);
    the result is converted to tesla.
    """
    if inp.slope == 0:
        raise NumericError("zero spectral slope: DC sensitivity is undefined (field not resolvable)")
    return inp.sigma * math.sqrt(inp.tau) / (inp.slope * inp.gamma_e) * 1e-3


def eta_pulsed(inp: PulsedSensitivityInput) -> float:
    """Shot-noise-limited sensitivity of a pulsed protocol in T/sqrt(Hz)."""
    prefactor = 8 / (3 * math.sqrt(3)) * HBAR_OVER_GMU
    t = inp.t_coh
    return prefactor / (inp.contrast * math.sqrt(inp.photons)) * math.sqrt(inp.t_init + t + inp.t_readout) / t


def optimal_coherence_time(t_init: float, t_readout: float, t2: float, stretch: float = 1.0) -> float:
    """Evolution time minimising the sensitivity when the contrast decays.

    With a constant contrast ``sqrt(t_I + T + t_R) / T`` falls monotonically,
    so there is no finite optimum.  Here the contrast carries the decay
    ``exp(-(T / t2)^stretch)`` and the minimum solves

        1 / (2 (t_I + T + t_R)) - 1 / T + stretch T^(stretch - 1) / t2^stretch = 0.
    """
    if min(t_init, t_readout) < 0 or not (t2 > 0 and stretch > 0):
        raise InvalidInputError("overheads must be >= 0 and t2, stretch positive")
    a = t_init + t_readout

    def g(T):
        return 0.5 / (a + T) - 1.0 / T + stretch * T ** (stretch - 1) / t2**stretch

    # g < 0 for small T and > 0 for large T; the root is unique.
    lo, hi = 1e-6 * t2, t2
    while g(hi) < 0:
        hi *= 2
    return float(brentq(g, lo, hi, xtol=1e-15 * t2, rtol=1e-12))


def volume_normalize(eta: float, vol: SensingVolume | float) -> float:
    v = vol.volume if isinstance(vol, SensingVolume) else SensingVolume(float(vol)).volume
    return eta * math.sqrt(v)


def spectral_slope(freq, signal, smooth_window: int | None = None, order: int = 2) -> tuple[float, float]:
    """Maximum ``|dS/dF|`` and the frequency where it occurs.

    Uses central differences, or a local polynomial derivative when
    ``smooth_window`` is given.
    """
    f = np.asarray(freq, float)
    s = np.asarray(signal, float)
    if f.size < 3 or f.shape != s.shape:
        raise InvalidInputError("need at least 3 matching samples")
    if np.any(np.diff(f) <= 0):
        raise InvalidInputError("frequency grid must be strictly increasing")
    if smooth_window:
        d = smooth_derivative(f, s, smooth_window, order)
    else:
        d = np.gradient(s, f)
    i = int(np.argmax(np.abs(d)))
    return float(abs(d[i])), float(f[i])


@dataclass(frozen=True)
class SensitivityRow:
    protocol: str
    t_coh: float
    contrast: float
    photons: float
    eta: float
    eta_v: float


def pulsed_report(
    times: dict[str, float],
    t_init: float = 400e-6,
    t_readout: float = 110e-6,
    contrast: float = 0.117,
    photon_rate: float = 1.9e12,
    volume: float = 5700.0,
) -> list[SensitivityRow]:
    rows = []
    for name, t in times.items():
        inp = PulsedSensitivityInput(t_init, t_readout, t, contrast, photon_rate)
        eta = eta_pulsed(inp)
        rows.append(SensitivityRow(name, t, contrast, inp.photons, eta, volume_normalize(eta, volume)))
    return rows


REPORT_COLUMNS = ("protocol", "T_s", "C", "N_photons", "eta_T_per_rtHz", "etaV_T_um1.5_per_rtHz")


def report_csv(rows: Sequence[SensitivityRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.protocol, f"{r.t_coh:.6g}", f"{r.contrast:.6g}", f"{r.photons:.6g}", f"{r.eta:.6g}", f"{r.eta_v:.6g}"])
    return buf.getvalue()


def report_text(rows: Sequence[SensitivityRow]) -> str:
    lines = [f"{'protocol':<10} {'T':>10} {'C':>6} {'N':>10} {'eta':>14} {'eta_V':>18}"]
    for r in rows:
        lines.append(
            f"{r.protocol:<10} {r.t_coh * 1e6:>8.3g}us {r.contrast:>6.3g} {r.photons:>10.3g} "
            f"{r.eta * 1e12:>8.3g} pT/rHz {r.eta_v * 1e9:>8.3g} nT um^1.5/rHz"
        )
    return "\n".join(lines)
