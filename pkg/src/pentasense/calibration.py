"""Measured coherence times from simulated protocols, and noise calibration.

The sweeps below are the ones used for every reported time constant, so
calibration and verification see exactly the same numbers.  Fits run with
time in microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .coherent import NoiseModel, ProtocolParams, run_protocol
from .fitting import FitResult, fit_auto
from .kinetics import RateParams

# name -> (protocol, sweep in s, model)
SWEEPS = {
    "rabi": ("rabi", np.arange(0, 101) * 5e-9, "decaying_sinusoid"),
    "ramsey": ("ramsey", np.arange(0, 200) * 10e-9, "decaying_sinusoid"),
    "echo": ("hahn_echo", np.linspace(0, 12e-6, 41), "stretched_exponential"),
    "cpmg": ("cpmg", np.linspace(0, 60e-6, 21), "mono_exponential"),
    "t1": ("inversion_recovery", np.linspace(0, 100e-6, 50), "mono_exponential"),
}

TARGETS = {"rabi": 0.135, "ramsey": 0.487, "echo": 2.7, "cpmg": 18.4, "t1": 22.9}  # us


@dataclass
class Measurement:
    name: str
    x: np.ndarray  # s
    contrast: np.ndarray
    stderr: np.ndarray
    fit: FitResult

    @property
    def time_constant(self) -> float:
        """Fitted decay constant in microseconds."""
        key = "tau" if self.fit.kind == "decaying_sinusoid" else "T"
        return float(self.fit[key])


def measure(
    name: str,
    rates: RateParams,
    noise: NoiseModel,
    params: ProtocolParams = ProtocolParams(),
    seed: int = 0,
    workers: int = 1,
) -> Measurement:
    kind, sweep, model = SWEEPS[name]
    curve = run_protocol(kind, sweep, rates, noise, params, seed=seed, workers=workers)
    res = fit_auto(model, curve.x * 1e6, curve.contrast)
    return Measurement(name, curve.x, curve.contrast, curve.stderr, res)


def coherence_times(rates, noise, params=ProtocolParams(), seed=0, workers=1, names=None) -> dict:
    names = tuple(SWEEPS) if names is None else names
    return {n: measure(n, rates, noise, params, seed, workers).time_constant for n in names}


def calibrate_noise(
    rates: RateParams,
    start: NoiseModel,
    params: ProtocolParams = ProtocolParams(),
    seed: int = 0,
    iterations: int = 6,
    workers: int = 1,
    log=print,
) -> NoiseModel:
    """Fixed-point adjustment of the noise model towards ``TARGETS``.

    Each pass rescales one knob per observable, using the scaling it would
    have in isolation:

    * drive spread sets the Rabi decay, ``tau ~ 1 / spread``;
    * total quasi-static width sets the Ramsey decay, ``T2* ~ 1 / sigma``;
    * OU amplitude sets the echo decay, ``T2 ~ b^(-2/3)`` for slow noise;
    * Markovian dephasing fills the gap to the CPMG decay rate.
    """
    n = start
    for it in range(iterations):
        t = coherence_times(rates, n, params, seed, workers, names=("rabi", "ramsey", "echo", "cpmg"))
        log(f"pass {it}: {t}  <- {n}")
        spread = n.drive_spread * t["rabi"] / TARGETS["rabi"]
        b = n.ou_amplitude * (t["echo"] / TARGETS["echo"]) ** 1.5
        total = math.hypot(n.static_width, n.ou_amplitude) * t["ramsey"] / TARGETS["ramsey"]
        static = math.sqrt(max(total**2 - b**2, 0.0))
        gamma = max(n.dephasing_rate + 1e6 * (1 / TARGETS["cpmg"] - 1 / t["cpmg"]), 0.0)
        n = replace(n, drive_spread=spread, ou_amplitude=b, static_width=static, dephasing_rate=gamma)
    return n
