"""Continuous-wave and pulsed-illumination ODMR spectra.

Line positions come from the spin Hamiltonian, line amplitudes and signs from
the rate equations.  A cw line amplitude is the fractional change of the
steady-state emission when the driven pair is saturated (its populations
equalised), which is the regime of a lock-in measurement whose modulation
period is long against every coherence time.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import TRANSITION_LABELS
from .errors import InvalidInputError
from .hamiltonian import (
    FieldVector,
    SiteFamily,
    ZfsParams,
    build_hamiltonian,
    eigensystem,
    transition_table,
)
from .kinetics import (
    MicrowaveDrive,
    PumpSchedule,
    RateParams,
    emission_trace,
    emission_weights,
    evolve_populations,
    ground_state,
    propagate,
    steady_state,
    swap_populations,
)

HF_MODELS = ("signed_linear", "one_sided_quadratic")


@dataclass(frozen=True)
class HyperfineSet:
    """Couplings (MHz) of pairs of equivalent protons."""

    couplings: tuple[float, ...] = ()

    def __post_init__(self):
        c = tuple(float(a) for a in self.couplings)
        if any(not (a >= 0 and math.isfinite(a)) for a in c):
            raise InvalidInputError(f"hyperfine couplings must be finite and >= 0, got {c}")
        object.__setattr__(self, "couplings", c)


@dataclass(frozen=True)
class LineshapeConfig:
    l0: float = 1.9  # MHz
    a: float = 6.58  # MHz / sqrt(W)
    power: float = 0.6  # W
    model: str = "one_sided_quadratic"

    def __post_init__(self):
        if not self.l0 > 0:
            raise InvalidInputError("intrinsic width must be positive")
        if self.a < 0 or self.power < 0:
            raise InvalidInputError("broadening coefficient and power must be >= 0")
        if self.model not in HF_MODELS:
            raise InvalidInputError(f"unknown hyperfine model {self.model!r}; choose from {HF_MODELS}")

    @property
    def width(self) -> float:
        return broadened_width(self.l0, self.a, self.power)


@dataclass
class ODMRSpectrum:
    freq: np.ndarray  # MHz
    contrast: np.ndarray
    lines: list = field(default_factory=list)  # (label, frequency, amplitude, weight)
    status: str = "ok"

    def __post_init__(self):
        self.freq = np.asarray(self.freq, float)
        self.contrast = np.asarray(self.contrast, float)
        if self.freq.ndim != 1 or self.freq.shape != self.contrast.shape:
            raise InvalidInputError("frequency and contrast must be 1-D arrays of equal length")
        if self.freq.size > 1 and np.any(np.diff(self.freq) <= 0):
            raise InvalidInputError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(self.contrast)):
            raise InvalidInputError("spectrum contains non-finite values")


def broadened_width(l0: float, a: float, power: float) -> float:
    """Power-broadened linewidth ``l0 + a sqrt(P)``."""
    if l0 < 0 or a < 0 or power < 0:
        raise InvalidInputError("linewidth inputs must be >= 0")
    return l0 + a * math.sqrt(power)


def broadening_coefficient(l0: float, width: float, power: float) -> float:
    """Coefficient ``a`` that gives ``width`` at ``power``."""
    if power <= 0:
        raise InvalidInputError("power must be positive")
    return (width - l0) / math.sqrt(power)


def lorentzian(x, fwhm: float, normalize: str = "peak") -> np.ndarray:
    x = np.asarray(x, float)
    g = 0.5 * fwhm
    y = 1.0 / (1.0 + (x / g) ** 2)
    if normalize == "area":
        return y / (math.pi * g)
    return y


def hyperfine_sticks(hf: HyperfineSet, model: str = "one_sided_quadratic"):
    """Stick positions (MHz) and weights (summing to 1) of the proton pattern.

    Each pair of equivalent protons has total projection m in {-1, 0, 1}
    with weights 1:2:1.  The signed-linear model shifts a line by
    ``sum A_i m_i``, which is symmetric.  The one-sided quadratic model
    shifts by ``sum A_i m_i (m_i + 1) / 2``: only the m = +1 state of a pair
    moves, and only upward, so each pair puts a quarter of its weight on a
    high-frequency shoulder and the profile is positively skewed.
    """
    if model not in HF_MODELS:
        raise InvalidInputError(f"unknown hyperfine model {model!r}; choose from {HF_MODELS}")
    ms = (-1, 0, 1)
    ws = (0.25, 0.5, 0.25)
    pos, wt = [0.0], [1.0]
    for A in hf.couplings:
        shifts = [A * m if model == "signed_linear" else 0.5 * A * m * (m + 1) for m in ms]
        pos = [p + s for p in pos for s in shifts]
        wt = [w * v for w in wt for v in ws]
    pos = np.array(pos)
    wt = np.array(wt)
    # Merge degenerate sticks.
    key = np.round(pos, 12)
    uniq, inv = np.unique(key, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inv, wt)
    return uniq, merged


def hyperfine_profile(
    freq_offset,
    hf: HyperfineSet,
    width: float,
    model: str = "one_sided_quadratic",
    normalize: str = "peak",
) -> np.ndarray:
    """Stick pattern convolved with a Lorentzian of FWHM ``width``.

    ``normalize="peak"`` scales to unit maximum on a fine internal grid;
    ``"area"`` gives unit integral (the sticks carry unit total weight).
    Offsets are measured from the unshifted line position.
    """
    if not width > 0:
        raise InvalidInputError("linewidth must be positive")
    if normalize not in ("peak", "area"):
        raise InvalidInputError("normalize must be 'peak' or 'area'")
    x = np.asarray(freq_offset, float)
    pos, wt = hyperfine_sticks(hf, model)
    y = (wt[:, None] * lorentzian(x[None, :] - pos[:, None], width, "area")).sum(axis=0)
    if normalize == "area":
        return y
    return y / _profile_peak(pos, wt, width)


def _profile_peak(pos, wt, width) -> float:
    lo, hi = pos.min() - width, pos.max() + width
    grid = np.linspace(lo, hi, 4001)
    y = (wt[:, None] * lorentzian(grid[None, :] - pos[:, None], width, "area")).sum(axis=0)
    i = int(np.argmax(y))
    # Polish the grid maximum by a parabola through the neighbours.
    if 0 < i < grid.size - 1:
        a, b, c = y[i - 1], y[i], y[i + 1]
        d = a - 2 * b + c
        if d < 0:
            return float(b - 0.125 * (a - c) ** 2 / d)
    return float(y[i])


def pattern_skewness(hf: HyperfineSet, model: str = "one_sided_quadratic") -> float:
    """Standardised third moment of the stick pattern.

    Convolution with a symmetric line adds no third cumulant, so this fixes
    the sign of the profile asymmetry.  Zero for a single unshifted stick.
    """
    pos, wt = hyperfine_sticks(hf, model)
    mu = (wt * pos).sum()
    var = (wt * (pos - mu) ** 2).sum()
    if var <= 0:
        return 0.0
    return float((wt * (pos - mu) ** 3).sum() / var**1.5)


def profile_skewness(x, y) -> float:
    """Standardised third moment of a non-negative profile sampled on ``x``.

    Lorentzian tails have no finite moments, so the value depends on the
    window; use a window symmetric about the line centre.
    """
    x = np.asarray(x, float)
    w = np.clip(np.asarray(y, float), 0, None)
    w = w / w.sum()
    mu = (w * x).sum()
    var = (w * (x - mu) ** 2).sum()
    return float((w * (x - mu) ** 3).sum() / var**1.5)


def line_contrast(rates: RateParams, k12: float, label: str) -> float:
    """Steady-state cw contrast of a saturated line ``(S_on - S_off) / S_off``."""
    off = steady_state(rates, k12)[1]
    on = steady_state(rates, k12, MicrowaveDrive(label))[1]
    if off <= 0:
        raise InvalidInputError("no emission without optical pumping (k12 must be > 0)")
    return float((on - off) / off)


def cw_spectrum(
    zfs: ZfsParams,
    field: FieldVector,
    rates: RateParams,
    k12: float,
    lineshape: LineshapeConfig,
    hyperfine: HyperfineSet,
    freq: Sequence[float],
    sites: Sequence[SiteFamily] = (SiteFamily(),),
) -> ODMRSpectrum:
    """Synthetic cw ODMR spectrum.

    Every site family contributes three lines at its own transition
    frequencies, weighted by the family weight (weights are normalised).
    Each line carries its kinetic contrast and the hyperfine profile at the
    power-broadened width, normalised to unit peak.
    """
    f = np.asarray(freq, float)
    total_w = sum(s.weight for s in sites)
    if total_w <= 0:
        raise InvalidInputError("site family weights must sum to a positive value")
    amps = {lab: line_contrast(rates, k12, lab) for lab in TRANSITION_LABELS}
    width = lineshape.width
    y = np.zeros_like(f)
    lines = []
    for site in sites:
        es = eigensystem(build_hamiltonian(zfs, field, site.orientation))
        for t in transition_table(es):
            w = site.weight / total_w
            y += w * amps[t.label] * hyperfine_profile(f - t.frequency, hyperfine, width, lineshape.model)
            lines.append((t.label, t.frequency, amps[t.label], w))
    spec = ODMRSpectrum(f, y, lines)
    if f.size == 0 or not any(f[0] <= ln[1] <= f[-1] for ln in lines):
        spec.status = "no_transition_in_grid"
        warnings.warn("frequency grid covers none of the transitions", RuntimeWarning, stacklevel=2)
    return spec


def peak_positions(spec: ODMRSpectrum, centers: Sequence[float], window: float) -> list[float]:
    """Frequency of the largest |contrast| within ``window`` of each centre."""
    out = []
    for c in centers:
        m = np.abs(spec.freq - c) <= window
        if not np.any(m):
            out.append(float("nan"))
            continue
        idx = np.flatnonzero(m)
        out.append(float(spec.freq[idx[np.argmax(np.abs(spec.contrast[idx]))]]))
    return out


def contrast_vs_power(power, c_max: float, p_sat: float) -> np.ndarray:
    """Hyperbolic saturation ``C_max P / (P + P_sat)``."""
    p = np.asarray(power, float)
    if np.any(p < 0):
        raise InvalidInputError("power must be >= 0")
    if not p_sat > 0:
        raise InvalidInputError("saturation power must be positive")
    return c_max * p / (p + p_sat)


def polarization_modulation(theta_deg, depth: float, offset_deg: float = 0.0, mean: float = 1.0):
    """``mean (1 + m cos 2(theta - theta0))`` over polarisation angle in degrees."""
    if not 0 <= depth <= 1:
        raise InvalidInputError("modulation depth must lie in [0, 1]")
    th = np.radians(np.asarray(theta_deg, float) - offset_deg)
    return mean * (1 + depth * np.cos(2 * th))


def relative_variation(y) -> float:
    """``(max - min) / max`` of a curve."""
    y = np.asarray(y, float)
    return float((y.max() - y.min()) / y.max())


def depth_for_variation(v: float) -> float:
    """Depth m whose ``(max - min) / max`` is ``v``: ``2m / (1 + m) = v``."""
    if not 0 <= v < 2:
        raise InvalidInputError("variation must lie in [0, 2)")
    return v / (2 - v)


def square_reference(t, f_mod: float, phase: float = 0.0) -> np.ndarray:
    """+1/-1 square wave, +1 on the first half of each period (shifted by ``phase`` rad)."""
    frac = np.mod(np.asarray(t, float) * f_mod - phase / (2 * math.pi), 1.0)
    return np.where(frac < 0.5, 1.0, -1.0)


def lockin_demodulate(t, signal, f_mod: float = 1.8e3, phase: float = 0.0) -> float:
    """In-phase lock-in output: mean of ``signal * reference`` over whole periods.

    The reference is a unit square wave, so a signal chopped between 0 and A
    in phase with it demodulates to A/2.  The record is cut to an integer
    number of periods; that record length is the effective averaging
    (settling) time.
    """
    t = np.asarray(t, float)
    s = np.asarray(signal, float)
    if t.shape != s.shape or t.ndim != 1:
        raise InvalidInputError("time and signal must be 1-D arrays of equal length")
    dt = np.diff(t)
    if dt.size == 0 or np.any(dt <= 0):
        raise InvalidInputError("time grid must be increasing")
    period = 1.0 / f_mod
    span = t[-1] - t[0] + float(np.mean(dt))
    n_periods = int(math.floor(span / period + 1e-9))
    if n_periods < 1:
        raise InvalidInputError("series is shorter than one modulation period")
    keep = t < t[0] + n_periods * period - 1e-3 * float(np.mean(dt))
    ref = square_reference(t[keep] - t[0], f_mod, phase)
    return float(np.mean(s[keep] * ref))


def chopped_fluorescence(
    rates: RateParams,
    k12: float,
    label: str,
    f_mod: float = 1.8e3,
    n_periods: int = 20,
    samples_per_half: int = 50,
    settle_periods: int = 10,
):
    """Emission under cw pumping with the MW drive on for half of each period.

    Starts from the drive-off steady state and discards ``settle_periods``
    periods before recording.  Returns ``(t, emission)`` with ``t`` measured
    from the first recorded MW-on edge.
    """
    half = 0.5 / f_mod
    N = steady_state(rates, k12)
    on = MicrowaveDrive(label)
    for _ in range(settle_periods):
        N = evolve_populations(N, PumpSchedule([(half, k12, on), (half, k12)]), rates)
    ts, es = [], []
    dt = half / samples_per_half
    for p in range(n_periods):
        for mw in (on, None):
            traj = propagate(N, PumpSchedule([(half, k12, mw)]), rates, dt)
            t0 = (2 * p + (mw is None)) * half
            em = emission_trace(traj, rates)
            ts.append(traj.t[:-1] + t0)
            es.append(em[:-1])
            N = traj.final
    return np.concatenate(ts), np.concatenate(es)


# ---------------------------------------------------------------------------
# Pulsed-illumination protocols


@dataclass(frozen=True)
class ProtocolAConfig:
    """Chopped cw pulse of length tau_p, MW pi pulse, readout at the same power."""

    tau_p: tuple = tuple(np.logspace(-7, -3, 61))
    powers: tuple = (0.05, 0.1, 0.2, 0.4, 0.8)  # W
    readout: float = 110e-6
    kappa_cw: float = 1.135e7  # k12 per W
    label: str = "Txy"

    def __post_init__(self):
        _positive("tau_p", self.tau_p)
        _positive("powers", self.powers)
        if not (self.readout > 0 and self.kappa_cw > 0):
            raise InvalidInputError("readout and kappa_cw must be positive")


@dataclass(frozen=True)
class ProtocolBConfig:
    """Short pump pulse of given energy, dark time, MW pi pulse, cw readout window tau."""

    energies: tuple = (5.0, 10.0, 20.0, 40.0, 83.1)  # arbitrary energy units
    taus: tuple = tuple(np.logspace(-6.5, -3.5, 121))
    pulse_duration: float = 65e-9
    dark_time: float = 0.5e-6
    readout_power: float = 0.15
    kappa_cw: float = 1.135e7  # k12 per W
    kappa_pulse: float = 1.694e6  # k12 per energy unit
    label: str = "Txy"

    def __post_init__(self):
        _positive("energies", self.energies)
        _positive("taus", self.taus)
        if not (self.pulse_duration > 0 and self.readout_power > 0):
            raise InvalidInputError("pulse duration and readout power must be positive")
        if self.dark_time < 0 or self.kappa_cw <= 0 or self.kappa_pulse <= 0:
            raise InvalidInputError("invalid protocol B timing or calibration")


def _positive(name, values):
    v = np.asarray(values, float)
    if v.size == 0 or np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise InvalidInputError(f"{name} must be a non-empty grid of positive values")


@dataclass
class ContrastMap:
    x: np.ndarray  # swept time, s
    y: np.ndarray  # power (W) or energy
    contrast: np.ndarray  # shape (len(y), len(x))
    optimum: np.ndarray  # x at max |contrast| for each y
    peak: np.ndarray  # contrast at that optimum


def _summarise(x, y, c) -> ContrastMap:
    idx = np.argmax(np.abs(c), axis=1)
    rows = np.arange(c.shape[0])
    return ContrastMap(np.asarray(x), np.asarray(y), c, np.asarray(x)[idx], c[rows, idx])


def pi_swap_contrast(N, rates: RateParams, k12_readout: float, window: float, label: str) -> float:
    """Readout contrast of an ideal pi pulse applied to populations ``N``."""
    w = emission_weights(rates, k12_readout, window)
    ref = w @ N
    if ref == 0:
        return 0.0
    return float((w @ swap_populations(N, label) - ref) / ref)


def protocol_A_map(cfg: ProtocolAConfig, rates: RateParams) -> ContrastMap:
    c = np.empty((len(cfg.powers), len(cfg.tau_p)))
    for i, P in enumerate(cfg.powers):
        k12 = cfg.kappa_cw * P
        w = emission_weights(rates, k12, cfg.readout)
        for j, tp in enumerate(cfg.tau_p):
            N = evolve_populations(ground_state(), PumpSchedule([(tp, k12)]), rates)
            ref = w @ N
            c[i, j] = (w @ swap_populations(N, cfg.label) - ref) / ref
    return _summarise(cfg.tau_p, cfg.powers, c)


def protocol_B_map(cfg: ProtocolBConfig, rates: RateParams) -> ContrastMap:
    k12r = cfg.kappa_cw * cfg.readout_power
    weights = [emission_weights(rates, k12r, tau) for tau in cfg.taus]
    c = np.empty((len(cfg.energies), len(cfg.taus)))
    for i, E in enumerate(cfg.energies):
        sched = [(cfg.pulse_duration, cfg.kappa_pulse * E)]
        if cfg.dark_time > 0:
            sched.append((cfg.dark_time, 0.0))
        N = evolve_populations(ground_state(), PumpSchedule(sched), rates)
        Ns = swap_populations(N, cfg.label)
        for j, w in enumerate(weights):
            ref = w @ N
            c[i, j] = (w @ Ns - ref) / ref
    return _summarise(cfg.taus, cfg.energies, c)


def write_spectrum_csv(spec: ODMRSpectrum, path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["f_MHz", "contrast"])
        for f, c in zip(spec.freq, spec.contrast):
            w.writerow([f"{f:.9g}", f"{c:.9g}"])


def write_map_csv(cmap: ContrastMap, path, x_name: str, y_name: str, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow([x_name, y_name, "contrast"])
        for i, yv in enumerate(cmap.y):
            for j, xv in enumerate(cmap.x):
                w.writerow([f"{xv:.9g}", f"{yv:.9g}", f"{cmap.contrast[i, j]:.9g}"])
