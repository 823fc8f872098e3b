"""Microwave control of the triplet manifold with dissipation and noise.

States are 3x3 density matrices over ``(|Tx>, |Ty>, |Tz>)`` whose trace is
the share of the population currently in the triplet.  Population leaving
the triplet (decay to S0) is tracked implicitly as ``1 - trace``.

Pulses act in the rotating frame of a single addressed transition (RWA); the
spectator level only relaxes.  A pulse is applied as symmetric split steps:
half a dissipative step, the exact two-level rotation, and another half
step, with at most a quarter turn of nominal rotation per step.  The local
error scales as ``(Omega tau)^2 (k tau)`` and stays around 1e-6 per pulse
at the shipped rates (tens of ns against tens of us).
Free evolution is exact: populations follow the triplet block of the rate
generator, coherences decay and pick up the accumulated detuning phase.

Noise is sampled per ensemble member:

* a static detuning (Gaussian or Lorentzian) for inhomogeneous broadening,
* an Ornstein-Uhlenbeck detuning, advanced with the exact joint update of
  its value and time integral so delays of any length are exact,
* a relative drive-amplitude error (B1 inhomogeneity),
* an extra Markovian pure-dephasing rate.

Every element of a sequence consumes the same random draws whether or not
its drive is on, so branches built from one seed share noise realisations.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from .constants import pair_indices
from .errors import InvalidInputError
from .kinetics import (
    PumpSchedule,
    RateParams,
    emission_weights,
    evolve_populations,
    ground_state,
    rate_matrix,
)

TWO_PI_MHZ = 2 * math.pi * 1e6  # MHz -> rad/s
PSD_TOL = 1e-9
# Largest nominal rotation per split step of a pulse.
MAX_SUBSTEP_ANGLE = math.pi / 4


@dataclass(frozen=True)
class ControlPulse:
    label: str
    rabi: float  # MHz
    duration: float  # s
    phase: float = 0.0  # rad
    detuning: float = 0.0  # MHz

    def __post_init__(self):
        pair_indices(self.label)
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise InvalidInputError(f"pulse duration must be >= 0, got {self.duration}")
        if not (self.rabi >= 0 and math.isfinite(self.rabi)):
            raise InvalidInputError(f"Rabi frequency must be >= 0, got {self.rabi}")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise InvalidInputError(f"delay must be >= 0, got {self.duration}")


@dataclass(frozen=True)
class ReadoutMarker:
    pass


class PulseSequence(tuple):
    """Ordered pulses and delays, optionally ending at one readout marker.

    All pulses must address the same transition; that transition also
    defines the rotating frame for free evolution.
    """

    def __new__(cls, elements: Iterable = ()):
        els = tuple(elements)
        for e in els:
            if not isinstance(e, (ControlPulse, Delay, ReadoutMarker)):
                raise InvalidInputError(f"unsupported sequence element {e!r}")
        if sum(isinstance(e, ReadoutMarker) for e in els) > 1:
            raise InvalidInputError("at most one readout marker is allowed")
        labels = {e.label for e in els if isinstance(e, ControlPulse)}
        if len(labels) > 1:
            raise InvalidInputError(f"pulses address several transitions: {sorted(labels)}")
        return super().__new__(cls, els)

    @property
    def label(self) -> str | None:
        for e in self:
            if isinstance(e, ControlPulse):
                return e.label
        return None

    @property
    def duration(self) -> float:
        total = 0.0
        for e in self:
            if isinstance(e, ReadoutMarker):
                break
            total += e.duration
        return total


@dataclass(frozen=True)
class NoiseModel:
    static_width: float = 0.0  # MHz; Gaussian std or Lorentzian HWHM
    static_shape: str = "gaussian"
    ou_amplitude: float = 0.0  # MHz, stationary std
    ou_correlation_time: float = 1e-6  # s
    dephasing_rate: float = 0.0  # 1/s, Markovian pure dephasing of coherences
    drive_spread: float = 0.0  # relative std of the Rabi frequency

    def __post_init__(self):
        if self.static_shape not in ("gaussian", "lorentzian"):
            raise InvalidInputError(f"unknown static detuning shape {self.static_shape!r}")
        for name in ("static_width", "ou_amplitude", "dephasing_rate", "drive_spread"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be >= 0, got {v}")
        if not (self.ou_correlation_time > 0):
            raise InvalidInputError("OU correlation time must be positive")

    @property
    def is_noiseless(self) -> bool:
        return self.static_width == 0 and self.ou_amplitude == 0 and self.drive_spread == 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


NOISELESS = NoiseModel()


def as_density_matrix(rho) -> np.ndarray:
    r = np.asarray(rho, dtype=complex)
    if r.shape != (3, 3):
        raise InvalidInputError(f"density matrix must be 3x3, got {r.shape}")
    if np.max(np.abs(r - r.conj().T)) > PSD_TOL:
        raise InvalidInputError("density matrix is not Hermitian")
    tr = np.trace(r).real
    if tr < -PSD_TOL or tr > 1 + PSD_TOL:
        raise InvalidInputError(f"trace must lie in [0, 1], got {tr}")
    if np.min(np.linalg.eigvalsh(r)) < -PSD_TOL:
        raise InvalidInputError("density matrix is not positive semidefinite")
    return r


def populations_to_rho(nx: float, ny: float, nz: float) -> np.ndarray:
    return np.diag([nx, ny, nz]).astype(complex)


def basis_state(k: int) -> np.ndarray:
    r = np.zeros((3, 3), complex)
    r[k, k] = 1.0
    return r


# ---------------------------------------------------------------------------
# Dissipation


def _triplet_generator(rates: RateParams) -> np.ndarray:
    return rate_matrix(rates, 0.0)[2:, 2:]


def _coherence_decay(rates: RateParams, dephasing: float) -> np.ndarray:
    out = -np.diag(_triplet_generator(rates))
    gamma = 0.5 * (out[:, None] + out[None, :]) + dephasing
    np.fill_diagonal(gamma, 0.0)
    return gamma


class _Dissipator:
    """Cached exact dissipative step for a given rate set."""

    def __init__(self, rates: RateParams, dephasing: float):
        self.M = _triplet_generator(rates)
        self.gamma = _coherence_decay(rates, dephasing)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def factors(self, t: float):
        hit = self._cache.get(t)
        if hit is None:
            hit = (expm(self.M * t), np.exp(-self.gamma * t))
            if len(self._cache) < 4096:
                self._cache[t] = hit
        return hit

    def apply(self, rho: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return rho
        P, damp = self.factors(t)
        diag = np.einsum("...ii->...i", rho).real
        out = rho * damp
        new_diag = diag @ P.T
        idx = np.arange(3)
        out[..., idx, idx] = new_diag
        return out


# ---------------------------------------------------------------------------
# Noise realisations


class _NoiseState:
    def __init__(self, noise: NoiseModel, rng: np.random.Generator, m: int):
        self.noise = noise
        self.rng = rng
        self.m = m
        if noise.static_shape == "gaussian":
            self.static = noise.static_width * rng.standard_normal(m)
        else:
            self.static = noise.static_width * np.tan(np.pi * (rng.random(m) - 0.5))
        self.drive = 1.0 + noise.drive_spread * rng.standard_normal(m)
        self.ou = noise.ou_amplitude * rng.standard_normal(m)

    def advance(self, t: float) -> np.ndarray:
        """Advance the OU detuning by ``t`` seconds; return its integral (MHz*s)."""
        z1 = self.rng.standard_normal(self.m)
        z2 = self.rng.standard_normal(self.m)
        b = self.noise.ou_amplitude
        tc = self.noise.ou_correlation_time
        if t == 0 or b == 0:
            return np.zeros(self.m)
        a = math.exp(-t / tc)
        var_x = b * b * (1 - a * a)
        var_i = b * b * tc * tc * (2 * t / tc - 3 + 4 * a - a * a)
        cov = b * b * tc * (1 - a) ** 2
        sx = math.sqrt(max(var_x, 0.0))
        # Conditional standard deviation of the integral given the new value.
        if sx > 0:
            c = cov / sx
            si = math.sqrt(max(var_i - c * c, 0.0))
        else:
            c, si = 0.0, math.sqrt(max(var_i, 0.0))
        integral = self.ou * tc * (1 - a) + c * z1 + si * z2
        self.ou = self.ou * a + sx * z1
        return integral


# ---------------------------------------------------------------------------
# Evolution


def _rotation(pulse: ControlPulse, detuning: np.ndarray, drive: np.ndarray) -> np.ndarray:
    """Batch of 3x3 unitaries for a pulse; detuning in MHz per member."""
    a, b = pair_indices(pulse.label)
    m = detuning.size
    omega = pulse.rabi * drive
    delta = detuning + pulse.detuning
    w_eff = np.sqrt(omega**2 + delta**2)
    theta = TWO_PI_MHZ * w_eff * pulse.duration
    with np.errstate(invalid="ignore", divide="ignore"):
        nx = np.where(w_eff > 0, omega * math.cos(pulse.phase) / w_eff, 0.0)
        ny = np.where(w_eff > 0, omega * math.sin(pulse.phase) / w_eff, 0.0)
        nz = np.where(w_eff > 0, delta / w_eff, 0.0)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    U = np.zeros((m, 3, 3), complex)
    spectator = 3 - a - b
    U[:, spectator, spectator] = 1.0
    U[:, a, a] = c - 1j * s * nz
    U[:, b, b] = c + 1j * s * nz
    U[:, a, b] = -1j * s * (nx - 1j * ny)
    U[:, b, a] = -1j * s * (nx + 1j * ny)
    return U


def _apply_phase(rho: np.ndarray, a: int, b: int, phase: np.ndarray) -> np.ndarray:
    """Free precession of the (a, b) coherence by ``phase`` radians."""
    f = np.exp(-1j * phase)
    rho[:, a, b] *= f
    rho[:, b, a] *= f.conj()
    s = 3 - a - b
    # Spectator coherences rotate by half the pair phase in the symmetric frame.
    h = np.exp(-0.5j * phase)
    rho[:, a, s] *= h
    rho[:, s, a] *= h.conj()
    rho[:, b, s] *= h.conj()
    rho[:, s, b] *= h
    return rho


def evolve_ensemble(
    rho: np.ndarray,
    seq: PulseSequence | Iterable,
    rates: RateParams,
    noise: NoiseModel = NOISELESS,
    seed: int | np.random.SeedSequence | None = 0,
    n_ensemble: int = 1,
) -> np.ndarray:
    """Evolve ``rho`` through ``seq`` for every ensemble member; returns (M, 3, 3)."""
    if n_ensemble < 1:
        raise InvalidInputError("ensemble size must be at least 1")
    seq = PulseSequence(seq)
    rho0 = as_density_matrix(rho)
    rng = np.random.default_rng(seed)
    m = int(n_ensemble)
    state = np.broadcast_to(rho0, (m, 3, 3)).copy()
    diss = _Dissipator(rates, noise.dephasing_rate)
    ns = _NoiseState(noise, rng, m)
    label = seq.label or "Txy"
    a, b = pair_indices(label)
    for el in seq:
        if isinstance(el, ReadoutMarker):
            break
        if isinstance(el, Delay):
            integral = ns.advance(el.duration)
            phase = TWO_PI_MHZ * (ns.static * el.duration + integral)
            state = diss.apply(state, el.duration)
            state = _apply_phase(state, a, b, phase)
        else:
            det = ns.static + ns.ou
            ns.advance(el.duration)
            n_sub = max(1, math.ceil(2 * math.pi * el.rabi * 1e6 * el.duration / MAX_SUBSTEP_ANGLE))
            sub = replace(el, duration=el.duration / n_sub)
            half = 0.5 * sub.duration
            U = _rotation(sub, det, ns.drive)
            Uh = np.conj(np.swapaxes(U, 1, 2))
            for _ in range(n_sub):
                state = diss.apply(state, half)
                state = U @ state @ Uh
                state = diss.apply(state, half)
    return state


def evolve(
    rho,
    seq: PulseSequence | Iterable,
    rates: RateParams,
    noise: NoiseModel = NOISELESS,
    seed: int | None = 0,
    n_ensemble: int = 1,
) -> np.ndarray:
    """Ensemble-averaged final density matrix."""
    return evolve_ensemble(rho, seq, rates, noise, seed, n_ensemble).mean(axis=0)


def exact_pulse_liouvillian(
    pulse: ControlPulse, rates: RateParams, dephasing: float = 0.0
) -> np.ndarray:
    """9x9 Liouvillian of a driven pulse (row-major vectorisation).

    Reference implementation for tests; the engine itself uses the split
    propagator.
    """
    a, b = pair_indices(pulse.label)
    H = np.zeros((3, 3), complex)
    H[a, a] = 0.5 * pulse.detuning
    H[b, b] = -0.5 * pulse.detuning
    half = 0.5 * pulse.rabi * np.exp(-1j * pulse.phase)
    H[a, b] = half
    H[b, a] = np.conj(half)
    H *= TWO_PI_MHZ
    eye = np.eye(3)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    M = _triplet_generator(rates)
    out = -np.diag(M)
    # Population transfer j -> i at M[i, j] plus anticommutator loss.
    for i in range(3):
        for j in range(3):
            if i != j and M[i, j] > 0:
                L[i * 3 + i, j * 3 + j] += M[i, j]
    for i in range(3):
        for j in range(3):
            L[i * 3 + j, i * 3 + j] -= 0.5 * (out[i] + out[j])
            if i != j:
                L[i * 3 + j, i * 3 + j] -= dephasing
    return L


# ---------------------------------------------------------------------------
# Readout


@dataclass(frozen=True)
class ReadoutResult:
    contrast: float
    signal: float
    reference: float


def full_populations(rho: np.ndarray, singlets: Sequence[float] | None = None) -> np.ndarray:
    """5-level populations from a triplet density matrix.

    ``singlets`` is ``(N0, N1)``; by default N1 = 0 and N0 takes whatever the
    triplet does not hold.
    """
    diag = np.real(np.einsum("...ii->...i", rho))
    if singlets is None:
        n1 = np.zeros(diag.shape[:-1])
        n0 = 1.0 - diag.sum(axis=-1)
    else:
        n0, n1 = singlets
        n0 = np.broadcast_to(n0, diag.shape[:-1])
        n1 = np.broadcast_to(n1, diag.shape[:-1])
    return np.concatenate([np.stack([n0, n1], axis=-1), diag], axis=-1)


def readout_signal(rho, singlets, window: float, rates: RateParams, k12_readout: float) -> np.ndarray:
    """Integrated fluorescence during a cw readout window (per molecule)."""
    w = emission_weights(rates, k12_readout, window)
    return full_populations(rho, singlets) @ w


def readout_contrast(
    rho_signal,
    rho_reference,
    window: float,
    rates: RateParams,
    k12_readout: float,
    singlets_signal: Sequence[float] | None = None,
    singlets_reference: Sequence[float] | None = None,
) -> ReadoutResult:
    """Fluorescence contrast ``(S - R) / R`` between two final states.

    Both states are handed to the rate equations under cw pumping and the
    emission is integrated over ``window``.  A zero window gives zero
    contrast.
    """
    if window < 0:
        raise InvalidInputError("readout window must be non-negative")
    s = float(readout_signal(rho_signal, singlets_signal, window, rates, k12_readout))
    r = float(readout_signal(rho_reference, singlets_reference, window, rates, k12_readout))
    c = (s - r) / r if r != 0 else 0.0
    return ReadoutResult(contrast=c, signal=s, reference=r)


# ---------------------------------------------------------------------------
# Protocols

PROTOCOLS = ("rabi", "ramsey", "inversion_recovery", "hahn_echo", "cpmg")


@dataclass(frozen=True)
class ProtocolParams:
    label: str = "Txy"
    rabi: float = 12.9  # MHz
    ramsey_offset: float = 20.0  # MHz, phase advance of the second pi/2
    cpmg_spacing: float = 148e-9  # s, free time between refocusing pulses
    readout_window: float = 110e-6  # s
    k12_readout: float = 1.7025e6  # 1/s
    init_k12: float = 1e9  # 1/s
    init_duration: float = 65e-9  # s
    init_settle: float = 0.5e-6  # s, dark time before the first MW pulse
    n_ensemble: int = 1000

    def __post_init__(self):
        pair_indices(self.label)
        if self.n_ensemble < 1:
            raise InvalidInputError("ensemble size must be at least 1")
        for name in ("rabi", "cpmg_spacing", "readout_window", "init_duration"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.init_settle < 0 or self.k12_readout < 0 or self.init_k12 < 0:
            raise InvalidInputError("times and rates must be non-negative")

    @property
    def pi_time(self) -> float:
        return 0.5 / (self.rabi * 1e6)

    def with_updates(self, **kw) -> "ProtocolParams":
        return replace(self, **kw)


@dataclass
class ProtocolCurve:
    kind: str
    x: np.ndarray  # s
    contrast: np.ndarray
    stderr: np.ndarray
    signal: np.ndarray = field(repr=False, default=None)
    reference: np.ndarray = field(repr=False, default=None)


def initial_state(rates: RateParams, params: ProtocolParams) -> np.ndarray:
    """Triplet density matrix after laser initialisation and the dark settle.

    Whatever is still in S1 at the end of the settle is handed on along its
    decay branches (to S0 and the triplet sublevels), so during the
    microwave sequence N1 = 0 and S0 holds ``1 - trace``.  The settle is many
    S1 lifetimes long, so this is a negligible correction.
    """
    sched = [(params.init_duration, params.init_k12)]
    if params.init_settle > 0:
        sched.append((params.init_settle, 0.0))
    N = evolve_populations(ground_state(), PumpSchedule(sched), rates)
    trip = N[2:] + N[1] * rates.phi_isc * np.asarray(rates.branching)
    return populations_to_rho(*trip)


def _pulse(p: ProtocolParams, area: float, phase: float = 0.0, on: bool = True) -> ControlPulse:
    """Pulse of rotation angle ``area * pi``; drive off keeps timing and draws."""
    return ControlPulse(p.label, p.rabi if on else 0.0, area * p.pi_time, phase)


def protocol_sequences(kind: str, value: float, p: ProtocolParams) -> tuple[PulseSequence, PulseSequence]:
    """(signal, reference) sequences for one sweep point."""
    if value < 0:
        raise InvalidInputError(f"sweep value must be non-negative, got {value}")
    if kind == "rabi":
        sig = [ControlPulse(p.label, p.rabi, value)]
        ref = [ControlPulse(p.label, 0.0, value)]
    elif kind == "inversion_recovery":
        sig = [_pulse(p, 1.0), Delay(value)]
        ref = [_pulse(p, 1.0, on=False), Delay(value)]
    elif kind == "ramsey":
        phi = 2 * math.pi * p.ramsey_offset * 1e6 * value
        sig = [_pulse(p, 0.5), Delay(value), _pulse(p, 0.5, phi)]
        ref = [_pulse(p, 0.5), Delay(value), _pulse(p, 0.5, phi + math.pi)]
    elif kind == "hahn_echo":
        body = [_pulse(p, 0.5), Delay(value / 2), _pulse(p, 1.0, math.pi / 2), Delay(value / 2)]
        sig = body + [_pulse(p, 0.5)]
        ref = body + [_pulse(p, 0.5, math.pi)]
    elif kind == "cpmg":
        n = cpmg_pulse_count(value, p.cpmg_spacing)
        s = p.cpmg_spacing
        body = [_pulse(p, 0.5)]
        if n == 0:
            body.append(Delay(0.0))
        for _ in range(n):
            body += [Delay(s / 2), _pulse(p, 1.0, math.pi / 2), Delay(s / 2)]
        sig = body + [_pulse(p, 0.5)]
        ref = body + [_pulse(p, 0.5, math.pi)]
    else:
        raise InvalidInputError(f"unknown protocol {kind!r}; choose from {PROTOCOLS}")
    return PulseSequence(sig), PulseSequence(ref)


def cpmg_pulse_count(total_free_time: float, spacing: float) -> int:
    return int(round(total_free_time / spacing))


def evolution_time(kind: str, value: float, p: ProtocolParams) -> float:
    """Time between the end of the first and the start of the last pi/2 pulse.

    For echo and CPMG this counts the refocusing pulses as well as the free
    precession, since the coherence decays during both.  For the other
    protocols it is the sweep value itself.
    """
    if kind == "hahn_echo":
        return value + p.pi_time
    if kind == "cpmg":
        n = cpmg_pulse_count(value, p.cpmg_spacing)
        return n * (p.cpmg_spacing + p.pi_time)
    return value


def _sweep_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _run_point(kind, value, params, rates, noise, seed_seq, rho0, weights):
    sig_seq, ref_seq = protocol_sequences(kind, value, params)
    m = params.n_ensemble
    # Same seed for both branches: common random numbers.
    sig = evolve_ensemble(rho0, sig_seq, rates, noise, seed_seq, m)
    ref = evolve_ensemble(rho0, ref_seq, rates, noise, seed_seq, m)
    s = full_populations(sig) @ weights
    r = full_populations(ref) @ weights
    r_mean = r.mean()
    per_member = (s - r) / r_mean
    contrast = float(per_member.mean())
    stderr = float(per_member.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return contrast, stderr, float(s.mean()), r_mean


def run_protocol(
    kind: str,
    sweep: Sequence[float],
    rates: RateParams,
    noise: NoiseModel = NOISELESS,
    params: ProtocolParams = ProtocolParams(),
    seed: int = 0,
    workers: int = 1,
) -> ProtocolCurve:
    """Sweep a protocol and return the reference-subtracted contrast.

    Contrast at each point is ``(S - R) / R`` averaged over the noise
    ensemble, where the reference branch is the same sequence without
    microwaves (Rabi, inversion recovery) or with the last pi/2 pulse phase
    inverted (Ramsey, echo, CPMG).  Each sweep point gets its own child seed
    of ``seed`` so results do not depend on ``workers``.

    For echo and CPMG the sweep value is the free precession time and the
    returned ``x`` is the total evolution time (see :func:`evolution_time`).
    """
    if kind not in PROTOCOLS:
        raise InvalidInputError(f"unknown protocol {kind!r}; choose from {PROTOCOLS}")
    x = np.asarray(list(sweep), dtype=float)
    if x.size == 0:
        raise InvalidInputError("sweep must be non-empty")
    if np.any(x < 0):
        raise InvalidInputError("sweep values must be non-negative")
    if kind == "cpmg":
        x = np.array([cpmg_pulse_count(v, params.cpmg_spacing) * params.cpmg_spacing for v in x])
    rho0 = initial_state(rates, params)
    weights = emission_weights(rates, params.k12_readout, params.readout_window)
    seeds = _sweep_seeds(seed, x.size)

    def task(i):
        return _run_point(kind, x[i], params, rates, noise, seeds[i], rho0, weights)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(x.size)))
    else:
        results = [task(i) for i in range(x.size)]
    arr = np.array(results)
    x = np.array([evolution_time(kind, v, params) for v in x])
    return ProtocolCurve(kind, x, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
