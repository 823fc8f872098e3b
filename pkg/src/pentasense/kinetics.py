"""Five-level rate equations for optical pumping and triplet relaxation.

State vectors are ordered ``(N0, N1, Nx, Ny, Nz)``: singlet ground, singlet
excited and the three zero-field triplet sublevels.  The generator ``G`` is
column-stochastic in the continuous-time sense (columns sum to zero,
off-diagonals non-negative) so that ``dN/dt = G @ N``.

Within a segment of constant pump rate the populations are advanced with the
exact propagator ``expm(G t)``.  The system is stiff (rates span ~1e9 to
~1e3 s^-1) and only 5x5, so this is both cheaper and more accurate than
stepping an ODE solver.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm, null_space

from .constants import TRANSITION_PAIRS, pair_indices
from .errors import AmbiguousSteadyStateError, InvalidInputError

LEVELS = ("N0", "N1", "Nx", "Ny", "Nz")
S0, S1, TX, TY, TZ = range(5)
POP_TOL = 1e-9


@dataclass(frozen=True)
class RateParams:
    """Kinetic rates, all in s^-1 except the dimensionless yields.

    ``branching`` holds the fractions of intersystem crossing into
    ``(Tx, Ty, Tz)``; ``decay`` the triplet -> S0 rates; ``spin_lattice`` the
    symmetric exchange rates for the pairs ``(xy, xz, yz)``.
    """

    k21_total: float = 1.0 / 22e-9
    phi_isc: float = 0.625
    branching: tuple[float, float, float] = (0.88, 0.075, 0.045)
    decay: tuple[float, float, float] = (4.19e4, 2.48e4, 2.85e3)
    spin_lattice: tuple[float, float, float] = (149.0, 2.38e4, 1.43e3)

    def __post_init__(self):
        object.__setattr__(self, "branching", tuple(float(p) for p in self.branching))
        object.__setattr__(self, "decay", tuple(float(k) for k in self.decay))
        object.__setattr__(self, "spin_lattice", tuple(float(w) for w in self.spin_lattice))
        self.validate()

    def validate(self) -> None:
        if len(self.branching) != 3 or len(self.decay) != 3 or len(self.spin_lattice) != 3:
            raise InvalidInputError("branching, decay and spin_lattice need three entries each")
        values = (self.k21_total, *self.branching, *self.decay, *self.spin_lattice)
        if not all(math.isfinite(v) for v in values + (self.phi_isc,)):
            raise InvalidInputError("rates must be finite")
        if min(values) < 0:
            raise InvalidInputError("rates and branching fractions must be non-negative")
        if not 0.0 <= self.phi_isc <= 1.0:
            raise InvalidInputError(f"phi_isc must lie in [0, 1], got {self.phi_isc}")
        if abs(sum(self.branching) - 1.0) > 1e-9:
            raise InvalidInputError(f"branching fractions must sum to 1, got {sum(self.branching)}")

    def spin_lattice_rate(self, label: str) -> float:
        return self.spin_lattice[("Txy", "Txz", "Tyz").index(label)]

    def with_updates(self, **changes) -> "RateParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "RateParams":
        return cls(**d)


def load_profile_rates(name: str = "pentacene_rt") -> RateParams:
    """Rates stored in a shipped profile (see ``pentasense/data``)."""
    text = resources.files("pentasense.data").joinpath(f"{name}.json").read_text()
    return RateParams.from_dict(json.loads(text)["rates"])


@dataclass(frozen=True)
class MicrowaveDrive:
    """Incoherent saturating drive on one triplet transition (rate in s^-1)."""

    label: str
    rate: float = 1e8

    def __post_init__(self):
        pair_indices(self.label)
        if self.rate < 0:
            raise InvalidInputError("microwave rate must be non-negative")


@dataclass(frozen=True)
class Segment:
    duration: float
    k12: float
    mw: MicrowaveDrive | None = None

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise InvalidInputError(f"segment duration must be positive, got {self.duration}")
        if not (self.k12 >= 0 and math.isfinite(self.k12)):
            raise InvalidInputError(f"pump rate must be non-negative, got {self.k12}")


class PumpSchedule(tuple):
    """Ordered pump segments.  Accepts ``Segment`` objects or plain
    ``(duration, k12)`` / ``(duration, k12, mw)`` tuples."""

    def __new__(cls, segments: Iterable):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in segments)
        return super().__new__(cls, segs)

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self)


@dataclass
class Trajectory:
    t: np.ndarray
    populations: np.ndarray  # shape (n, 5)
    k12: np.ndarray = field(default=None)  # pump rate in force at each sample

    def __getitem__(self, level: str) -> np.ndarray:
        return self.populations[:, LEVELS.index(level)]

    @property
    def final(self) -> np.ndarray:
        return self.populations[-1]


def as_populations(N: Sequence[float]) -> np.ndarray:
    n = np.asarray(N, dtype=float)
    if n.shape != (5,):
        raise InvalidInputError(f"expected 5 level populations, got shape {n.shape}")
    if not np.all(np.isfinite(n)):
        raise InvalidInputError("populations must be finite")
    if np.any(n < -POP_TOL) or np.any(n > 1 + POP_TOL):
        raise InvalidInputError(f"populations must lie in [0, 1]: {n}")
    if abs(n.sum() - 1.0) > POP_TOL:
        raise InvalidInputError(f"populations must sum to 1, got {n.sum()!r}")
    return n


def ground_state() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0, 0.0])


def rate_matrix(rates: RateParams, k12: float, mw: MicrowaveDrive | None = None) -> np.ndarray:
    """5x5 generator; ``G[i, j]`` is the rate from level ``j`` to level ``i``."""
    if not (k12 >= 0 and math.isfinite(k12)):
        raise InvalidInputError(f"pump rate must be non-negative, got {k12}")
    rates.validate()
    G = np.zeros((5, 5))

    def channel(src, dst, k):
        G[dst, src] += k
        G[src, src] -= k

    channel(S0, S1, k12)
    channel(S1, S0, (1.0 - rates.phi_isc) * rates.k21_total)
    for i, p in enumerate(rates.branching):
        channel(S1, TX + i, rates.phi_isc * rates.k21_total * p)
    for i, k in enumerate(rates.decay):
        channel(TX + i, S0, k)
    for (a, b), w in zip(TRANSITION_PAIRS.values(), rates.spin_lattice):
        channel(TX + a, TX + b, w)
        channel(TX + b, TX + a, w)
    if mw is not None:
        a, b = pair_indices(mw.label)
        channel(TX + a, TX + b, mw.rate)
        channel(TX + b, TX + a, mw.rate)
    return G


def propagator(rates: RateParams, k12: float, t: float, mw: MicrowaveDrive | None = None) -> np.ndarray:
    return expm(rate_matrix(rates, k12, mw) * t)


def propagate(
    N: Sequence[float],
    schedule: PumpSchedule | Iterable,
    rates: RateParams,
    dt_out: float,
) -> Trajectory:
    """Evolve populations through a pump schedule.

    Samples are taken at ``t = 0, dt_out, 2 dt_out, ...`` on a global clock,
    plus the end of the schedule.  Each sample is the exact solution at that
    time, so ``dt_out`` controls resolution only.
    """
    if not (dt_out > 0 and math.isfinite(dt_out)):
        raise InvalidInputError(f"dt_out must be positive, got {dt_out}")
    schedule = PumpSchedule(schedule)
    if len(schedule) == 0:
        raise InvalidInputError("schedule must contain at least one segment")
    state = as_populations(N).copy()

    total = schedule.total_duration
    n_samples = int(math.floor(total / dt_out * (1 + 1e-12))) + 1
    grid = np.arange(n_samples) * dt_out
    if total - grid[-1] > 1e-9 * dt_out:
        grid = np.append(grid, total)
    pops = np.empty((grid.size, 5))
    k12s = np.empty(grid.size)
    pops[0] = state
    k12s[0] = schedule[0].k12

    t0 = 0.0
    idx = 1
    for seg in schedule:
        t1 = t0 + seg.duration
        G = rate_matrix(rates, seg.k12, seg.mw)
        step = None
        last_t, last_state = t0, state
        while idx < grid.size and grid[idx] <= t1 * (1 + 1e-12):
            dt = grid[idx] - last_t
            if step is None or not math.isclose(dt, dt_out, rel_tol=1e-9):
                P = expm(G * dt)
            else:
                P = step
            if step is None and math.isclose(dt, dt_out, rel_tol=1e-9):
                step = P
            last_state = P @ last_state
            last_t = grid[idx]
            pops[idx] = last_state
            k12s[idx] = seg.k12
            idx += 1
        state = expm(G * (t1 - last_t)) @ last_state if t1 > last_t else last_state
        t0 = t1
    return Trajectory(t=grid, populations=pops, k12=k12s)


def evolve_populations(N: Sequence[float], schedule, rates: RateParams) -> np.ndarray:
    """Final populations after a schedule (no sampling)."""
    state = np.asarray(N, dtype=float)
    for seg in PumpSchedule(schedule):
        state = propagator(rates, seg.k12, seg.duration, seg.mw) @ state
    return state


def emission_trace(traj: Trajectory, rates: RateParams, k12: float | None = None) -> np.ndarray:
    """Fluorescence rate ``(1 - phi_isc) k21 N1(t)`` in photons per molecule per second.

    In the weak-pump quasi-steady regime ``N1 ~ k12 N0 / k21`` so the trace
    is proportional to ``k12 N0(t)``.  ``k12`` is accepted for signature
    compatibility and is not needed because N1 is tracked explicitly.
    """
    return (1.0 - rates.phi_isc) * rates.k21_total * traj.populations[:, S1]


def emission_weights(rates: RateParams, k12: float, window: float) -> np.ndarray:
    """Row vector ``w`` with ``w @ N0`` = emission integrated over ``window``.

    Uses the augmented-matrix identity for ``int_0^T expm(G s) ds``.
    """
    if window <= 0:
        return np.zeros(5)
    G = rate_matrix(rates, k12)
    aug = np.zeros((10, 10))
    aug[:5, :5] = G
    aug[:5, 5:] = np.eye(5)
    integral = expm(aug * window)[:5, 5:]
    c = np.zeros(5)
    c[S1] = (1.0 - rates.phi_isc) * rates.k21_total
    return c @ integral


def integrated_emission(N: Sequence[float], rates: RateParams, k12: float, window: float) -> float:
    return float(emission_weights(rates, k12, window) @ np.asarray(N, dtype=float))


def swap_populations(N: Sequence[float], pair: str) -> np.ndarray:
    """Exchange the populations of the two sublevels of ``pair`` (ideal pi pulse)."""
    n = np.array(N, dtype=float)
    a, b = pair_indices(pair)
    n[[TX + a, TX + b]] = n[[TX + b, TX + a]]
    return n


def steady_state(
    rates: RateParams, k12: float, mw: MicrowaveDrive | None = None, tol: float = 1e-10
) -> np.ndarray:
    G = rate_matrix(rates, k12, mw)
    scale = max(np.max(np.abs(G)), 1e-300)
    ns = null_space(G / scale, rcond=tol)
    if ns.shape[1] != 1:
        raise AmbiguousSteadyStateError(
            f"generator has a {ns.shape[1]}-dimensional null space; steady state is not unique"
        )
    v = ns[:, 0]
    v = v / v.sum()
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


def slowest_relaxation_time(rates: RateParams, k12: float) -> float:
    """Inverse of the smallest non-zero decay rate of the generator."""
    ev = np.linalg.eigvals(rate_matrix(rates, k12))
    nonzero = np.abs(ev.real)[np.abs(ev.real) > 1e-9 * np.max(np.abs(ev.real))]
    return float(1.0 / nonzero.min())


def write_trajectory_csv(traj: Trajectory, rates: RateParams, path, header_lines: Sequence[str] = ()) -> None:
    em = emission_trace(traj, rates)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t_s", *LEVELS, "emission"])
        for t, row, e in zip(traj.t, traj.populations, em):
            w.writerow([f"{t:.9g}", *(f"{v:.9g}" for v in row), f"{e:.9g}"])
