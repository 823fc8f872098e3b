"""Triplet spin Hamiltonian, eigensystems and transition tables.

All matrices are expressed in the zero-field eigenbasis ordered
``(|Tx>, |Ty>, |Tz>)``.  In that basis the spin-1 operators take the
form ``(S_k)_ij = -i eps_kij`` so that ``|Tk>`` is the state with zero
spin projection along molecular axis ``k``.

Energy ordering convention
--------------------------
The zero-field energies are taken as ``(D/3 + E, D/3 - E, -2D/3)``.  With
the negative E of pentacene (E ~ -53 MHz) this places Tx below Ty, and the
three transitions become ``Txy = 2|E|``, ``Txz = D + E`` and ``Tyz = D - E``
(106, 1339, 1445 MHz).  Measured lines sit at 108, 1340 and 1448 MHz; which of
the two high-frequency lines is Txz is not fixed by the measured frequencies
alone.  The choice here is the one that makes the Tyz line the inverted one
given the shipped kinetics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.transform import Rotation

from .constants import GAMMA_E, TRANSITION_LABELS, TRANSITION_PAIRS
from .errors import InvalidInputError

HERMITIAN_TOL = 1e-9

# Spin-1 operators in the (Tx, Ty, Tz) basis: (S_k)_ij = -i eps_kij
_EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_i, _j, _k] = 1.0
    _EPS[_i, _k, _j] = -1.0
SX, SY, SZ = (-1j * _EPS[k] for k in range(3))
SPIN_OPS = (SX, SY, SZ)


@dataclass(frozen=True)
class ZfsParams:
    """Zero-field splitting parameters in MHz."""

    D: float = 1392.0
    E: float = -53.0

    def __post_init__(self):
        if not (math.isfinite(self.D) and math.isfinite(self.E)):
            raise InvalidInputError("zero-field parameters must be finite")
        if self.D < 0:
            raise InvalidInputError(f"D must be non-negative, got {self.D}")
        if abs(self.E) > self.D / 3 + 1e-12:
            raise InvalidInputError(f"|E| must not exceed D/3 (D={self.D}, E={self.E})")


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field in mT."""

    Bx: float = 0.0
    By: float = 0.0
    Bz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(b) for b in (self.Bx, self.By, self.Bz)):
            raise InvalidInputError(f"non-finite field components {self}")

    @classmethod
    def along(cls, axis: Sequence[float], magnitude: float) -> "FieldVector":
        n = np.asarray(axis, dtype=float)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0:
            raise InvalidInputError(f"invalid field axis {axis!r}")
        return cls(*(magnitude * n / norm))

    def as_array(self) -> np.ndarray:
        return np.array([self.Bx, self.By, self.Bz], dtype=float)

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class Orientation:
    """Intrinsic z-y-z Euler angles (radians) of the molecular frame in the lab frame.

    A lab-frame vector ``v`` has molecular-frame components
    ``rotation().inv().apply(v)``.
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        wrapped = [math.fmod(a, 2 * math.pi) for a in (self.alpha, self.beta, self.gamma)]
        if not all(math.isfinite(a) for a in wrapped):
            raise InvalidInputError("orientation angles must be finite")
        object.__setattr__(self, "alpha", wrapped[0] % (2 * math.pi))
        object.__setattr__(self, "beta", wrapped[1] % (2 * math.pi))
        object.__setattr__(self, "gamma", wrapped[2] % (2 * math.pi))

    def rotation(self) -> Rotation:
        return Rotation.from_euler("ZYZ", [self.alpha, self.beta, self.gamma])

    @classmethod
    def from_rotation(cls, rot: Rotation) -> "Orientation":
        return cls(*rot.as_euler("ZYZ"))

    def to_molecular(self, vec: np.ndarray) -> np.ndarray:
        return self.rotation().inv().apply(np.asarray(vec, dtype=float))


IDENTITY = Orientation()


@dataclass(frozen=True)
class SiteFamily:
    """One orientation class of molecules and its statistical weight."""

    orientation: Orientation = IDENTITY
    weight: float = 1.0


@dataclass(frozen=True)
class TripletEigensystem:
    energies: np.ndarray
    eigenvectors: np.ndarray  # columns are eigenvectors

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return v @ np.diag(self.energies) @ v.conj().T


@dataclass(frozen=True)
class Transition:
    label: str
    frequency: float
    dipole_weight: float
    levels: tuple[int, int] = field(default=(0, 1), compare=False)


def zfs_hamiltonian(zfs: ZfsParams) -> np.ndarray:
    """Zero-field part, diagonal ``(D/3 + E, D/3 - E, -2D/3)`` in MHz."""
    sx2, sy2, sz2 = (np.real(s @ s) for s in SPIN_OPS)
    return (zfs.D * (sz2 - 2.0 / 3.0 * np.eye(3)) - zfs.E * (sx2 - sy2)).astype(complex)


def zeeman_hamiltonian(b_molecular: np.ndarray, gamma_e: float = GAMMA_E) -> np.ndarray:
    b = np.asarray(b_molecular, dtype=float)
    return gamma_e * (b[0] * SX + b[1] * SY + b[2] * SZ)


def build_hamiltonian(
    zfs: ZfsParams,
    field: FieldVector = FieldVector(),
    orient: Orientation = IDENTITY,
    gamma_e: float = GAMMA_E,
) -> np.ndarray:
    """Return the 3x3 triplet Hamiltonian (MHz) for a lab-frame field.

    The field is rotated into the molecular frame given by ``orient``
    before the Zeeman term ``gamma_e B.S`` is added to the zero-field part.
    """
    if not isinstance(field, FieldVector):
        field = FieldVector(*field)
    b_mol = orient.to_molecular(field.as_array())
    return zfs_hamiltonian(zfs) + zeeman_hamiltonian(b_mol, gamma_e)


def eigensystem(H: np.ndarray) -> TripletEigensystem:
    H = np.asarray(H, dtype=complex)
    if H.shape != (3, 3):
        raise InvalidInputError(f"expected a 3x3 matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InvalidInputError("Hamiltonian contains non-finite entries")
    if np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL:
        raise InvalidInputError("Hamiltonian is not Hermitian")
    e, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    return TripletEigensystem(energies=e, eigenvectors=v)


def _default_drive_axis() -> np.ndarray:
    return np.ones(3) / math.sqrt(3.0)


def _label_levels(vectors: np.ndarray) -> np.ndarray:
    """Map zero-field character k -> eigenvector column, maximising total overlap."""
    weights = np.abs(vectors) ** 2  # rows: zero-field state, cols: eigenvector
    rows, cols = linear_sum_assignment(-weights)
    order = np.empty(3, dtype=int)
    order[rows] = cols
    return order


def transition_table(
    es: TripletEigensystem,
    drive_axis: Sequence[float] | None = None,
    level_order: Sequence[int] | None = None,
) -> list[Transition]:
    """Transitions ``Txy, Txz, Tyz`` for an eigensystem.

    Each eigenvector is identified with the zero-field state it overlaps most
    (as a one-to-one assignment) unless ``level_order`` is given, in which case
    ``level_order[k]`` is the eigenvector index carrying ``|Tk>`` character.
    Dipole weights are ``|<i|S.n|j>|^2`` for the unit drive axis ``n``
    (molecular frame).
    """
    n = _default_drive_axis() if drive_axis is None else np.asarray(drive_axis, float)
    n = n / np.linalg.norm(n)
    s_n = n[0] * SX + n[1] * SY + n[2] * SZ
    order = _label_levels(es.eigenvectors) if level_order is None else np.asarray(level_order)
    out = []
    for label in TRANSITION_LABELS:
        a, b = TRANSITION_PAIRS[label]
        i, j = order[a], order[b]
        vi, vj = es.eigenvectors[:, i], es.eigenvectors[:, j]
        weight = abs(vi.conj() @ s_n @ vj) ** 2
        freq = abs(es.energies[i] - es.energies[j])
        out.append(Transition(label, float(freq), float(weight), (int(i), int(j))))
    return out


def transition_frequencies(
    zfs: ZfsParams, field: FieldVector = FieldVector(), orient: Orientation = IDENTITY
) -> dict[str, float]:
    es = eigensystem(build_hamiltonian(zfs, field, orient))
    return {t.label: t.frequency for t in transition_table(es)}


def zeeman_sweep(
    zfs: ZfsParams,
    axis: Sequence[float],
    B_values: Iterable[float],
    orient: Orientation = IDENTITY,
) -> np.ndarray:
    """Transition frequencies along a field sweep.

    Returns an array of rows ``(B, f_xy, f_xz, f_yz)``.  Level labels are
    carried adiabatically: the sweep is anchored at zero field and every
    eigenvector is matched to the one it overlaps most at the previous point,
    so lines stay continuous even where the zero-field character is fully
    mixed.  ``B_values`` must be sorted; negative values are allowed.
    """
    B = np.asarray(list(B_values), dtype=float)
    if B.size == 0:
        raise InvalidInputError("B_values must be non-empty")
    if not np.all(np.isfinite(B)):
        raise InvalidInputError("B_values must be finite")
    if np.any(np.diff(B) < 0):
        raise InvalidInputError("B_values must be sorted ascending")
    axis_arr = np.asarray(axis, dtype=float)
    axis_arr = axis_arr / np.linalg.norm(axis_arr)

    def solve(b):
        return eigensystem(build_hamiltonian(zfs, FieldVector(*(b * axis_arr)), orient))

    # Track outward from the point closest to zero field in both directions.
    start = int(np.argmin(np.abs(B)))
    rows = np.empty((B.size, 4))
    es0 = solve(0.0)
    ref_order = _label_levels(es0.eigenvectors)
    ref_vecs = es0.eigenvectors[:, ref_order]
    for direction in (range(start, B.size), range(start, -1, -1)):
        prev_vecs = ref_vecs
        prev_b = 0.0
        for idx in direction:
            b = B[idx]
            # Sub-step long jumps so overlap tracking stays unambiguous.
            n_sub = max(1, int(math.ceil(abs(b - prev_b) / 0.05)))
            for bb in np.linspace(prev_b, b, n_sub + 1)[1:]:
                es = solve(bb)
                overlap = np.abs(prev_vecs.conj().T @ es.eigenvectors) ** 2
                r, c = linear_sum_assignment(-overlap)
                order = np.empty(3, dtype=int)
                order[r] = c
                prev_vecs = es.eigenvectors[:, order]
            prev_b = b
            es = solve(b)
            table = transition_table(es, level_order=order)
            rows[idx] = [b] + [t.frequency for t in table]
    return rows


def write_sweep_csv(rows: np.ndarray, path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["B_mT", "f_xy_MHz", "f_xz_MHz", "f_yz_MHz"])
        for row in rows:
            w.writerow([f"{v:.9g}" for v in row])
