"""Physical constants in the unit system used throughout the package.

Frequencies are in MHz, fields in mT, times in seconds unless a name says
otherwise.
"""

import math

#: Electron gyromagnetic ratio, MHz/mT.
GAMMA_E = 28.0

#: hbar / (g_e mu_B) in T*s, i.e. 1 / (2 pi * 28 GHz/T).
HBAR_OVER_GMU = 1.0 / (2.0 * math.pi * GAMMA_E * 1e9)

TRANSITION_LABELS = ("Txy", "Txz", "Tyz")

#: Index pairs into the (Tx, Ty, Tz) basis for every transition label.
TRANSITION_PAIRS = {"Txy": (0, 1), "Txz": (0, 2), "Tyz": (1, 2)}


def pair_indices(label: str) -> tuple[int, int]:
    try:
        return TRANSITION_PAIRS[label]
    except KeyError:
        raise ValueError(
            f"unknown transition label {label!r}; expected one of {TRANSITION_LABELS}"
        ) from None
