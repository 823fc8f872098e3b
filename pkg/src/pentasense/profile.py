"""Access to shipped parameter profiles (``pentasense/data/<name>.json``)."""

from __future__ import annotations

import copy
import json
from functools import lru_cache
from importlib import resources

from .coherent import NoiseModel, ProtocolParams
from .hamiltonian import ZfsParams
from .kinetics import RateParams

DEFAULT_PROFILE = "pentacene_rt"


@lru_cache(maxsize=None)
def _load(name: str) -> dict:
    text = resources.files("pentasense.data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_profile(name: str = DEFAULT_PROFILE) -> dict:
    """A fresh copy of the named profile as plain data."""
    return copy.deepcopy(_load(name))


def profile_zfs(name: str = DEFAULT_PROFILE) -> ZfsParams:
    return ZfsParams(**_load(name)["zfs"])


def profile_rates(name: str = DEFAULT_PROFILE) -> RateParams:
    return RateParams.from_dict(_load(name)["rates"])


def profile_noise(name: str = DEFAULT_PROFILE) -> NoiseModel:
    return NoiseModel(**_load(name)["noise"])


def profile_protocol(name: str = DEFAULT_PROFILE) -> ProtocolParams:
    p = _load(name)
    pump = p["pump"]
    return ProtocolParams(
        **p["protocol"],
        k12_readout=pump["kappa_cw"] * pump["readout_power"],
        init_k12=pump["init_k12"],
        init_duration=pump["init_duration"],
    )
