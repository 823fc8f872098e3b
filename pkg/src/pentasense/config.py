"""Experiment configuration: JSON files validated against a published schema.

A config file holds overrides on top of a shipped profile.  Loading merges
the two, validates the result and builds typed parameter objects.  Unknown
keys are rejected at every level.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .coherent import NoiseModel, ProtocolParams
from .errors import ConfigError, InvalidInputError
from .hamiltonian import FieldVector, Orientation, SiteFamily, ZfsParams
from .kinetics import RateParams
from .profile import DEFAULT_PROFILE, load_profile
from .spectra import HF_MODELS, HyperfineSet, LineshapeConfig

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC3 = {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "profile": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "zfs": _obj({"D": _NONNEG, "E": _NUM}, ["D", "E"]),
        "field": _obj({"Bx": _NUM, "By": _NUM, "Bz": _NUM}),
        "sites": {
            "type": "array",
            "minItems": 1,
            "items": _obj({"alpha": _NUM, "beta": _NUM, "gamma": _NUM, "weight": _POS}),
        },
        "rates": _obj(
            {
                "k21_total": _NONNEG,
                "phi_isc": {"type": "number", "minimum": 0, "maximum": 1},
                "branching": _VEC3,
                "decay": _VEC3,
                "spin_lattice": _VEC3,
            },
            ["k21_total", "phi_isc", "branching", "decay", "spin_lattice"],
        ),
        "pump": _obj(
            {
                "kappa_cw": _POS,
                "kappa_pulse": _POS,
                "readout_power": _POS,
                "cw_power": _POS,
                "init_k12": _NONNEG,
                "init_duration": _POS,
            },
            ["kappa_cw", "kappa_pulse", "readout_power", "cw_power", "init_k12", "init_duration"],
        ),
        "noise": _obj(
            {
                "static_width": _NONNEG,
                "static_shape": {"enum": ["gaussian", "lorentzian"]},
                "ou_amplitude": _NONNEG,
                "ou_correlation_time": _POS,
                "dephasing_rate": _NONNEG,
                "drive_spread": _NONNEG,
            }
        ),
        "protocol": _obj(
            {
                "label": {"enum": ["Txy", "Txz", "Tyz"]},
                "rabi": _POS,
                "ramsey_offset": _NUM,
                "cpmg_spacing": _POS,
                "readout_window": _POS,
                "init_settle": _NONNEG,
                "n_ensemble": {"type": "integer", "minimum": 1},
            }
        ),
        "lineshape": _obj({"l0": _POS, "a": _NONNEG, "power": _NONNEG, "model": {"enum": list(HF_MODELS)}}),
        "hyperfine": {"type": "array", "items": _NONNEG},
        "saturation": _obj({"c_max": _NUM, "p_sat": _POS}),
        "polarization": _obj({"depth": {"type": "number", "minimum": 0, "maximum": 1}, "offset_deg": _NUM}),
        "sensitivity": _obj(
            {
                "t_init": _POS,
                "t_readout": _POS,
                "contrast": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "photon_rate": _POS,
                "volume": _POS,
            }
        ),
        "sweeps": _obj(
            {
                "zeeman_axis": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "zeeman_max": _POS,
                "zeeman_points": {"type": "integer", "minimum": 2},
                "bias_field": _NUM,
                "freq_step": _POS,
                "linewidth_powers": {"type": "array", "items": _POS, "minItems": 2},
                "linewidth_noise": _NONNEG,
            }
        ),
        "output": _obj({"dir": {"type": "string"}, "format": {"enum": ["csv", "csv+svg"]}}),
    }
)


@dataclass
class ExperimentConfig:
    raw: dict
    zfs: ZfsParams
    field: FieldVector
    sites: tuple
    rates: RateParams
    noise: NoiseModel
    protocol: ProtocolParams
    lineshape: LineshapeConfig
    hyperfine: HyperfineSet
    pump: dict = field(default_factory=dict)
    saturation: dict = field(default_factory=dict)
    polarization: dict = field(default_factory=dict)
    sensitivity: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def k12_cw(self) -> float:
        return self.pump["kappa_cw"] * self.pump["cw_power"]

    @property
    def k12_readout(self) -> float:
        return self.pump["kappa_cw"] * self.pump["readout_power"]


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(data: dict) -> None:
    """Schema check plus the cross-field constraints the schema cannot express."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e)}: {e.message}", path=_path(e))
    rates = data.get("rates")
    if rates is not None:
        s = sum(rates["branching"])
        if abs(s - 1.0) > 1e-9:
            raise ConfigError(f"rates.branching: fractions must sum to 1, got {s!r}", path="rates.branching")
    zfs = data.get("zfs")
    if zfs is not None and abs(zfs["E"]) > zfs["D"] / 3 + 1e-12:
        raise ConfigError("zfs.E: |E| must not exceed D/3", path="zfs.E")


def from_dict(overrides: dict | None = None, seed: int | None = None) -> ExperimentConfig:
    overrides = {} if overrides is None else overrides
    if not isinstance(overrides, dict):
        raise ConfigError("config must be a JSON object", path="<root>")
    validate(overrides)
    name = overrides.get("profile", DEFAULT_PROFILE)
    try:
        base = load_profile(name)
    except FileNotFoundError:
        raise ConfigError(f"profile: unknown profile {name!r}", path="profile") from None
    base.setdefault("seed", 0)
    base.setdefault("field", {"Bx": 0.0, "By": 0.0, "Bz": 0.0})
    base.setdefault("output", {"dir": ".", "format": "csv"})
    data = _merge(base, overrides)
    data["profile"] = name
    if seed is not None:
        data["seed"] = int(seed)
    validate(data)
    return build(data)


def build(data: dict) -> ExperimentConfig:
    try:
        pump = dict(data["pump"])
        fld = {"Bx": 0.0, "By": 0.0, "Bz": 0.0, **data.get("field", {})}
        sites = tuple(
            SiteFamily(
                Orientation(s.get("alpha", 0.0), s.get("beta", 0.0), s.get("gamma", 0.0)),
                s.get("weight", 1.0),
            )
            for s in data["sites"]
        )
        protocol = ProtocolParams(
            **data["protocol"],
            k12_readout=pump["kappa_cw"] * pump["readout_power"],
            init_k12=pump["init_k12"],
            init_duration=pump["init_duration"],
        )
        return ExperimentConfig(
            raw=data,
            zfs=ZfsParams(**data["zfs"]),
            field=FieldVector(**fld),
            sites=sites,
            rates=RateParams.from_dict(data["rates"]),
            noise=NoiseModel(**data["noise"]),
            protocol=protocol,
            lineshape=LineshapeConfig(**data["lineshape"]),
            hyperfine=HyperfineSet(tuple(data["hyperfine"])),
            pump=pump,
            saturation=dict(data["saturation"]),
            polarization=dict(data["polarization"]),
            sensitivity=dict(data["sensitivity"]),
            sweeps=dict(data["sweeps"]),
            output=dict(data.get("output", {})),
            seed=int(data.get("seed", 0)),
        )
    except (InvalidInputError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path=None, seed: int | None = None) -> ExperimentConfig:
    """Load and validate a config file; ``None`` gives the shipped profile."""
    if path is None:
        return from_dict({}, seed)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}", path=str(p)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{p}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}", path=str(p)
        ) from exc
    return from_dict(data, seed)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n")

