import json

import pytest

from pentasense.coherent import ProtocolParams
from pentasense.config import SCHEMA, config_hash, from_dict, load_config, save_config
from pentasense.errors import ConfigError
from pentasense.kinetics import RateParams


def test_default_profile_matches_code_defaults():
    cfg = load_config(None)
    assert cfg.rates == RateParams()
    assert cfg.protocol == ProtocolParams()
    assert cfg.seed == 0


def test_overrides_merge_and_change_hash():
    a = from_dict({})
    b = from_dict({"noise": {"static_width": 0.1}})
    assert b.noise.static_width == 0.1
    assert b.noise.ou_amplitude == a.noise.ou_amplitude
    assert a.hash != b.hash
    assert from_dict({}, seed=3).seed == 3


def test_round_trip(tmp_path):
    cfg = from_dict({"seed": 11, "field": {"Bz": 2.5}})
    path = tmp_path / "c.json"
    save_config(cfg, path)
    again = load_config(path)
    assert again.hash == cfg.hash
    assert again.field.Bz == 2.5


@pytest.mark.parametrize(
    "data,where",
    [
        ({"rates": {"k21_total": 1}}, "rates"),
        ({"noise": {"static_width": -1}}, "noise.static_width"),
        ({"bogus": 1}, "<root>"),
        ({"protocol": {"label": "Tab"}}, "protocol.label"),
        ({"zfs": {"D": 100, "E": 50}}, "zfs.E"),
    ],
)
def test_invalid_values_name_the_field(data, where):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.path == where


def test_branching_must_sum_to_one():
    rates = RateParams().to_dict()
    rates["branching"] = [0.5, 0.3, 0.1]
    with pytest.raises(ConfigError, match="rates.branching"):
        from_dict({"rates": rates})


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json")


def test_hash_is_key_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})


def test_published_schema_in_sync():
    from pathlib import Path

    doc = Path(__file__).resolve().parents[1] / "docs" / "config.schema.json"
    published = json.loads(doc.read_text())
    published.pop("$schema")
    published.pop("title")
    assert published == json.loads(json.dumps(SCHEMA))
