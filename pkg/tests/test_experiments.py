import numpy as np
import pytest

from pentasense.config import load_config
from pentasense.experiments import DESCRIPTIONS, FIGURES, run_experiment

FAST = [k for k in FIGURES if not k.startswith("fig4")]


@pytest.fixture(scope="module")
def cfg():
    return load_config(None)


def test_every_figure_is_described():
    assert set(FIGURES) == set(DESCRIPTIONS)


@pytest.mark.parametrize("fig", FAST)
def test_fast_figures(fig, cfg):
    tables = run_experiment(fig, cfg)
    assert tables
    for t in tables:
        rows = np.atleast_2d(np.asarray(t.rows, float))
        assert rows.shape[1] == len(t.columns)
        assert np.all(np.isfinite(rows))


def test_fig1e_returns_to_ground(cfg):
    (t,) = run_experiment("fig1e", cfg)
    assert t.rows[-1, 1] > 0.99


def test_fig3a_optimum_moves_earlier_with_power(cfg):
    _, opt = run_experiment("fig3a", cfg)
    assert np.all(np.diff(opt.rows[:, 1]) < 0)


def test_unknown_figure(cfg):
    with pytest.raises(KeyError):
        run_experiment("fig9z", cfg)
