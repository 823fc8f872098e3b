import json

import numpy as np
import pytest

from pentasense.cli import main
from pentasense.io import Table, read_body, read_xy, write_table


def run(args, tmp_path):
    return main(args + ["--out-dir", str(tmp_path)])


def test_levels(tmp_path, capsys):
    assert run(["levels"], tmp_path) == 0
    out = capsys.readouterr().out
    assert "Txy: 106.000000 MHz" in out
    text = (tmp_path / "levels.csv").read_text()
    assert "# tool: pentasense" in text and "# config_hash:" in text


def test_kinetics(tmp_path):
    assert run(["kinetics", "--dark", "1e-6", "--dt", "1e-8"], tmp_path) == 0
    body = read_body(tmp_path / "kinetics.csv").splitlines()
    assert body[0] == "t_s,N0,N1,Nx,Ny,Nz,emission"


def test_odmr_and_svg(tmp_path):
    assert run(["odmr", "--fmin", "90", "--fmax", "120", "--format", "csv+svg"], tmp_path) == 0
    assert (tmp_path / "odmr.svg").read_text().startswith("<svg")


def test_pulse(tmp_path):
    assert run(["pulse", "rabi", "--stop", "1e-7", "--points", "5", "--ensemble", "10"], tmp_path) == 0
    x, y, s = read_xy(tmp_path / "pulse_rabi.csv")
    assert x.size == 5 and s is not None


def test_sensitivity(tmp_path, capsys):
    assert run(["sensitivity"], tmp_path) == 0
    assert "pT/rHz" in capsys.readouterr().out
    assert (tmp_path / "sensitivity.csv").exists()


def test_fit_success_and_results_file(tmp_path, capsys):
    x = np.linspace(0, 60, 30)
    data = tmp_path / "d.csv"
    data.write_text("x,y\n" + "".join(f"{a},{np.exp(-a / 12)}\n" for a in x))
    res = tmp_path / "res.csv"
    assert main(["fit", str(data), "--model", "mono_exponential", "--results", str(res)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["params"]["T"] == pytest.approx(12, rel=1e-6)
    assert res.read_text().count("\n") == 4


def test_fit_nonconverged_exit_code(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("0,1\n0,1\n0,1\n0,1\n")
    assert main(["fit", str(data), "--model", "sqrt_saturation"]) == 4


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"noise": {"static_width": -1}}')
    assert main(["levels", "--config", str(bad)]) == 2
    assert "noise.static_width" in capsys.readouterr().err
    assert main(["fit", str(tmp_path / "missing.csv"), "--model", "mono_exponential"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["nosuchcommand"])
    assert exc.value.code == 2


def test_list_figures(capsys):
    assert main(["list-figures"]) == 0
    assert "fig4e" in capsys.readouterr().out


def test_reproduce_fast_figure(tmp_path):
    assert run(["reproduce", "fig2h", "--seed", "1"], tmp_path) == 0
    assert "# seed: 1" in (tmp_path / "fig2h.csv").read_text()


def test_write_table_formats(tmp_path):
    t = Table("t", ("a", "b"), np.array([[1.0, float("nan")], [1 / 3, 2e-12]]), ("s", "1"), {"k": "v"})
    (path,) = write_table(t, tmp_path, {"seed": 0})
    assert read_body(path) == "a,b\n1,nan\n0.3333333333,2e-12\n"
