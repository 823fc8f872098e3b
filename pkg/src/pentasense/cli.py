"""Command-line interface.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 a fit did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coherent import PROTOCOLS, run_protocol
from .config import ExperimentConfig, load_config
from .constants import TRANSITION_LABELS
from .errors import ConfigError, InvalidInputError, NumericError
from .experiments import DESCRIPTIONS, FIGURES, run_experiment
from .fitting import MODEL_KINDS, fit_auto
from .hamiltonian import FieldVector, Orientation, build_hamiltonian, eigensystem, transition_table
from .io import Table, read_xy, write_table
from .kinetics import LEVELS, emission_trace, ground_state, propagate
from .sensitivity import pulsed_report, report_csv, report_text
from .spectra import cw_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config_hash": cfg.hash, "seed": cfg.seed}


def _emit(tables, cfg, args, command) -> list[Path]:
    out_dir = args.out_dir or cfg.output.get("dir", ".")
    fmt = args.format or cfg.output.get("format", "csv")
    paths = []
    for t in tables:
        paths += write_table(t, out_dir, _common(cfg, command), svg=(fmt == "csv+svg"))
    for p in paths:
        print(p)
    return paths


def cmd_levels(args, cfg):
    field = FieldVector(*args.field) if args.field else cfg.field
    orient = Orientation(*np.radians(args.euler)) if args.euler else cfg.sites[0].orientation
    es = eigensystem(build_hamiltonian(cfg.zfs, field, orient))
    table = transition_table(es)
    rows = np.array([[i, t.frequency, t.dipole_weight] for i, t in enumerate(table)])
    for t in table:
        print(f"{t.label}: {t.frequency:.6f} MHz  weight {t.dipole_weight:.4f}")
    print("energies (MHz): " + " ".join(f"{e:.6f}" for e in es.energies))
    meta = {"field_mT": f"{field.Bx} {field.By} {field.Bz}", "labels": " ".join(TRANSITION_LABELS)}
    _emit([Table("levels", ("index", "frequency_MHz", "dipole_weight"), rows, ("1", "MHz", "1"), meta, plot=False)],
          cfg, args, "levels")
    return EXIT_OK


def cmd_kinetics(args, cfg):
    sched = [(args.duration, args.k12)]
    if args.dark > 0:
        sched.append((args.dark, 0.0))
    traj = propagate(ground_state(), sched, cfg.rates, args.dt)
    rows = np.column_stack([traj.t, traj.populations, emission_trace(traj, cfg.rates)])
    t = Table("kinetics", ("t_s",) + LEVELS + ("emission",), rows, ("s",) + ("1",) * 5 + ("1/s",),
              {"k12": args.k12, "duration_s": args.duration, "dark_s": args.dark})
    print("final populations: " + " ".join(f"{lv}={v:.6g}" for lv, v in zip(LEVELS, traj.final)))
    _emit([t], cfg, args, "kinetics")
    return EXIT_OK


def cmd_odmr(args, cfg):
    field = FieldVector(*args.field) if args.field else cfg.field
    f = np.arange(args.fmin, args.fmax + args.step / 2, args.step)
    k12 = args.k12 if args.k12 is not None else cfg.k12_cw
    spec = cw_spectrum(cfg.zfs, field, cfg.rates, k12, cfg.lineshape, cfg.hyperfine, f, cfg.sites)
    for lab, freq, amp, w in spec.lines:
        print(f"{lab}: {freq:.4f} MHz  contrast {amp:+.4g}  weight {w:.3g}")
    t = Table("odmr", ("f_MHz", "contrast"), np.column_stack([spec.freq, spec.contrast]), ("MHz", "1"),
              {"status": spec.status, "k12": k12})
    _emit([t], cfg, args, "odmr")
    return EXIT_OK


def cmd_pulse(args, cfg):
    sweep = np.linspace(args.start, args.stop, args.points)
    params = cfg.protocol
    if args.ensemble:
        params = params.with_updates(n_ensemble=args.ensemble)
    curve = run_protocol(args.protocol, sweep, cfg.rates, cfg.noise, params, seed=cfg.seed, workers=args.workers)
    t = Table(f"pulse_{args.protocol}", ("sweep_s", "contrast", "contrast_stderr"),
              np.column_stack([curve.x, curve.contrast, curve.stderr]), ("s", "1", "1"),
              {"protocol": args.protocol, "n_ensemble": params.n_ensemble})
    _emit([t], cfg, args, "pulse")
    return EXIT_OK


def cmd_sensitivity(args, cfg):
    s = cfg.sensitivity
    times = dict(zip(("ramsey", "echo", "cpmg"), args.times))
    rows = pulsed_report(times, s["t_init"], s["t_readout"], s["contrast"], s["photon_rate"], s["volume"])
    print(report_text(rows))
    out_dir = Path(args.out_dir or cfg.output.get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sensitivity.csv"
    header = "".join(f"# {k}: {v}\n" for k, v in {"tool": f"pentasense {__version__}", **_common(cfg, "sensitivity")}.items())
    path.write_text(header + report_csv(rows))
    print(path)
    return EXIT_OK


def cmd_fit(args, cfg):
    try:
        x, y, sigma = read_xy(args.input)
    except (OSError, ValueError, IndexError) as exc:
        raise InvalidInputError(f"cannot read {args.input}: {exc}") from exc
    res = fit_auto(args.model, x, y, sigma)
    out = {"model": args.model, "input": str(args.input), **res.as_dict()}
    print(json.dumps(out, indent=2))
    if args.results:
        path = Path(args.results)
        new = not path.exists()
        with path.open("a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(["input", "model", "param", "value", "stderr", "converged", "residual_norm"])
            for n, v, e in zip(res.names, res.params, res.stderr):
                w.writerow([args.input, args.model, n, f"{v:.10g}", f"{e:.6g}", res.converged, f"{res.residual_norm:.6g}"])
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_reproduce(args, cfg):
    tables = run_experiment(args.figure, cfg, workers=args.workers)
    _emit(tables, cfg, args, f"reproduce {args.figure}")
    if any(t.meta.get("fit_converged") is False for t in tables):
        print("warning: a fit did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_list(args, cfg):
    for k in FIGURES:
        print(f"{k}  {DESCRIPTIONS[k]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults to the shipped profile)")
    common.add_argument("--seed", type=int, help="master RNG seed (overrides the config)")
    common.add_argument("--out-dir", help="directory for output files")
    common.add_argument("--format", choices=("csv", "csv+svg"), help="output format")
    common.add_argument("--workers", type=int, default=1, help="threads for sweep points")

    p = _Parser(prog="pentasense", description="Photoexcited triplet ODMR and magnetometry simulator.")
    p.add_argument("--version", action="version", version=f"pentasense {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("levels", parents=[common], help="triplet levels and transitions")
    s.add_argument("--field", type=float, nargs=3, metavar=("BX", "BY", "BZ"), help="lab field, mT")
    s.add_argument("--euler", type=float, nargs=3, metavar=("A", "B", "G"), help="z-y-z Euler angles, degrees")
    s.set_defaults(func=cmd_levels)

    s = sub.add_parser("kinetics", parents=[common], help="population dynamics under a pump pulse")
    s.add_argument("--k12", type=float, default=1e9, help="pump rate, 1/s")
    s.add_argument("--duration", type=float, default=65e-9, help="pump duration, s")
    s.add_argument("--dark", type=float, default=100e-6, help="dark time after the pulse, s")
    s.add_argument("--dt", type=float, default=1e-7, help="output sampling, s")
    s.set_defaults(func=cmd_kinetics)

    s = sub.add_parser("odmr", parents=[common], help="cw ODMR spectrum")
    s.add_argument("--field", type=float, nargs=3, metavar=("BX", "BY", "BZ"), help="lab field, mT")
    s.add_argument("--fmin", type=float, default=50.0)
    s.add_argument("--fmax", type=float, default=1550.0)
    s.add_argument("--step", type=float, default=0.25)
    s.add_argument("--k12", type=float, help="cw pump rate, 1/s (default from config powers)")
    s.set_defaults(func=cmd_odmr)

    s = sub.add_parser("pulse", parents=[common], help="coherent control protocol sweep")
    s.add_argument("protocol", choices=PROTOCOLS)
    s.add_argument("--start", type=float, default=0.0, help="first sweep value, s")
    s.add_argument("--stop", type=float, default=1e-6, help="last sweep value, s")
    s.add_argument("--points", type=int, default=51)
    s.add_argument("--ensemble", type=int, help="ensemble size override")
    s.set_defaults(func=cmd_pulse)

    s = sub.add_parser("sensitivity", parents=[common], help="pulsed sensitivity table")
    s.add_argument("--times", type=float, nargs=3, default=(487e-9, 2.7e-6, 18.4e-6),
                   metavar=("T2STAR", "T2", "T2DD"), help="coherence times, s")
    s.set_defaults(func=cmd_sensitivity)

    s = sub.add_parser("fit", parents=[common], help="fit a model to x,y[,sigma] CSV data")
    s.add_argument("input", help="CSV file")
    s.add_argument("--model", choices=MODEL_KINDS, required=True)
    s.add_argument("--results", help="append parameters to this CSV")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("reproduce", parents=[common], help="run a figure experiment")
    s.add_argument("figure", choices=tuple(FIGURES))
    s.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("list-figures", parents=[common], help="list figure experiments")
    s.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.workers < 1:
            raise InvalidInputError("--workers must be at least 1")
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
