"""Registry of figure experiments.

Each entry turns an :class:`~pentasense.config.ExperimentConfig` into one or
more :class:`~pentasense.io.Table` artifacts.  Everything stochastic draws
from the config seed, so a (config, seed) pair always produces the same
numbers regardless of the worker count.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .calibration import SWEEPS, measure
from .config import ExperimentConfig
from .constants import TRANSITION_LABELS
from .fitting import fit_auto, fourier_peak
from .hamiltonian import FieldVector, zeeman_sweep
from .io import Table
from .kinetics import (
    LEVELS,
    PumpSchedule,
    emission_trace,
    evolve_populations,
    ground_state,
    propagate,
    slowest_relaxation_time,
    steady_state,
    swap_populations,
)
from .spectra import (
    ProtocolAConfig,
    ProtocolBConfig,
    broadened_width,
    cw_spectrum,
    protocol_A_map,
    protocol_B_map,
)

POP_UNITS = ("s",) + ("1",) * 5 + ("1/s",)


def _trajectory_table(name, traj, rates, meta=None) -> Table:
    em = emission_trace(traj, rates)
    rows = np.column_stack([traj.t, traj.populations, em])
    return Table(name, ("t_s",) + LEVELS + ("emission",), rows, POP_UNITS, meta or {})


def _concat(trajs):
    t, p = [], []
    offset = 0.0
    for k, tr in enumerate(trajs):
        sl = slice(None) if k == 0 else slice(1, None)
        t.append(tr.t[sl] + offset)
        p.append(tr.populations[sl])
        offset += tr.t[-1]
    out = trajs[0]
    return type(out)(np.concatenate(t), np.concatenate(p))


def fig1e(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    r = cfg.rates
    k12, dur = cfg.pump["init_k12"], cfg.pump["init_duration"]
    t_dark = 10 * slowest_relaxation_time(r, 0.0)
    a = propagate(ground_state(), [(dur, k12)], r, dur / 65)
    b = propagate(a.final, [(t_dark, 0.0)], r, t_dark / 1000)
    traj = _concat([a, b])
    return [_trajectory_table("fig1e", traj, r, {"pulse_k12": k12, "pulse_s": dur, "N0_final": f"{traj.final[0]:.6f}"})]


def fig1f(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    r = cfg.rates
    k12, dur = cfg.pump["init_k12"], cfg.pump["init_duration"]
    traj = propagate(ground_state(), [(dur, k12), (1e-6, 0.0)], r, 1e-9)
    end = evolve_populations(ground_state(), [(dur, k12)], r)
    return [_trajectory_table("fig1f", traj, r, {"Nx_pulse_end": f"{end[2]:.6f}"})]


def fig1g(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    r = cfg.rates
    k12 = 1e4
    t_end = 10 * slowest_relaxation_time(r, k12)
    traj = propagate(ground_state(), [(t_end, k12)], r, t_end / 1000)
    ss = steady_state(r, k12)
    meta = {"k12": k12, "steady_state": " ".join(f"{lv}={v:.6g}" for lv, v in zip(LEVELS, ss))}
    return [_trajectory_table("fig1g", traj, r, meta)]


def fig1h(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    r = cfg.rates
    p = cfg.protocol
    sched = [(p.init_duration, p.init_k12)] + ([(p.init_settle, 0.0)] if p.init_settle > 0 else [])
    N = evolve_populations(ground_state(), sched, r)
    window = p.readout_window
    cols, traces = ["t_s"], []
    for lab in (None, "Txy", "Txz"):
        start = N if lab is None else swap_populations(N, lab)
        traj = propagate(start, [(window, cfg.k12_readout)], r, window / 550)
        traces.append(emission_trace(traj, r))
        cols.append("emission_ref" if lab is None else f"emission_pi_{lab}")
    rows = np.column_stack([traj.t] + traces)
    return [Table("fig1h", cols, rows, ("s", "1/s", "1/s", "1/s"), {"k12_readout": cfg.k12_readout})]


def _freq_grid(cfg):
    step = cfg.sweeps["freq_step"]
    return np.arange(50.0, 1550.0 + step / 2, step)


def fig2a(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    spec = cw_spectrum(cfg.zfs, FieldVector(), cfg.rates, cfg.k12_cw, cfg.lineshape, cfg.hyperfine, _freq_grid(cfg), cfg.sites)
    meta = {"k12_cw": cfg.k12_cw, "linewidth_MHz": cfg.lineshape.width}
    meta.update({f"line_{lab}": f"{f:.6f} MHz contrast {a:.6g}" for lab, f, a, w in spec.lines if w == max(x[3] for x in spec.lines)})
    return [Table("fig2a", ("f_MHz", "contrast"), np.column_stack([spec.freq, spec.contrast]), ("MHz", "1"), meta)]


def fig2b(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    ls = cfg.lineshape
    P = np.asarray(cfg.sweeps["linewidth_powers"], float)
    true = np.array([broadened_width(ls.l0, ls.a, p) for p in P])
    rng = np.random.default_rng(cfg.seed)
    data = true * (1 + cfg.sweeps["linewidth_noise"] * rng.standard_normal(P.size))
    res = fit_auto("sqrt_saturation", P, data)
    fit = res.params[0] + res.params[1] * np.sqrt(P)
    meta = {
        "seed": cfg.seed,
        "fit_l0_MHz": f"{res['l0']:.6g} +- {res.error('l0'):.3g}",
        "fit_a_MHz_per_rtW": f"{res['a']:.6g} +- {res.error('a'):.3g}",
        "fit_converged": res.converged,
    }
    rows = np.column_stack([P, data, fit])
    return [Table("fig2b", ("P_W", "linewidth_MHz", "fit_MHz"), rows, ("W", "MHz", "MHz"), meta)]


def fig2g(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    f = _freq_grid(cfg)
    B = FieldVector.along(cfg.sweeps["zeeman_axis"], cfg.sweeps["bias_field"])
    spec = cw_spectrum(cfg.zfs, B, cfg.rates, cfg.k12_cw, cfg.lineshape, cfg.hyperfine, f, cfg.sites)
    ref = cw_spectrum(cfg.zfs, FieldVector(), cfg.rates, cfg.k12_cw, cfg.lineshape, cfg.hyperfine, f, cfg.sites)
    meta = {"B_mT": f"{B.Bx:.6g} {B.By:.6g} {B.Bz:.6g}", "k12_cw": cfg.k12_cw}
    rows = np.column_stack([f, spec.contrast, ref.contrast])
    return [Table("fig2g", ("f_MHz", "contrast", "contrast_zero_field"), rows, ("MHz", "1", "1"), meta)]


def fig2h(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    B = np.linspace(0.0, cfg.sweeps["zeeman_max"], cfg.sweeps["zeeman_points"])
    rows = zeeman_sweep(cfg.zfs, cfg.sweeps["zeeman_axis"], B)
    cols = ("B_mT",) + tuple(f"f_{lab}_MHz" for lab in TRANSITION_LABELS)
    return [Table("fig2h", cols, rows, ("mT", "MHz", "MHz", "MHz"), {"axis": cfg.sweeps["zeeman_axis"]})]


def _map_tables(name, cmap, x_name, y_name, y_unit):
    X, Y = np.meshgrid(cmap.x, cmap.y)
    grid = Table(name, (x_name, y_name, "contrast"), np.column_stack([X.ravel(), Y.ravel(), cmap.contrast.ravel()]),
                 ("s", y_unit, "1"), plot=False)
    opt = Table(f"{name}_opt", (y_name, f"{x_name}_opt", "contrast_opt"),
                np.column_stack([cmap.y, cmap.optimum, cmap.peak]), (y_unit, "s", "1"))
    return [grid, opt]


def fig3a(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    acfg = ProtocolAConfig(kappa_cw=cfg.pump["kappa_cw"], readout=cfg.protocol.readout_window, label=cfg.protocol.label)
    return _map_tables("fig3a", protocol_A_map(acfg, cfg.rates), "tau_p_s", "power_W", "W")


def _bcfg(cfg, energies=None):
    kw = dict(
        readout_power=cfg.pump["readout_power"],
        kappa_cw=cfg.pump["kappa_cw"],
        kappa_pulse=cfg.pump["kappa_pulse"],
        pulse_duration=cfg.pump["init_duration"],
        dark_time=cfg.protocol.init_settle,
        label=cfg.protocol.label,
    )
    if energies is not None:
        kw["energies"] = tuple(energies)
    return ProtocolBConfig(**kw)


def fig3b(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    return _map_tables("fig3b", protocol_B_map(_bcfg(cfg), cfg.rates), "tau_s", "energy_au", "au")


def fig3c(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    energies = np.linspace(83.1 / 20, 83.1, 20)
    cmap = protocol_B_map(_bcfg(cfg, energies), cfg.rates)
    rows = np.column_stack([cmap.y, np.abs(cmap.peak), cmap.optimum])
    meta = {"kappa_pulse": cfg.pump["kappa_pulse"], "note": "energy scale uncalibrated (arbitrary units)"}
    return [Table("fig3c", ("energy_au", "max_abs_contrast", "tau_opt_s"), rows, ("au", "1", "s"), meta)]


def _protocol_table(name, m, cfg) -> Table:
    rows = np.column_stack([m.x, m.contrast, m.stderr])
    meta = {"seed": cfg.seed, "n_ensemble": cfg.protocol.n_ensemble, "fit_model": m.fit.kind,
            "fit_converged": m.fit.converged}
    for n, v, e in zip(m.fit.names, m.fit.params, m.fit.stderr):
        meta[f"fit_{n}"] = f"{v:.6g} +- {e:.3g}"
    return Table(name, ("sweep_s", "contrast", "contrast_stderr"), rows, ("s", "1", "1"), meta)


def _protocol_fig(name, key):
    def run(cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
        m = measure(key, cfg.rates, cfg.noise, cfg.protocol, cfg.seed, workers)
        tables = [_protocol_table(name, m, cfg)]
        if key == "ramsey":
            peak = fourier_peak(m.x * 1e6, m.contrast)
            rows = np.column_stack([peak.frequencies, peak.magnitude])
            tables.append(Table(f"{name}_fourier", ("f_MHz", "magnitude"), rows, ("MHz", "au"),
                                {"peak_MHz": f"{peak.frequency:.6g}", "peak_found": peak.found}))
        return tables

    run.__name__ = name
    run.__doc__ = f"{SWEEPS[key][0]} protocol curve and fit."
    return run


FIGURES: dict[str, Callable[..., list[Table]]] = {
    "fig1e": fig1e,
    "fig1f": fig1f,
    "fig1g": fig1g,
    "fig1h": fig1h,
    "fig2a": fig2a,
    "fig2b": fig2b,
    "fig2g": fig2g,
    "fig2h": fig2h,
    "fig3a": fig3a,
    "fig3b": fig3b,
    "fig3c": fig3c,
    "fig4a": _protocol_fig("fig4a", "rabi"),
    "fig4b": _protocol_fig("fig4b", "ramsey"),
    "fig4c": _protocol_fig("fig4c", "t1"),
    "fig4d": _protocol_fig("fig4d", "echo"),
    "fig4e": _protocol_fig("fig4e", "cpmg"),
}

DESCRIPTIONS = {
    "fig1e": "populations after a 65 ns pump pulse and return to the ground state",
    "fig1f": "transient triplet polarisation during and after the pump pulse",
    "fig1g": "populations under weak cw pumping approaching steady state",
    "fig1h": "readout fluorescence with and without pi pulses on Txy / Txz",
    "fig2a": "zero-field cw ODMR spectrum",
    "fig2b": "power-broadened linewidth and sqrt extrapolation to l0",
    "fig2g": "cw ODMR spectrum at the bias field against the zero-field spectrum",
    "fig2h": "transition frequencies versus field",
    "fig3a": "chopped-pulse contrast map and optimal pulse period per power",
    "fig3b": "pulsed-laser contrast map over readout window and energy",
    "fig3c": "maximum pulsed contrast versus pulse energy",
    "fig4a": "Rabi oscillation",
    "fig4b": "Ramsey fringes and their Fourier transform",
    "fig4c": "inversion recovery",
    "fig4d": "Hahn echo decay",
    "fig4e": "CPMG decay at fixed pulse spacing",
}


def run_experiment(fig: str, cfg: ExperimentConfig, workers: int = 1) -> list[Table]:
    try:
        runner = FIGURES[fig]
    except KeyError:
        raise KeyError(f"unknown figure {fig!r}; available: {', '.join(FIGURES)}") from None
    return runner(cfg, workers)
