"""Damped least-squares curve fitting and spectral signal processing.

The fitter is a Levenberg-Marquardt iteration with Marquardt's diagonal
scaling, box constraints enforced by projection, and analytic Jacobians for
every model kind.  Models are written for any consistent unit system; the
protocol fits in this package use microseconds and MHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.signal import savgol_filter

from .errors import InvalidInputError

MODEL_KINDS = (
    "decaying_sinusoid",
    "mono_exponential",
    "stretched_exponential",
    "sqrt_saturation",
    "hyperbolic_saturation",
)


def _decaying_sinusoid(x, p):
    A, f, tau, phi, c = p
    env = np.exp(-x / tau)
    arg = 2 * np.pi * f * x + phi
    cos, sin = np.cos(arg), np.sin(arg)
    y = A * env * cos + c
    J = np.column_stack(
        [
            env * cos,
            -A * env * sin * 2 * np.pi * x,
            A * env * cos * x / tau**2,
            -A * env * sin,
            np.ones_like(x),
        ]
    )
    return y, J


def _mono_exponential(x, p):
    A, T, c = p
    e = np.exp(-x / T)
    return A * e + c, np.column_stack([e, A * e * x / T**2, np.ones_like(x)])


def _stretched_exponential(x, p):
    A, T, beta, c = p
    r = np.clip(x / T, 0.0, None)
    u = r**beta
    e = np.exp(-u)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
    J = np.column_stack(
        [e, A * e * u * beta / T, -A * e * u * logr, np.ones_like(x)]
    )
    return A * e + c, J


def _sqrt_saturation(x, p):
    l0, a = p
    s = np.sqrt(np.clip(x, 0.0, None))
    return l0 + a * s, np.column_stack([np.ones_like(x), s])


def _hyperbolic_saturation(x, p):
    cmax, psat = p
    d = x + psat
    return cmax * x / d, np.column_stack([x / d, -cmax * x / d**2])


_MODEL_FUNCS: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "decaying_sinusoid": (_decaying_sinusoid, ("amplitude", "frequency", "tau", "phase", "offset")),
    "mono_exponential": (_mono_exponential, ("amplitude", "T", "offset")),
    "stretched_exponential": (_stretched_exponential, ("amplitude", "T", "beta", "offset")),
    "sqrt_saturation": (_sqrt_saturation, ("l0", "a")),
    "hyperbolic_saturation": (_hyperbolic_saturation, ("c_max", "p_sat")),
}

# Positive-only scale parameters get a tiny lower bound so the model stays finite.
_TINY = 1e-12


def _default_bounds(kind: str) -> tuple[np.ndarray, np.ndarray]:
    inf = np.inf
    lo, hi = {
        "decaying_sinusoid": ([-inf, 0.0, _TINY, -inf, -inf], [inf, inf, inf, inf, inf]),
        "mono_exponential": ([-inf, _TINY, -inf], [inf, inf, inf]),
        "stretched_exponential": ([-inf, _TINY, 0.3, -inf], [inf, inf, 3.0, inf]),
        "sqrt_saturation": ([-inf, -inf], [inf, inf]),
        "hyperbolic_saturation": ([-inf, _TINY], [inf, inf]),
    }[kind]
    return np.array(lo, float), np.array(hi, float)


@dataclass
class FitModel:
    kind: str
    p0: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    fixed: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in _MODEL_FUNCS:
            raise InvalidInputError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        self.p0 = np.asarray(self.p0, dtype=float)
        lo, hi = _default_bounds(self.kind)
        self.lower = lo if self.lower is None else np.asarray(self.lower, float)
        self.upper = hi if self.upper is None else np.asarray(self.upper, float)
        n = len(self.names)
        if not (self.p0.shape == self.lower.shape == self.upper.shape == (n,)):
            raise InvalidInputError(f"{self.kind} takes {n} parameters {self.names}")
        if np.any(self.lower > self.upper):
            raise InvalidInputError("inconsistent bounds")
        if np.any(self.p0 < self.lower) or np.any(self.p0 > self.upper):
            raise InvalidInputError(f"initial guess {self.p0} outside bounds")
        unknown = set(self.fixed) - set(self.names)
        if unknown:
            raise InvalidInputError(f"cannot fix unknown parameters {sorted(unknown)}")

    @property
    def names(self) -> tuple[str, ...]:
        return _MODEL_FUNCS[self.kind][1]

    def evaluate(self, x, p) -> tuple[np.ndarray, np.ndarray]:
        return _MODEL_FUNCS[self.kind][0](np.asarray(x, float), np.asarray(p, float))

    def __call__(self, x, p=None) -> np.ndarray:
        return self.evaluate(x, self.p0 if p is None else p)[0]


@dataclass
class FitResult:
    kind: str
    names: tuple[str, ...]
    params: np.ndarray
    stderr: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    message: str = ""
    rank_deficient: bool = False
    cost_history: list[float] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def as_dict(self) -> dict:
        return {
            "model": self.kind,
            "params": {n: float(v) for n, v in zip(self.names, self.params)},
            "stderr": {n: float(v) for n, v in zip(self.names, self.stderr)},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "rank_deficient": bool(self.rank_deficient),
            "iterations": int(self.iterations),
            "message": self.message,
        }


def fit(
    model: FitModel,
    x: Sequence[float],
    y: Sequence[float],
    sigma: Sequence[float] | None = None,
    max_iter: int = 500,
    xtol: float = 1e-12,
    ftol: float = 1e-14,
) -> FitResult:
    """Levenberg-Marquardt fit of ``model`` to ``(x, y)``.

    Standard errors are 1-sigma from the Jacobian at the optimum.  Without
    ``sigma`` the covariance is scaled by the reduced chi-square.  Failure to
    converge, or a rank-deficient Jacobian, is reported on the result rather
    than raised.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("x and y must be 1-D arrays of equal length")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    free = np.array([n not in model.fixed for n in model.names])
    n_free = int(free.sum())
    if y.size < n_free:
        raise InvalidInputError(f"need at least {n_free} points, got {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise InvalidInputError("data must be finite")

    lo, hi = model.lower[free], model.upper[free]
    p = model.p0.copy()

    def residual(pf):
        full = p.copy()
        full[free] = pf
        # Trial steps may leave the model's sane range; those are rejected below.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
            f, J = model.evaluate(x, full)
        return w * (f - y), w[:, None] * J[:, free]

    pf = p[free].copy()
    r, J = residual(pf)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        dscale = np.maximum(np.diag(A), 1e-300)
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(dscale), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = np.clip(pf + step, lo, hi)
            r_t, J_t = residual(trial)
            cost_t = float(r_t @ r_t)
            if np.isfinite(cost_t) and np.all(np.isfinite(J_t)) and cost_t <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            converged = True
            message = "no further decrease possible"
            break
        dp = trial - pf
        rel_dp = np.max(np.abs(dp) / np.maximum(np.abs(pf), 1e-12)) if dp.size else 0.0
        rel_cost = (cost - cost_t) / max(cost, 1e-300)
        pf, r, J, cost = trial, r_t, J_t, cost_t
        history.append(cost)
        lam = max(lam / 10, 1e-12)
        if rel_dp < xtol or rel_cost < ftol or cost == 0.0:
            converged = True
            message = "converged"
            break

    p[free] = pf
    n_dof = max(y.size - n_free, 1)
    stderr = np.zeros_like(p)
    rank_deficient = False
    if n_free:
        A = J.T @ J
        rank = np.linalg.matrix_rank(J)
        rank_deficient = rank < n_free
        if rank_deficient:
            converged = False
            message = "rank-deficient Jacobian"
            stderr[free] = np.nan
        else:
            cov = np.linalg.pinv(A)
            if sigma is None:
                cov = cov * cost / n_dof
            stderr[free] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        kind=model.kind,
        names=model.names,
        params=p,
        stderr=stderr,
        residual_norm=math.sqrt(cost),
        converged=converged,
        iterations=it,
        message=message,
        rank_deficient=rank_deficient,
        cost_history=history,
    )


def initial_guess(kind: str, x, y) -> np.ndarray:
    """Data-driven starting point for ``kind``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    span = float(np.ptp(x)) or 1.0
    if kind == "decaying_sinusoid":
        # Detrend and skip the lowest bins so a drifting baseline is not taken
        # for the oscillation.
        trend = np.polyval(np.polyfit(x, y, 1), x)
        peak = fourier_peak(x, y - trend, min_frequency=1.5 / span)
        f = peak.frequency if peak.found else 1.0 / span
        return np.array([np.ptp(y) / 2, f, span / 3, 0.0, float(np.mean(y))])
    if kind == "mono_exponential":
        c = float(y[-1])
        return np.array([float(y[0]) - c, span / 3, c])
    if kind == "stretched_exponential":
        c = float(y[-1])
        return np.array([float(y[0]) - c, span / 3, 1.0, c])
    if kind == "sqrt_saturation":
        A = np.column_stack([np.ones_like(x), np.sqrt(np.clip(x, 0, None))])
        return np.linalg.lstsq(A, y, rcond=None)[0]
    if kind == "hyperbolic_saturation":
        return np.array([1.5 * float(np.max(np.abs(y))) * np.sign(y[np.argmax(np.abs(y))] or 1.0),
                         float(np.median(x[x > 0])) if np.any(x > 0) else 1.0])
    raise InvalidInputError(f"unknown model kind {kind!r}")


def fit_auto(
    kind: str,
    x,
    y,
    sigma=None,
    p0: Sequence[float] | None = None,
    fixed: Mapping[str, float] | None = None,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
) -> FitResult:
    """Fit with automatic starting values and a small restart grid.

    The grid varies the phase and decay time of sinusoids and the stretch exponent of
    stretched exponentials; the lowest-residual converged fit wins.
    """
    base = initial_guess(kind, x, y) if p0 is None else np.asarray(p0, float)
    names = _MODEL_FUNCS[kind][1]
    fixed = dict(fixed or {})
    for n, v in fixed.items():
        base[names.index(n)] = v
    lo, hi = _default_bounds(kind) if bounds is None else map(np.asarray, bounds)
    starts = [base]
    if p0 is None and kind == "decaying_sinusoid" and "phase" not in fixed:
        starts = []
        for tau in (base[2], base[2] / 10):
            for phi in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
                s = base.copy()
                s[2] = tau
                s[3] = phi
                starts.append(s)
    if p0 is None and kind == "stretched_exponential" and "beta" not in fixed:
        starts = []
        for beta in (1.0, 2.0, 3.0):
            s = base.copy()
            s[2] = beta
            starts.append(s)
    best = None
    for s in starts:
        s = np.clip(s, lo, hi)
        res = fit(FitModel(kind, s, lo, hi, tuple(fixed)), x, y, sigma)
        if best is None or (res.converged, -res.residual_norm) > (best.converged, -best.residual_norm):
            best = res
    return best


def smooth_derivative(x, y, window: int, order: int) -> np.ndarray:
    """First derivative from a local polynomial (Savitzky-Golay) fit at every point.

    Edge points use the polynomial fitted to the first/last ``window`` samples.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if window % 2 == 0 or window < 1:
        raise InvalidInputError(f"window must be a positive odd integer, got {window}")
    if order >= window:
        raise InvalidInputError("polynomial order must be smaller than the window")
    if window > y.size:
        raise InvalidInputError(f"window {window} exceeds series length {y.size}")
    dx = np.diff(x)
    if dx.size == 0 or not np.allclose(dx, dx[0], rtol=1e-6, atol=0):
        raise InvalidInputError("smooth_derivative requires a uniform grid")
    return savgol_filter(y, window, order, deriv=1, delta=float(dx[0]), mode="interp")


def count_extremum_pairs(d: np.ndarray, rel_threshold: float = 0.02) -> int:
    """Number of (max, min) pairs in a derivative trace above a prominence threshold."""
    d = np.asarray(d, float)
    thr = rel_threshold * np.max(np.abs(d))
    ext = []
    for i in range(1, d.size - 1):
        if d[i] > d[i - 1] and d[i] >= d[i + 1] and d[i] > thr:
            ext.append(+1)
        elif d[i] < d[i - 1] and d[i] <= d[i + 1] and d[i] < -thr:
            ext.append(-1)
    return min(ext.count(1), ext.count(-1))


@dataclass(frozen=True)
class FourierPeak:
    frequency: float
    amplitude: float
    found: bool
    frequencies: np.ndarray = field(repr=False, default=None)
    magnitude: np.ndarray = field(repr=False, default=None)


def fourier_peak(
    t, y, window: str | None = "hann", pad_factor: int = 4, min_frequency: float = 0.0
) -> FourierPeak:
    """Dominant non-DC Fourier component of a uniformly sampled series.

    The mean is removed, an optional window applied and the series zero-padded
    to ``pad_factor`` times its length (next power of two).  The peak bin is
    refined by a three-point parabola.  Ties go to the lowest frequency.
    Bins below ``min_frequency`` are ignored.  If nothing rises above
    numerical noise the result is flagged ``found=False``.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.size < 4 or t.shape != y.shape:
        raise InvalidInputError("need matching t, y with at least 4 samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=0) or dt[0] <= 0:
        raise InvalidInputError("fourier_peak requires a uniform increasing time grid")
    yc = y - y.mean()
    if window == "hann":
        yc = yc * np.hanning(y.size)
    elif window is not None:
        raise InvalidInputError(f"unknown window {window!r}")
    n = 1 << int(math.ceil(math.log2(max(pad_factor, 1) * y.size)))
    mag = np.abs(np.fft.rfft(yc, n))
    freqs = np.fft.rfftfreq(n, d=dt[0])
    scale = np.max(np.abs(y)) * y.size
    k0 = max(1, int(np.searchsorted(freqs, min_frequency)))
    if mag.size < k0 + 2 or np.max(mag[k0:]) <= 1e-9 * max(scale, 1e-300):
        return FourierPeak(0.0, 0.0, False, freqs, mag)
    k = k0 + int(np.argmax(mag[k0:]))
    f = freqs[k]
    amp = mag[k]
    if 1 <= k < mag.size - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        denom = a - 2 * b + c
        # Refine only at a genuine local maximum.
        if denom < 0 and b >= a and b >= c:
            delta = 0.5 * (a - c) / denom
            f = freqs[k] + delta * (freqs[1] - freqs[0])
            amp = b - 0.25 * (a - c) * delta
    return FourierPeak(float(f), float(amp), True, freqs, mag)
