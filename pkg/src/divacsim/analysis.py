"""Curve fits for swept traces: Rabi oscillations, Ramsey fringes, T1 decays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import ConfigError, FitError


def cosine(t, offset, amplitude, freq, phase):
    return offset + amplitude * np.cos(2 * np.pi * freq * t + phase)


def decaying_cosine(t, offset, amplitude, freq, phase, tau):
    return offset + amplitude * np.exp(-t / tau) * np.cos(2 * np.pi * freq * t + phase)


def gaussian_decaying_cosine(t, offset, amplitude, freq, phase, tau):
    return offset + amplitude * np.exp(-(t / tau) ** 2) * np.cos(2 * np.pi * freq * t + phase)


def drifting_decaying_cosine(t, offset, amplitude, freq, phase, tau, drift):
    # linear baseline absorbs slow population relaxation during long waits
    return decaying_cosine(t, offset, amplitude, freq, phase, tau) + drift * t


def exponential(t, offset, amplitude, tau):
    return offset + amplitude * np.exp(-t / tau)


MODELS = {
    "cosine": (cosine, ("offset", "amplitude", "freq", "phase")),
    "decaying_cosine": (decaying_cosine, ("offset", "amplitude", "freq", "phase", "tau")),
    "gaussian_decaying_cosine": (gaussian_decaying_cosine,
                                 ("offset", "amplitude", "freq", "phase", "tau")),
    "drifting_decaying_cosine": (drifting_decaying_cosine,
                                 ("offset", "amplitude", "freq", "phase", "tau", "drift")),
    "exponential": (exponential, ("offset", "amplitude", "tau")),
}


@dataclass(frozen=True)
class FitResult:
    model: str
    values: dict
    stderr: dict
    residual_norm: float

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        return {"model": self.model, "values": self.values, "stderr": self.stderr,
                "residual_norm": self.residual_norm}


def dominant_frequency(t, y) -> float:
    """Peak of the periodogram of a uniformly sampled trace (MHz for t in us)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float) - np.mean(y)
    n = len(t)
    dt = (t[-1] - t[0]) / (n - 1)
    pad = 16 * n
    spec = np.abs(np.fft.rfft(y, pad))
    freqs = np.fft.rfftfreq(pad, dt)
    spec[0] = 0.0
    return float(freqs[int(np.argmax(spec))])


def _guess(model, t, y):
    off = float(np.mean(y))
    span = float(np.ptp(y)) or 1e-12
    trange = float(t[-1] - t[0])
    if model == "exponential":
        amp = float(y[0] - y[-1])
        return [float(y[-1]), amp, trange / 3]
    f = dominant_frequency(t, y)
    # phase from a linear projection onto cos/sin at the guessed frequency
    c = np.cos(2 * np.pi * f * t)
    s = np.sin(2 * np.pi * f * t)
    coef, *_ = np.linalg.lstsq(np.column_stack([c, s, np.ones_like(t)]), y, rcond=None)
    amp = float(np.hypot(coef[0], coef[1])) or span / 2
    phase = float(np.arctan2(-coef[1], coef[0]))
    p = [float(coef[2]), amp, f, phase]
    if model != "cosine":
        p.append(trange / 2)
    if model == "drifting_decaying_cosine":
        p.append(0.0)
    return p


def fit_trace(t, y, model: str = "cosine", p0=None) -> FitResult:
    """Least-squares fit of one of :data:`MODELS` with an automatic initial guess."""
    if model not in MODELS:
        raise ConfigError(f"unknown fit model {model!r}; choose from {sorted(MODELS)}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    fn, names = MODELS[model]
    if len(t) != len(y) or len(t) < len(names) + 1:
        raise ConfigError("not enough points for the fit")
    if p0 is None:
        p0 = _guess(model, t, y)
    lo = np.full(len(names), -np.inf)
    hi = np.full(len(names), np.inf)
    if "freq" in names:
        lo[names.index("freq")] = 0.0
    if "tau" in names:
        lo[names.index("tau")] = 1e-12
    p0 = np.clip(p0, lo + 1e-15, hi)
    try:
        theta, cov = curve_fit(fn, t, y, p0=p0, bounds=(lo, hi), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"{model} fit failed: {exc}", float(np.linalg.norm(fn(t, *p0) - y))) from exc
    resid = float(np.linalg.norm(fn(t, *theta) - y))
    err = np.sqrt(np.clip(np.diag(cov), 0, None)) if np.all(np.isfinite(cov)) \
        else np.full(len(theta), np.nan)
    return FitResult(model, dict(zip(names, map(float, theta))),
                     dict(zip(names, map(float, err))), resid)
