"""Population-weighted ODMR spectra and Lorentzian peak fitting."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks

from .dnp import PopulationVector
from .errors import ConfigError, FitError
from .operators import BASIS_INDEX, SX
from .params import FieldPoint, SpinSystemParams
from .spin_core import eigensystem, transition_table

DEFAULT_LINEWIDTH = 8.0  # MHz FWHM
_ALLOWED_REF = 0.5  # |<-1|Sx|0>|^2, a fully allowed electron line


class PeakDegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Peak:
    center: float
    amplitude: float
    fwhm: float
    lower: str | None = None
    upper: str | None = None


@dataclass(frozen=True)
class FittedPeak:
    center: float
    amplitude: float
    fwhm: float
    center_err: float
    amplitude_err: float
    fwhm_err: float

    def to_dict(self):
        return {"center": self.center, "amplitude": self.amplitude, "fwhm": self.fwhm,
                "stderr": {"center": self.center_err, "amplitude": self.amplitude_err,
                           "fwhm": self.fwhm_err}}


@dataclass(frozen=True)
class Spectrum:
    freq: np.ndarray
    contrast: np.ndarray
    peaks: list = field(default_factory=list)

    def __post_init__(self):
        f = np.asarray(self.freq, dtype=float)
        c = np.asarray(self.contrast, dtype=float)
        if f.ndim != 1 or f.shape != c.shape:
            raise ConfigError("frequency and contrast arrays must be 1-D and equal length")
        if len(f) > 1 and np.any(np.diff(f) <= 0):
            raise ConfigError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(c)):
            raise ConfigError("non-finite contrast")
        object.__setattr__(self, "freq", f)
        object.__setattr__(self, "contrast", c)

    def pl(self) -> np.ndarray:
        """Render as photoluminescence dips, 1 - contrast."""
        return 1.0 - self.contrast

    def peak(self, lower, upper) -> Peak:
        key = {str(lower), str(upper)}
        for p in self.peaks:
            if {p.lower, p.upper} == key:
                return p
        raise KeyError(f"no peak for {lower}<->{upper}")


def lorentzian(x, center, amplitude, fwhm):
    hw = fwhm / 2.0
    return amplitude * hw ** 2 / ((x - center) ** 2 + hw ** 2)


def line_amplitudes(eig, populations: PopulationVector, operator=None, min_weight=1e-6):
    """Unscaled line strengths: weight x |population difference| for each transition."""
    pops = np.asarray(populations.values)
    out = []
    for t in transition_table(eig, SX if operator is None else operator):
        if t.weight < min_weight:
            continue
        dp = abs(pops[BASIS_INDEX[t.lower]] - pops[BASIS_INDEX[t.upper]])
        out.append((t, t.weight * dp))
    return out


def synthesize_odmr(params: SpinSystemParams, field, populations: PopulationVector,
                    linewidth: float = DEFAULT_LINEWIDTH, grid=None, contrast=None,
                    normalize: bool = True, min_frequency: float = 0.0) -> Spectrum:
    """Sum of Lorentzians at the electron-dipole transition frequencies.

    Each line has strength weight * |p_i - p_f|. With ``normalize`` the
    strongest line is scaled to ``contrast`` (default: the readout contrast);
    otherwise a fully allowed line between a full and an empty level has
    amplitude ``contrast``, which keeps amplitudes linear in populations.
    """
    if not linewidth > 0:
        raise ConfigError("linewidth must be > 0")
    if grid is None:
        raise ConfigError("a frequency grid is required")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("empty frequency grid")
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    c = params.readout_contrast if contrast is None else float(contrast)
    eig = eigensystem(params, field)
    lines = [(t, s) for t, s in line_amplitudes(eig, populations) if t.frequency >= min_frequency]
    strongest = max((s for _, s in lines), default=0.0)
    if normalize:
        scale = c / strongest if strongest > 0 else 0.0
    else:
        scale = c / _ALLOWED_REF
    peaks = [Peak(t.frequency, s * scale, linewidth, t.lower.code, t.upper.code) for t, s in lines]
    y = np.zeros_like(grid)
    for p in peaks:
        if p.amplitude:
            y += lorentzian(grid, p.center, p.amplitude, p.fwhm)
    return Spectrum(grid, y, peaks)


def _multi_lorentz(x, *theta):
    y = np.zeros_like(x, dtype=float)
    for i in range(0, len(theta), 3):
        y = y + lorentzian(x, theta[i], theta[i + 1], theta[i + 2])
    return y


def fit_peaks(spectrum: Spectrum, n_peaks: int, fwhm_guess: float | None = None,
              maxfev: int = 20000) -> list:
    """Least-squares fit of ``n_peaks`` Lorentzians; returns :class:`FittedPeak` sorted by center.

    Emits :class:`PeakDegeneracyWarning` when fewer than ``n_peaks`` maxima are
    visible or fitted centers end up closer than half a linewidth.
    """
    if n_peaks < 1:
        raise ConfigError("n_peaks must be >= 1")
    x, y = spectrum.freq, spectrum.contrast
    if len(x) < 3 * n_peaks + 1:
        raise ConfigError("too few grid points for the requested peaks")
    step = float(np.median(np.diff(x)))
    idx, _ = find_peaks(y)
    if len(idx) == 0:
        idx = np.array([int(np.argmax(y))])
    idx = idx[np.argsort(-y[idx])]
    if len(idx) < n_peaks:
        warnings.warn(f"only {len(idx)} resolvable maxima for {n_peaks} peaks",
                      PeakDegeneracyWarning, stacklevel=2)
    if fwhm_guess is None:
        from scipy.signal import peak_widths
        w = peak_widths(y, idx[:1], rel_height=0.5)[0]
        fwhm_guess = max(float(w[0]) * step, 2 * step)
    p0 = []
    for k in range(n_peaks):
        if k < len(idx):
            i = idx[k]
            p0 += [x[i], y[i], fwhm_guess]
        else:
            # unresolved extra component: split the strongest maximum
            i = idx[0]
            p0[0] -= fwhm_guess / 4
            p0 += [x[i] + fwhm_guess / 4, y[i] / 2, fwhm_guess]
    lo = [x[0], 0.0, step / 10] * n_peaks
    hi = [x[-1], np.inf, x[-1] - x[0]] * n_peaks
    p0 = np.clip(p0, lo, [h if np.isfinite(h) else 1e300 for h in hi])
    try:
        theta, cov = curve_fit(_multi_lorentz, x, y, p0=p0, bounds=(lo, hi), maxfev=maxfev,
                               xtol=1e-14, ftol=1e-14, gtol=1e-14)
    except (RuntimeError, ValueError) as exc:
        resid = float(np.linalg.norm(_multi_lorentz(x, *p0) - y))
        raise FitError(f"Lorentzian fit did not converge: {exc}", resid) from exc
    resid = y - _multi_lorentz(x, *theta)
    if not np.all(np.isfinite(theta)):
        raise FitError("fit produced non-finite parameters", float(np.linalg.norm(resid)))
    err = np.sqrt(np.clip(np.diag(cov), 0, None)) if np.all(np.isfinite(cov)) else np.full(len(theta), np.nan)
    peaks = [FittedPeak(*(float(v) for v in theta[i:i + 3]), *(float(v) for v in err[i:i + 3]))
             for i in range(0, len(theta), 3)]
    peaks.sort(key=lambda p: p.center)
    for a, b in zip(peaks, peaks[1:]):
        if b.center - a.center < 0.5 * max(a.fwhm, b.fwhm):
            warnings.warn(f"peaks at {a.center:.3f} and {b.center:.3f} MHz are not resolved",
                          PeakDegeneracyWarning, stacklevel=2)
    return peaks


def polarization_from_peaks(i_plus: float, i_minus: float) -> float:
    """(I+ - I-) / (I+ + I-) from two fitted line intensities."""
    tot = i_plus + i_minus
    if tot <= 0:
        raise ConfigError("line intensities must have a positive sum")
    return (i_plus - i_minus) / tot
