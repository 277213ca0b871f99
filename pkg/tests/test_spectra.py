import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from divacsim.dnp import PopulationVector, polarization_at, steady_populations
from divacsim.errors import ConfigError
from divacsim.params import SpinSystemParams, pl6b
from divacsim.spectra import (PeakDegeneracyWarning, Spectrum, fit_peaks, lorentzian,
                              polarization_from_peaks, synthesize_odmr)

GRID = np.arange(1150.0, 1500.0, 0.25)


def test_lorentzian_area():
    area, _ = quad(lorentzian, -np.inf, np.inf, args=(10.0, 0.3, 8.0))
    assert area == pytest.approx(0.3 * np.pi * 8.0 / 2, rel=1e-9)


def test_four_lines_at_low_field():
    spec = synthesize_odmr(pl6b(), 18.7, steady_populations(0.0), grid=GRID)
    peaks = fit_peaks(spec, 4, fwhm_guess=8.0)
    c = [p.center for p in peaks]
    assert len(c) == 4
    # two nuclear-split pairs, one per electron branch
    assert 50 < c[1] - c[0] < 57 and 50 < c[3] - c[2] < 57


def test_gslac_suppression():
    pops = steady_populations(polarization_at(pl6b(), 478.0))
    spec = synthesize_odmr(pl6b(), 478.0, pops, grid=np.array([0.0]))
    weak = spec.peak("-1d", "0d").amplitude
    strong = spec.peak("0u", "-1u").amplitude
    assert weak <= 0.05 * strong


def test_uniform_populations_give_flat_spectrum():
    spec = synthesize_odmr(pl6b(), 18.7, PopulationVector(np.full(6, 1 / 6)), grid=GRID)
    assert np.all(spec.contrast == 0)


def test_amplitudes_linear_in_populations():
    a = steady_populations(0.2)
    b = steady_populations(0.8)
    mix = PopulationVector(0.5 * (a.values + b.values))
    ya, yb, ym = (synthesize_odmr(pl6b(), 18.7, p, grid=GRID, normalize=False).contrast
                  for p in (a, b, mix))
    assert np.allclose(ym, 0.5 * (ya + yb), atol=1e-12)


def test_single_peak_fit():
    x = np.arange(1260.0, 1360.0, 0.1)
    spec = Spectrum(x, lorentzian(x, 1311.2, 0.3, 8.0))
    (p,) = fit_peaks(spec, 1)
    assert p.center == pytest.approx(1311.2, abs=1e-3)
    assert p.fwhm == pytest.approx(8.0, abs=1e-3)


def test_degenerate_peaks_warn():
    x = np.arange(1260.0, 1360.0, 0.1)
    y = lorentzian(x, 1310.0, 0.3, 8.0) + lorentzian(x, 1310.8, 0.3, 8.0)
    with pytest.warns(PeakDegeneracyWarning):
        fit_peaks(Spectrum(x, y), 2)


def test_polarization_round_trip_through_spectrum():
    # the two ms=-1 lines carry the nuclear populations of ms=0
    p_true = 0.98
    params = pl6b()
    spec = synthesize_odmr(params, 18.7, steady_populations(p_true), grid=GRID, normalize=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PeakDegeneracyWarning)
        peaks = fit_peaks(spec, 4, fwhm_guess=8.0)
    lo = [p for p in peaks if p.center < 1345]
    i_up, i_dn = lo[0].amplitude, lo[1].amplitude
    assert polarization_from_peaks(i_up, i_dn) == pytest.approx(p_true, abs=0.02)


def test_pl_rendering_and_checks():
    spec = Spectrum([1.0, 2.0], [0.1, 0.2])
    assert np.allclose(spec.pl(), [0.9, 0.8])
    with pytest.raises(ConfigError):
        Spectrum([2.0, 1.0], [0, 0])
    with pytest.raises(ConfigError):
        synthesize_odmr(pl6b(), 18.7, steady_populations(0.0), linewidth=0.0, grid=GRID)
    with pytest.raises(ConfigError):
        polarization_from_peaks(0.0, 0.0)
