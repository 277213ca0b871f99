"""Flip-flop probabilities and nuclear polarization near the ground-state anticrossing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneracyError
from .operators import BASIS, BASIS_INDEX, label
from .params import FieldPoint, SpinSystemParams
from .spin_core import EigenSystem, eigensystem

# alpha, beta, chi, delta ordered by dominant label
DNP_LABELS = (label("0u"), label("0d"), label("-1u"), label("-1d"))
_UP0 = BASIS_INDEX[label("0u")]
_DN0 = BASIS_INDEX[label("0d")]
_FLOOR = 1e-26  # |amplitude|^2 of ~1e-13, a few hundred ulps of a unit vector


@dataclass(frozen=True)
class FlipProbabilities:
    rho_up: float
    rho_down: float
    field: float | None = None


@dataclass(frozen=True)
class PolarizationPoint:
    """Polarization at one field.

    ``p`` is the flip-flop imbalance rho_up - rho_down clipped to [-1, 1]; it
    is the quantity that sets steady-state populations. ``normalized`` is the
    ratio (rho_up - rho_down) / (rho_up + rho_down), which saturates at +-1 as
    soon as either probability dominates, however small both are.
    """

    field: float
    p: float
    raw_difference: float
    normalized: float
    rho_up: float
    rho_down: float


@dataclass(frozen=True)
class PopulationVector:
    """Occupations of the six labeled eigenstates, in basis-label order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (6,) or np.any(v < -1e-15) or abs(v.sum() - 1.0) > 1e-12:
            raise ConfigError(f"invalid population vector {v}")
        object.__setattr__(self, "values", v)

    def __getitem__(self, lab):
        return float(self.values[BASIS_INDEX[label(lab)]])


def select_dnp_states(eig: EigenSystem, tol: float = 1e-6) -> list[np.ndarray]:
    """Return eigenvectors (alpha, beta, chi, delta).

    The four eigenvectors with the largest weight on span{|0,u>,|0,d>,|-1,u>,|-1,d>}
    are kept and matched one-to-one to those labels by maximum overlap.
    """
    ov = eig.overlaps
    rows = [BASIS_INDEX[lab] for lab in DNP_LABELS]
    weight = ov[rows, :].sum(axis=0)
    order = np.argsort(-weight, kind="stable")
    field = eig.field.bz if eig.field is not None else None
    if weight[order[3]] - weight[order[4]] < tol:
        raise DegeneracyError("fourth and fifth candidate states tie in subspace weight", field)
    chosen = order[:4]
    sub = ov[np.ix_(rows, chosen)]
    from scipy.optimize import linear_sum_assignment
    r, c = linear_sum_assignment(-sub)
    picked = [None] * 4
    for i, j in zip(r, c):
        picked[i] = chosen[j]
    for i in range(4):
        # assignment is ambiguous when swapping two picks costs (almost) nothing
        for j in range(i + 1, 4):
            a, b = picked[i], picked[j]
            gain = (ov[rows[i], a] + ov[rows[j], b]) - (ov[rows[i], b] + ov[rows[j], a])
            if abs(gain) < tol and max(ov[rows[i], a], ov[rows[j], b]) > tol:
                raise DegeneracyError(
                    f"{DNP_LABELS[i]} and {DNP_LABELS[j]} are equally mixed", field)
    return [eig.vectors[:, k] for k in picked]


def flip_probabilities(eig: EigenSystem) -> FlipProbabilities:
    """Nuclear up/down flip probabilities from eigenstate projections."""
    alpha, beta, chi, delta = select_dnp_states(eig)

    # amplitudes below the eigensolver's accuracy are rounding, not mixing
    def dn(v):
        w = abs(v[_DN0]) ** 2
        return w if w > _FLOOR else 0.0

    def up(v):
        w = abs(v[_UP0]) ** 2
        return w if w > _FLOOR else 0.0

    rho_up = (4 * dn(beta) * (dn(chi) + dn(delta))
              + 4 * dn(delta) * (dn(alpha) + dn(chi)))
    rho_down = (4 * up(alpha) * (up(chi) + up(delta))
                + 4 * up(chi) * (up(beta) + up(delta)))
    field = eig.field.bz if eig.field is not None else None
    return FlipProbabilities(float(rho_up), float(rho_down), field)


def _point(b, fp: FlipProbabilities) -> PolarizationPoint:
    diff = fp.rho_up - fp.rho_down
    total = fp.rho_up + fp.rho_down
    norm = diff / total if total > 1e-12 else 0.0
    return PolarizationPoint(field=float(b), p=float(np.clip(diff, -1.0, 1.0)),
                             raw_difference=float(diff), normalized=float(norm),
                             rho_up=fp.rho_up, rho_down=fp.rho_down)


def polarization_at(params: SpinSystemParams, b: float, nudge: float = 0.01,
                    max_nudges: int = 5) -> PolarizationPoint:
    bz = float(b)
    for _ in range(max_nudges + 1):
        try:
            fp = flip_probabilities(eigensystem(params, FieldPoint(bz=bz)))
            return _point(b, fp)
        except DegeneracyError:
            bz += nudge
    raise DegeneracyError(f"could not leave degeneracy near {b} G", b)


def polarization_curve(params: SpinSystemParams, b_grid, threads: int = 1) -> list:
    """Polarization over a field grid; exact degeneracies are nudged by +0.01 G."""
    grid = [float(b) for b in b_grid]
    if not grid:
        raise ConfigError("empty field grid")
    if threads > 1 and len(grid) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(lambda b: polarization_at(params, b), grid))
    return [polarization_at(params, b) for b in grid]


def steady_populations(p, residual: float = 0.0) -> PopulationVector:
    """Optically pumped populations: ms=0 split (1+p)/2 : (1-p)/2, each ms=+-1 level at ``residual``."""
    if isinstance(p, PolarizationPoint):
        p = p.p
    p = float(p)
    if abs(p) > 1.0:
        raise ConfigError(f"|p| must be <= 1, got {p}")
    if residual < 0 or 4 * residual > 1:
        raise ConfigError("residual must lie in [0, 1/4]")
    ms0 = 1.0 - 4 * residual
    pops = np.full(6, residual)
    pops[_UP0] = ms0 * (1 + p) / 2
    pops[_DN0] = ms0 * (1 - p) / 2
    return PopulationVector(pops)


__all__ = [
    "BASIS", "DNP_LABELS", "FlipProbabilities", "PolarizationPoint", "PopulationVector",
    "flip_probabilities", "polarization_at", "polarization_curve", "select_dnp_states",
    "steady_populations",
]
