"""Hamiltonian construction, diagonalization and level bookkeeping."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .errors import ConfigError, DiagonalizationError, OutOfRangeError
from .operators import BASIS, BASIS_INDEX, I_VEC, IZ, S_VEC, SX, SY, SZ, Label, label
from .params import FieldPoint, SpinSystemParams


class MixingWarning(UserWarning):
    """A field range assumed to be mixing-free is not."""


def build_hamiltonian(params: SpinSystemParams, field: FieldPoint | None = None) -> np.ndarray:
    """Spin Hamiltonian in MHz on the product basis.

    D[Sz^2 - 2/3] + E(Sx^2 - Sy^2) + gamma_e B.S + S.A.I - gamma_n B.I
    """
    if field is None:
        field = FieldPoint()
    params.validate()
    if not np.all(np.isfinite(field.vector)):
        raise ConfigError("field must be finite")
    b = field.vector
    h = params.D * (SZ @ SZ - (2.0 / 3.0) * np.eye(6))
    if params.E:
        h = h + params.E * (SX @ SX - SY @ SY)
    for k in range(3):
        if b[k]:
            h = h + params.gamma_e * b[k] * S_VEC[k] - params.gamma_n * b[k] * I_VEC[k]
    a = params.A
    for i in range(3):
        for j in range(3):
            if a[i, j]:
                h = h + a[i, j] * (S_VEC[i] @ I_VEC[j])
    # S_i and I_j commute, so the sum is Hermitian up to rounding
    return 0.5 * (h + h.conj().T)


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenpairs plus a bijective product-basis label map.

    ``vectors[:, k]`` belongs to ``values[k]`` and carries ``labels[k]``.
    """

    values: np.ndarray
    vectors: np.ndarray
    labels: tuple
    field: FieldPoint | None = None

    def index(self, lab) -> int:
        return self.labels.index(label(lab))

    def energy(self, lab) -> float:
        return float(self.values[self.index(lab)])

    def vector(self, lab) -> np.ndarray:
        return self.vectors[:, self.index(lab)]

    @property
    def order(self) -> np.ndarray:
        """Eigen-indices sorted into product-basis label order."""
        return np.array([self.index(lab) for lab in BASIS])

    @property
    def labeled_vectors(self) -> np.ndarray:
        """Eigenvectors as columns in basis-label order (+1u, ..., -1d)."""
        return self.vectors[:, self.order]

    @property
    def labeled_values(self) -> np.ndarray:
        return self.values[self.order]

    @property
    def overlaps(self) -> np.ndarray:
        """|<basis b | eigvec k>|^2 indexed [b, k]."""
        return np.abs(self.vectors) ** 2

    def purity(self, lab) -> float:
        """Weight of an eigenstate on the basis state it is labeled with."""
        lab = label(lab)
        return float(self.overlaps[BASIS_INDEX[lab], self.index(lab)])


def _fix_phases(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(ph) / ph)[None, :]


def _align_degenerate(values, vecs, tol):
    # rotate inside degenerate clusters towards the product basis so that the
    # output does not depend on LAPACK's arbitrary choice
    n = len(values)
    weights = np.diag(np.arange(1.0, n + 1.0) ** 2)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and values[stop] - values[stop - 1] <= tol:
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            m = block.conj().T @ weights @ block
            _, rot = np.linalg.eigh(0.5 * (m + m.conj().T))
            vecs[:, start:stop] = block @ rot
        start = stop
    return vecs


def assign_labels(vectors: np.ndarray) -> tuple:
    """Optimal one-to-one assignment of eigenvectors to basis labels by overlap."""
    ov = np.abs(vectors) ** 2
    rows, cols = linear_sum_assignment(-ov)
    labels = [None] * vectors.shape[1]
    for b, k in zip(rows, cols):
        labels[k] = BASIS[b]
    return tuple(labels)


def diagonalize(h: np.ndarray, field: FieldPoint | None = None) -> EigenSystem:
    """Hermitian eigendecomposition with deterministic phases and labels.

    Each eigenvector is scaled so its largest-magnitude component is real and
    positive. Exactly degenerate eigenvectors are rotated to align with the
    product basis.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ConfigError("matrix must be square")
    scale = max(np.linalg.norm(h), 1.0)
    if np.max(np.abs(h - h.conj().T)) > 1e-10 * scale:
        raise ConfigError("matrix is not Hermitian")
    try:
        values, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        # LAPACK does not expose its iteration count; report what it says
        raise DiagonalizationError(f"eigensolver failed to converge: {exc}") from exc
    vecs = _align_degenerate(values, vecs, 1e-12 * scale)
    vecs = _fix_phases(vecs)
    labels = assign_labels(vecs) if h.shape[0] == 6 else tuple(range(h.shape[0]))
    return EigenSystem(values=values, vectors=vecs, labels=labels, field=field)


def eigensystem(params: SpinSystemParams, field) -> EigenSystem:
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    return diagonalize(build_hamiltonian(params, field), field)


class Transition(NamedTuple):
    lower: Label
    upper: Label
    frequency: float
    weight: float

    @property
    def pair(self):
        return (self.lower, self.upper)

    def connects(self, a, b) -> bool:
        return {self.lower, self.upper} == {label(a), label(b)}


def transition_table(eig: EigenSystem, spin_flip_operator: np.ndarray | None = None) -> list:
    """All 15 level pairs with frequency (MHz, >= 0) and |<f|O|i>|^2.

    ``O`` defaults to Sx (x) 1, the electron-dipole drive.
    """
    op = SX if spin_flip_operator is None else spin_flip_operator
    v = eig.vectors
    m = v.conj().T @ op @ v
    out = []
    n = len(eig.values)
    for i in range(n):
        for f in range(i + 1, n):
            out.append(Transition(eig.labels[i], eig.labels[f],
                                  float(eig.values[f] - eig.values[i]),
                                  float(abs(m[f, i]) ** 2)))
    return out


def find_transition(table, a, b) -> Transition:
    for t in table:
        if t.connects(a, b):
            return t
    raise KeyError(f"no transition between {a} and {b}")


def transition_frequency(params, field, a, b) -> float:
    eig = eigensystem(params, field)
    return abs(eig.energy(b) - eig.energy(a))


def branch_gap(eig: EigenSystem, a="0d", b="-1u") -> float:
    return abs(eig.energy(a) - eig.energy(b))


def gslac_field(params: SpinSystemParams, window=None, coarse_step=1.0, xtol=0.01,
                branches=("0d", "-1u")) -> float:
    """Field (G) minimizing the gap between the |0,d> and |-1,u> branches.

    A coarse scan over ``window`` (default ``[0, max(2 D / gamma_e, 100)]``)
    brackets the minimum, which is then refined by bounded Brent search
    (golden section with parabolic steps) to ``xtol``.
    """
    if not params.gamma_e > 0:
        raise ConfigError("gamma_e must be > 0")
    if window is None:
        window = (0.0, max(2.0 * params.D / params.gamma_e, 100.0))
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ConfigError("empty GSLAC scan window")

    def gap(b):
        return branch_gap(eigensystem(params, FieldPoint(bz=b)), *branches)

    grid = np.linspace(lo, hi, max(int(round((hi - lo) / coarse_step)) + 1, 3))
    gaps = np.array([gap(b) for b in grid])
    k = int(np.argmin(gaps))
    if k == len(grid) - 1:
        raise OutOfRangeError(f"branch gap still decreasing at the window edge {hi:g} G")
    if k == 0:
        # B >= 0 is the physical domain, so a minimum pinned at the lower edge is genuine
        # only when the lower edge is zero field
        if lo != 0.0:
            raise OutOfRangeError(f"branch gap minimum at the window edge {lo:g} G")
        res = minimize_scalar(gap, bounds=(grid[0], grid[1]), method="bounded",
                              options={"xatol": xtol / 2})
        return float(res.x) if res.fun < gaps[0] else 0.0
    res = minimize_scalar(gap, bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                          options={"xatol": xtol / 2})
    return float(res.x)


def zeeman_slope(params: SpinSystemParams, pair: Sequence, b_range, n_points: int = 16,
                 purity_floor: float = 0.99) -> float:
    """Least-squares slope (MHz/G) of a transition frequency over ``b_range``.

    Warns with :class:`MixingWarning` when a level of the pair has less than
    ``purity_floor`` weight on its label anywhere in the range.
    """
    b0, b1 = float(b_range[0]), float(b_range[1])
    if b1 == b0:
        raise ConfigError("degenerate field range")
    if n_points < 10:
        raise ConfigError("need at least 10 sample points")
    a, b = label(pair[0]), label(pair[1])
    fields = np.linspace(b0, b1, n_points)
    freqs = np.empty(n_points)
    worst = 1.0
    for i, bz in enumerate(fields):
        eig = eigensystem(params, FieldPoint(bz=bz))
        freqs[i] = abs(eig.energy(b) - eig.energy(a))
        worst = min(worst, eig.purity(a), eig.purity(b))
    if worst < purity_floor:
        warnings.warn(f"levels {a}/{b} mix (purity {worst:.3f}) inside {b0:g}-{b1:g} G",
                      MixingWarning, stacklevel=2)
    slope, _ = np.polyfit(fields, freqs, 1)
    return float(slope)


def scan_levels(params: SpinSystemParams, b_grid, threads: int = 1) -> np.ndarray:
    """Eigenvalues over an axial field grid, shape (len(b_grid), 6), ascending per row."""
    b_grid = np.asarray(b_grid, dtype=float)

    def one(b):
        return np.linalg.eigvalsh(build_hamiltonian(params, FieldPoint(bz=float(b))))

    if threads > 1 and len(b_grid) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, b_grid))
    else:
        rows = [one(b) for b in b_grid]
    return np.array(rows).reshape(len(b_grid), 6)


def rf_scan(params: SpinSystemParams, b_grid, pair=("-1u", "-1d")) -> np.ndarray:
    """Frequency of a (nuclear) transition versus field, e.g. to locate a measured RF line."""
    return np.array([transition_frequency(params, FieldPoint(bz=float(b)), *pair)
                     for b in b_grid])


def nuclear_character(eig: EigenSystem) -> tuple[np.ndarray, np.ndarray]:
    """<k|Sz|k> and <k|Iz|k> for each eigenvector (eigen order)."""
    v = eig.vectors
    sz = np.real(np.einsum("ik,ij,jk->k", v.conj(), SZ, v))
    iz = np.real(np.einsum("ik,ij,jk->k", v.conj(), IZ, v))
    return sz, iz
