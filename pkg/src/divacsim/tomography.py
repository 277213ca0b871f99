"""Two-qubit state tomography of the electron/nuclear register and the Bell-state circuit.

Logical encoding: electron ms=0 -> 0, ms=-1 -> 1 (first qubit); nuclear
up -> 0, down -> 1 (second qubit). States live in the labeled-eigenbasis
rotating frame used by the pulse engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError
from .operators import BASIS_INDEX, label
from .params import FieldPoint, SpinSystemParams
from .pulses.dsl import Drive, Laser, PulseSequence
from .pulses.engine import (DensityState, NoiseModel, _addressed_lines, _frame, simulate)
from .spin_core import EigenSystem, eigensystem

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
LOGICAL_LABELS = ("00", "01", "10", "11")


def _ry(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rx(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


# single-qubit pre-rotations that map the measured axis onto Z
_PRE = {"I": np.eye(2, dtype=complex), "Z": np.eye(2, dtype=complex),
        "X": _ry(-math.pi / 2), "Y": _rx(math.pi / 2)}
# rotation axis (x, y) of each pre-rotation, used to set pulse phases
_PRE_AXIS = {"X": (0.0, -1.0), "Y": (1.0, 0.0)}


@dataclass(frozen=True)
class SubspaceMap:
    """Embedding of the four register levels into the six-level space."""

    levels: tuple = ("0u", "0d", "-1u", "-1d")

    def __post_init__(self):
        labs = tuple(label(x) for x in self.levels)
        if len(set(labs)) != 4:
            raise ConfigError("subspace embedding must be injective")
        object.__setattr__(self, "levels", labs)

    @property
    def indices(self):
        return [BASIS_INDEX[lab] for lab in self.levels]

    def extract(self, state) -> tuple:
        """(DensityMatrix4 renormalized inside the subspace, leakage)."""
        m = state.matrix if isinstance(state, DensityState) else np.asarray(state)
        idx = self.indices
        sub = m[np.ix_(idx, idx)]
        inside = float(np.real(np.trace(sub)))
        leak = min(max(1.0 - inside, 0.0), 1.0)
        if inside <= 0:
            raise ConfigError("state has no weight inside the register subspace")
        sub = sub / inside
        return DensityMatrix4(0.5 * (sub + sub.conj().T)), leak

    def embed(self, rho4) -> DensityState:
        m = np.zeros((6, 6), dtype=complex)
        idx = self.indices
        m[np.ix_(idx, idx)] = _mat(rho4)
        return DensityState(m)


@dataclass(frozen=True)
class DensityMatrix4:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ConfigError(f"expected a 4x4 matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def check(self, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-9):
        m = self.matrix
        if not np.all(np.isfinite(m)):
            raise ConfigError("density matrix has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > herm_tol:
            raise ConfigError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > trace_tol:
            raise ConfigError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -psd_tol:
            raise ConfigError("density matrix is not positive semidefinite")
        return self

    @classmethod
    def pure(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def to_json_obj(self, labels=LOGICAL_LABELS) -> dict:
        return {"basis": list(labels),
                "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix]}

    @classmethod
    def from_json_obj(cls, obj):
        m = np.array([[complex(re, im) for re, im in row] for row in obj["matrix"]])
        return cls(m)


def _mat(rho):
    return rho.matrix if isinstance(rho, (DensityMatrix4, DensityState)) else np.asarray(rho, complex)


PSI_PLUS = DensityMatrix4.pure([1, 0, 0, 1])
PSI_MINUS = DensityMatrix4.pure([1, 0, 0, -1])


@dataclass(frozen=True)
class FidelityReport:
    uhlmann: float
    squared: float
    target: str = ""

    def to_dict(self):
        return {"uhlmann": self.uhlmann, "squared": self.squared, "target": self.target}


@dataclass(frozen=True)
class MeasurementSetting:
    """One Pauli setting: rotate each qubit so its axis maps onto Z, then read populations."""

    label: str
    rotation: np.ndarray = field(repr=False)
    fragment: PulseSequence | None = field(default=None, repr=False)

    @property
    def operator(self) -> np.ndarray:
        return np.kron(PAULI[self.label[0]], PAULI[self.label[1]])

    @property
    def readout(self) -> str:
        axes = {"I": "ignore", "Z": "z"}
        e = axes.get(self.label[0], "z after rotation")
        n = axes.get(self.label[1], "z after rotation")
        return f"electron: {e}; nuclear: {n}"

    @property
    def signs(self) -> np.ndarray:
        """Eigenvalue of the measured parity for each logical outcome."""
        ze = np.array([1, 1, -1, -1]) if self.label[0] != "I" else np.ones(4)
        zn = np.array([1, -1, 1, -1]) if self.label[1] != "I" else np.ones(4)
        return ze * zn


@dataclass(frozen=True)
class TomoRecord:
    setting: str
    expectation: float
    shots: int = 0  # 0 marks an exact (noise-free) expectation


@dataclass
class TomoResult:
    records: list
    rho: DensityMatrix4
    report: FidelityReport | None = None
    leakage: float = 0.0


def _line_phase(eig, lo_lab, hi_lab, axis):
    """Drive phase rotating the logical pair (lo_lab -> 0, hi_lab -> 1) about ``axis``.

    In the engine a resonant drive with phase ph rotates the energy-ordered pair
    (lower, upper) about (cos ph, -sin ph); swapping the order flips the y component.
    """
    ax, ay = axis
    if eig.energy(lo_lab) > eig.energy(hi_lab):
        ay = -ay
    return math.atan2(-ay, ax)


def _pre_fragment(setting_label, eig, mw_rabi, rf_rabi):
    prims = []
    pairs = {0: (("0u", "-1u"), ("0d", "-1d"), "MW", mw_rabi),
             1: (("0u", "0d"), ("-1u", "-1d"), "RF", rf_rabi)}
    for q in (0, 1):
        p = setting_label[q]
        if p in ("I", "Z"):
            continue
        pair_a, pair_b, chan, rabi = pairs[q]
        for lo, hi in (pair_a, pair_b):
            freq = abs(eig.energy(hi) - eig.energy(lo))
            ph = _line_phase(eig, lo, hi, _PRE_AXIS[p])
            prims.append(Drive(chan, freq, rabi, 1.0 / (4 * rabi), ph))
    return PulseSequence(tuple(prims))


def tomo_settings(eig: EigenSystem | None = None, mw_rabi: float = 5.0,
                  rf_rabi: float = 1.0) -> list:
    """The 16 two-qubit Pauli settings, II first.

    With an eigensystem, each setting also carries the pulse fragment that
    performs its pre-rotation (one pi/2 pulse per nuclear/electron branch).
    """
    out = []
    for a, b in product("IXYZ", repeat=2):
        lab = a + b
        rot = np.kron(_PRE[a], _PRE[b])
        frag = _pre_fragment(lab, eig, mw_rabi, rf_rabi) if eig is not None else None
        out.append(MeasurementSetting(lab, rot, frag))
    return out


def design_matrix(settings) -> np.ndarray:
    """Rows map vec(rho) (row-major) to each setting's expectation value."""
    return np.array([s.operator.T.reshape(-1) for s in settings])


def _check_rho(rho) -> DensityMatrix4:
    if not isinstance(rho, DensityMatrix4):
        rho = DensityMatrix4(rho)
    return rho.check()


def forward_model(rho, settings=None, noise: float = 0.0, shots: int | None = None,
                  seed: int = 0) -> list:
    """Expectation records for each setting.

    Exact mode (``shots`` None) returns Tr(rho P) computed through the
    setting's pre-rotation and population readout. ``noise`` is a symmetric
    per-qubit readout flip probability. With ``shots`` the parity outcome is
    sampled binomially from a generator seeded by ``seed``.
    """
    rho = _check_rho(rho)
    settings = tomo_settings() if settings is None else settings
    if not 0 <= noise <= 0.5:
        raise ConfigError("readout flip probability must lie in [0, 0.5]")
    if shots is not None and shots < 1:
        raise ConfigError("shots must be >= 1")
    rng = np.random.default_rng(seed) if shots is not None else None
    recs = []
    for s in settings:
        r = s.rotation
        pops = np.real(np.diag(r @ rho.matrix @ r.conj().T))
        e = float(pops @ s.signs)
        weight = sum(c != "I" for c in s.label)
        e *= (1 - 2 * noise) ** weight
        if s.label == "II":
            recs.append(TomoRecord("II", 1.0, shots or 0))
            continue
        if rng is not None:
            k = rng.binomial(shots, min(max((1 + e) / 2, 0.0), 1.0))
            e = 2 * k / shots - 1
        recs.append(TomoRecord(s.label, float(e), shots or 0))
    return recs


def project_psd(m: np.ndarray) -> np.ndarray:
    """Nearest trace-one PSD matrix in Frobenius norm.

    The eigenvalues are projected onto the probability simplex (sort, find the
    common shift, clip), which is the exact Frobenius projection.
    """
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
    theta = css[k] / (k + 1)
    lam = np.clip(w - theta, 0, None)
    out = (v * lam) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def _linear(records):
    ops = {a + b: np.kron(PAULI[a], PAULI[b]) for a, b in product("IXYZ", repeat=2)}
    labels = [r.setting for r in records]
    unknown = set(labels) - set(ops)
    if unknown:
        raise ConfigError(f"unknown settings {sorted(unknown)}")
    a = np.array([ops[s].T.reshape(-1) for s in labels])
    if np.linalg.matrix_rank(a) < 16:
        raise ConfigError("record set is rank deficient: all 16 Pauli settings are required")
    y = np.array([r.expectation for r in records], dtype=float)
    vec = np.linalg.pinv(a) @ y
    return vec.reshape(4, 4)


def _mle(records, start, iters=5000, tol=1e-12):
    # iterative R rho R over the two outcome projectors of each setting
    projs, freqs = [], []
    for r in records:
        if r.setting == "II":
            continue
        p = np.kron(PAULI[r.setting[0]], PAULI[r.setting[1]])
        e = min(max(r.expectation, -1.0), 1.0)
        for sgn in (1, -1):
            projs.append((np.eye(4) + sgn * p) / 2)
            freqs.append((1 + sgn * e) / 2)
    projs = np.array(projs)
    freqs = np.array(freqs)
    rho = start
    for _ in range(iters):
        probs = np.real(np.einsum("kij,ji->k", projs, rho))
        ratio = np.where(probs > 1e-15, freqs / np.maximum(probs, 1e-15), 0.0)
        r_op = np.einsum("k,kij->ij", ratio, projs)
        new = r_op @ rho @ r_op
        new = new / np.real(np.trace(new))
        new = 0.5 * (new + new.conj().T)
        if np.max(np.abs(new - rho)) < tol:
            return new
        rho = new
    return rho


def reconstruct(records, method: str = "linear") -> DensityMatrix4:
    """Linear inversion projected onto valid states; ``method="mle"`` refines by R rho R iteration."""
    if method not in ("linear", "mle"):
        raise ConfigError(f"unknown reconstruction method {method!r}")
    rho = project_psd(_linear(records))
    if method == "mle":
        # keep the start full rank so that the multiplicative update can move every eigenvalue
        start = 0.999 * rho + 0.001 * np.eye(4) / 4
        rho = _mle(records, start)
    return DensityMatrix4(rho)


def _sqrtm_psd(m):
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.where(w < 1e-13, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def trace_distance(a, b) -> float:
    d = _mat(a) - _mat(b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def fidelity(rho, target, target_label: str = "") -> FidelityReport:
    """Uhlmann fidelity Tr sqrt(sqrt(rho) target sqrt(rho)) and its square.

    Evaluated as the nuclear norm of sqrt(rho) sqrt(target), which is
    symmetric in the two arguments by construction.
    """
    a = _check_rho(rho).matrix
    b = _check_rho(target).matrix
    s = np.linalg.svd(_sqrtm_psd(a) @ _sqrtm_psd(b), compute_uv=False)
    f = float(min(max(s.sum(), 0.0), 1.0))
    return FidelityReport(f, f * f, target_label)


def _register_lines(eig):
    return {"MW": ("0u", "-1u"), "RF1": ("-1u", "-1d"), "RF2": ("0u", "0d")}


def register_frequencies(eig: EigenSystem) -> dict:
    """Frequencies (MHz) of the MW, RF1 and RF2 working transitions."""
    return {k: abs(eig.energy(b) - eig.energy(a)) for k, (a, b) in _register_lines(eig).items()}


def _check_resolved(eig, freqs, mw_rabi, rf_rabi):
    fr = _frame(eig)
    for name, (a, b) in _register_lines(eig).items():
        chan = "MW" if name == "MW" else "RF"
        rabi = mw_rabi if chan == "MW" else rf_rabi
        lines = _addressed_lines(fr, Drive(chan, freqs[name], rabi, 0.0))
        order = eig.order
        got = {eig.labels[order[lines[0][0]]], eig.labels[order[lines[0][1]]]}
        if got != {label(a), label(b)}:
            raise ConfigError(f"{name} transition {a}<->{b} is not resolvable at this field "
                              f"with a {rabi} MHz drive")


BELL_FIELD = 478.0


def bell_circuit(params: SpinSystemParams, field=BELL_FIELD, mw_rabi: float = 5.0,
                 rf_rabi: float = 1.0, laser: float = 3.0) -> PulseSequence:
    """Laser initialization, MW pi/2 on |0,u>-|-1,u>, RF pi on |-1,u>-|-1,d>.

    The RF phase is chosen so that the noise-free output is exactly
    (|0,u> + |-1,d>)/sqrt(2) in the rotating frame (zero relative phase).
    """
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    eig = eigensystem(params, field)
    freqs = register_frequencies(eig)
    _check_resolved(eig, freqs, mw_rabi, rf_rabi)
    mw_ph = _line_phase(eig, "0u", "-1u", (0.0, 1.0))
    mw = Drive("MW", freqs["MW"], mw_rabi, 1.0 / (4 * mw_rabi), mw_ph)
    rf = Drive("RF", freqs["RF1"], rf_rabi, 1.0 / (2 * rf_rabi), 0.0)
    seq = PulseSequence((Laser(laser), mw, rf))
    # measure the residual relative phase once and cancel it with the RF phase
    _, out = simulate(seq, params, field, None, "ideal_gate", "pure", eig=eig)
    i0, i1 = BASIS_INDEX[label("0u")], BASIS_INDEX[label("-1d")]
    rel = np.angle(out.matrix[i1, i0])
    best = None
    for ph in (rel, -rel):
        trial = PulseSequence((Laser(laser), mw, Drive("RF", rf.frequency, rf_rabi,
                                                        rf.duration, float(ph))))
        _, o = simulate(trial, params, field, None, "ideal_gate", "pure", eig=eig)
        err = abs(np.angle(o.matrix[i1, i0]))
        if best is None or err < best[0]:
            best = (err, trial)
    return best[1]


def run_bell(params: SpinSystemParams, field=BELL_FIELD, noise: NoiseModel | None = None,
             init: str = "dnp", mode: str = "ideal_gate", shots: int | None = None,
             seed: int = 0, method: str = "linear", circuit: PulseSequence | None = None,
             **circuit_kw) -> TomoResult:
    """Circuit -> register density matrix -> tomography records -> reconstruction -> fidelity."""
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    eig = eigensystem(params, field)
    seq = circuit if circuit is not None else bell_circuit(params, field, **circuit_kw)
    _, state = simulate(seq, params, field, noise, mode, init, eig=eig, seed=seed)
    rho4, leak = SubspaceMap().extract(state)
    recs = forward_model(rho4, tomo_settings(), shots=shots, seed=seed)
    rec_rho = reconstruct(recs, method)
    return TomoResult(recs, rec_rho, fidelity(rec_rho, PSI_PLUS, "Psi+"), leak)


def random_density_matrix(rng, dim=4, rank=None) -> DensityMatrix4:
    """Ginibre-ensemble random state (helper for tests and benchmarks)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix4(m / np.real(np.trace(m)))


def random_unitary(rng, dim=4) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


