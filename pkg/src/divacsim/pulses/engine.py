"""Density-matrix evolution of the register under pulse sequences.

States are kept in the basis of labeled Hamiltonian eigenstates (basis-label
order +1u, +1d, 0u, 0d, -1u, -1d) and in the interaction picture with respect
to the noise-free Hamiltonian, so free evolution is the identity unless a
quasi-static detuning is present. Drives are treated in the rotating-wave
approximation of each addressed transition.

Quasi-static detunings are handled as an ensemble: every member carries one
(electron, nuclear) detuning drawn from the configured distribution and the
ensemble average is the reported state.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import cauchy, norm, qmc

from ..dnp import polarization_at, steady_populations
from ..errors import AddressingError, ConfigError, StepSizeError
from ..operators import IX, SX, ms0_projector
from ..params import FieldPoint, SpinSystemParams
from ..spin_core import EigenSystem, eigensystem, nuclear_character
from .dsl import Drive, Laser, PulseSequence, Read, Wait

TWO_PI = 2.0 * math.pi
CHANNEL_OPERATORS = {"MW": SX, "RF": IX}
MIN_LINE_WEIGHT = 1e-4


class RWAWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DensityState:
    """6x6 density matrix over the labeled eigenbasis, with its simulation clock (us)."""

    matrix: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (6, 6):
            raise ConfigError(f"density matrix must be 6x6, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def check(self, tol=1e-10, psd_tol=1e-9):
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise ConfigError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > tol:
            raise ConfigError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -psd_tol:
            raise ConfigError("density matrix is not positive semidefinite")
        return self


@dataclass(frozen=True)
class NoiseModel:
    """Decoherence settings. ``math.inf`` switches a channel off."""

    t1: float = math.inf
    t2: float = math.inf
    t2star_e: float = math.inf
    t2star_n: float = math.inf
    detuning: str = "lorentzian"
    samples: int = 10000
    shot_noise: bool = False
    photons: float = 1e5
    seed: int = 0

    def __post_init__(self):
        for name in ("t1", "t2", "t2star_e", "t2star_n"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.detuning not in ("delta", "lorentzian", "gaussian"):
            raise ConfigError(f"unknown detuning distribution {self.detuning!r}")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")

    @classmethod
    def from_params(cls, params: SpinSystemParams, **overrides) -> "NoiseModel":
        base = dict(t1=params.t1, t2=params.t2, t2star_e=params.t2star_e,
                    t2star_n=params.t2star_n)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(detuning="delta")

    @property
    def inhomogeneous(self) -> bool:
        return self.detuning != "delta" and (math.isfinite(self.t2star_e)
                                             or math.isfinite(self.t2star_n))

    def detunings(self, seed=None) -> np.ndarray:
        """Quasi-static (electron, nuclear) detunings in MHz, shape (samples, 2).

        Latin-hypercube stratified, so averages converge much faster than
        plain Monte Carlo while staying reproducible for a fixed seed.
        """
        if not self.inhomogeneous:
            return np.zeros((1, 2))
        seed = self.seed if seed is None else seed
        u = qmc.LatinHypercube(d=2, seed=np.random.default_rng(seed)).random(self.samples)
        out = np.zeros((self.samples, 2))
        for k, t2s in enumerate((self.t2star_e, self.t2star_n)):
            if not math.isfinite(t2s):
                continue
            if self.detuning == "lorentzian":
                # HWHM 1/(2 pi T2*): coherence decays as exp(-t/T2*)
                out[:, k] = cauchy.ppf(u[:, k], scale=1.0 / (TWO_PI * t2s))
            else:
                out[:, k] = norm.ppf(u[:, k], scale=1.0 / (math.sqrt(2) * math.pi * t2s))
        return out


@dataclass(frozen=True)
class SimTrace:
    sweep_values: np.ndarray
    signal: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.sweep_values) != len(self.signal):
            raise ConfigError("sweep and signal lengths differ")

    def to_csv(self) -> str:
        lines = ["sweep_value,signal"]
        lines += [f"{x!r},{y!r}" for x, y in zip(map(float, self.sweep_values),
                                                  map(float, self.signal))]
        return "\n".join(lines) + "\n"


class _Frame:
    """Per-eigensystem quantities shared by all operations."""

    def __init__(self, eig: EigenSystem):
        self.eig = eig
        self.v = eig.labeled_vectors
        self.energies = eig.labeled_values
        sz, iz = nuclear_character(eig)
        self.sz = sz[eig.order]
        self.iz = iz[eig.order]
        self.p0 = np.real(np.einsum("ik,ij,jk->k", self.v.conj(), ms0_projector(), self.v))
        self._ops = {}
        self._t1 = None

    def channel_matrix(self, channel):
        if channel not in self._ops:
            op = CHANNEL_OPERATORS[channel]
            self._ops[channel] = self.v.conj().T @ op @ self.v
        return self._ops[channel]

    def t1_transfer(self):
        # W[k, j]: population landing in k when the electron of state j is
        # replaced by the maximally mixed spin-1 state
        if self._t1 is None:
            w = np.empty((6, 6))
            for j in range(6):
                psi = self.v[:, j].reshape(3, 2)
                nuc = psi.T @ psi.conj()  # reduced nuclear state
                rep = np.kron(np.eye(3) / 3.0, nuc)
                w[:, j] = np.real(np.einsum("ik,ij,jk->k", self.v.conj(), rep, self.v))
            self._t1 = w
        return self._t1


_FRAMES: dict = {}


def _frame(eig: EigenSystem) -> _Frame:
    key = id(eig)
    fr = _FRAMES.get(key)
    if fr is None or fr.eig is not eig:
        if len(_FRAMES) > 64:
            _FRAMES.clear()
        fr = _FRAMES[key] = _Frame(eig)
    return fr


class _Ensemble:
    def __init__(self, rho, eps, time):
        # samples on the last axis keep per-level slices contiguous
        self.rho = rho  # (6, 6, n)
        self.eps = eps  # (6, n) MHz shifts per labeled state
        self.time = time

    @classmethod
    def from_state(cls, state: DensityState, frame: _Frame, detunings: np.ndarray):
        n = len(detunings)
        eps = frame.sz[:, None] * detunings[None, :, 0] + frame.iz[:, None] * detunings[None, :, 1]
        rho = np.repeat(state.matrix[:, :, None], n, axis=2)
        return cls(rho, eps, state.time)

    def mean_state(self) -> DensityState:
        m = self.rho.mean(axis=2)
        return DensityState(0.5 * (m + m.conj().T), self.time)

    def unitary(self, u):
        # u: (n, 6, 6)
        r = np.moveaxis(self.rho, 2, 0)
        r = u @ r @ np.conj(np.swapaxes(u, -1, -2))
        self.rho = np.ascontiguousarray(np.moveaxis(r, 0, 2))

    def reset(self, matrix):
        self.rho[...] = matrix[:, :, None]


def _addressed_lines(frame: _Frame, drive: Drive):
    m = frame.channel_matrix(drive.channel)
    e = frame.energies
    cands = []
    for i in range(6):
        for j in range(i + 1, 6):
            if abs(m[i, j]) ** 2 < MIN_LINE_WEIGHT:
                continue
            lo, hi = (i, j) if e[j] > e[i] else (j, i)
            cands.append((lo, hi, e[hi] - e[lo]))
    if not cands:
        raise AddressingError(f"no {drive.channel} transitions available")
    cands.sort(key=lambda c: abs(drive.frequency - c[2]))
    main = cands[0]
    window = 2.0 * drive.rabi_amplitude
    lines = [main]
    for c in cands[1:]:
        if abs(drive.frequency - c[2]) > window:
            break
        used = {x for line in lines for x in line[:2]}
        if used & set(c[:2]):
            raise AddressingError(
                f"{drive.channel} drive at {drive.frequency:.4f} MHz cannot separate the "
                f"{c[2]:.4f} and {main[2]:.4f} MHz transitions (Rabi {drive.rabi_amplitude} MHz)")
        lines.append(c)
    return lines


def _coupling(frame, drive, lo, hi, ref):
    m = frame.channel_matrix(drive.channel)
    return m[hi, lo] / m[ref[1], ref[0]]


def addressed_transition(eig: EigenSystem, drive: Drive):
    """Labels and frequency of the transition a drive selects."""
    fr = _frame(eig)
    lo, hi, w = _addressed_lines(fr, drive)[0]
    return eig.labels[eig.order[lo]], eig.labels[eig.order[hi]], float(w)


def _rot2(h00, h11, h01, tau):
    """exp(-i H tau) for batched 2x2 Hermitian H given its entries."""
    h0 = 0.5 * (h00 + h11)
    hz = 0.5 * (h00 - h11)
    hx = np.real(h01)
    hy = -np.imag(h01)
    r = np.sqrt(hx ** 2 + hy ** 2 + hz ** 2)
    c = np.cos(r * tau)
    s = np.where(r > 0, np.sin(r * tau) / np.where(r > 0, r, 1.0), tau)
    ph = np.exp(-1j * h0 * tau)
    u00 = ph * (c - 1j * s * hz)
    u11 = ph * (c + 1j * s * hz)
    u01 = ph * (-1j * s * (hx - 1j * hy))
    u10 = ph * (-1j * s * (hx + 1j * hy))
    return u00, u01, u10, u11


def _apply_blocks(rho, d, blocks):
    """rho -> U rho U^dagger for U = diag(d) with 2x2 blocks overwriting pairs of levels."""
    touched = {i for b in blocks for i in b[:2]}
    r = np.empty_like(rho)
    for k in range(6):
        if k not in touched:
            r[k] = d[k] * rho[k]
    for lo, hi, u00, u01, u10, u11 in blocks:
        a, b = rho[lo], rho[hi]
        r[lo] = u00 * a + u01 * b
        r[hi] = u10 * a + u11 * b
    out = np.empty_like(rho)
    for k in range(6):
        if k not in touched:
            out[:, k] = r[:, k] * np.conj(d[k])
    for lo, hi, u00, u01, u10, u11 in blocks:
        a, b = r[:, lo], r[:, hi]
        out[:, lo] = a * np.conj(u00) + b * np.conj(u01)
        out[:, hi] = a * np.conj(u10) + b * np.conj(u11)
    return out


def _ideal_gate(ens: _Ensemble, frame: _Frame, drive: Drive, lines):
    tau = float(drive.duration)
    n = ens.rho.shape[2]
    # idle levels only pick up their quasi-static phase
    d = np.exp(-1j * TWO_PI * ens.eps * tau)
    ref = lines[0]
    blocks = []
    for lo, hi, w in lines:
        g = _coupling(frame, drive, lo, hi, ref)
        delta = drive.frequency - w
        phi0 = TWO_PI * delta * ens.time + drive.phase
        h_ba = math.pi * drive.rabi_amplitude * g * np.exp(-1j * phi0)
        h00 = TWO_PI * ens.eps[lo]
        h11 = TWO_PI * (ens.eps[hi] - delta)
        u00, u01, u10, u11 = _rot2(h00, h11, np.full(n, np.conj(h_ba)), tau)
        back = np.exp(-1j * TWO_PI * delta * tau)
        blocks.append((lo, hi, u00, u01, back * u10, back * u11))
    ens.rho = _apply_blocks(ens.rho, d, blocks)


def _tree_product(us):
    # returns us[-1] @ ... @ us[0]
    while len(us) > 1:
        if len(us) % 2:
            us = np.concatenate([us, np.eye(us.shape[-1])[None]], axis=0)
        us = us[1::2] @ us[0::2]
    return us[0]


def _time_domain(ens: _Ensemble, frame: _Frame, drive: Drive, lines, cutoff=100.0,
                 max_steps=2_000_000):
    m = frame.channel_matrix(drive.channel)
    e = frame.energies
    ref = lines[0]
    omega = drive.rabi_amplitude
    terms = []
    for i in range(6):
        for j in range(i + 1, 6):
            if abs(m[i, j]) ** 2 < MIN_LINE_WEIGHT:
                continue
            lo, hi = (i, j) if e[j] > e[i] else (j, i)
            delta = drive.frequency - (e[hi] - e[lo])
            if abs(delta) > cutoff * max(omega, 1e-12):
                continue
            g = _coupling(frame, drive, lo, hi, ref)
            terms.append((lo, hi, delta, math.pi * omega * g))
    tau = float(drive.duration)
    if tau == 0:
        return
    if not terms:
        _ideal_gate(ens, frame, replace(drive, rabi_amplitude=0.0), lines[:1])
        return
    dmax = max(abs(t[2]) for t in terms)
    dt_max = min(0.01 / omega if omega > 0 else math.inf, 0.01 / dmax if dmax > 0 else math.inf)
    nsteps = max(int(math.ceil(tau / dt_max)), 1) if math.isfinite(dt_max) else 1
    if nsteps > max_steps:
        raise StepSizeError(f"time-domain drive needs {nsteps} steps (> {max_steps})")
    dt = tau / nsteps
    tmid = ens.time + (np.arange(nsteps) + 0.5) * dt
    hs = np.zeros((nsteps, 6, 6), dtype=complex)
    for lo, hi, delta, c in terms:
        val = c * np.exp(-1j * (TWO_PI * delta * tmid + drive.phase))
        hs[:, hi, lo] += val
        hs[:, lo, hi] += np.conj(val)
    out = []
    for s in range(ens.rho.shape[2]):
        h = hs.copy()
        h[:, np.arange(6), np.arange(6)] = TWO_PI * ens.eps[:, s][None, :]
        w, v = np.linalg.eigh(h)
        steps = (v * np.exp(-1j * w * dt)[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))
        out.append(_tree_product(steps))
    ens.unitary(np.array(out))


def _markov(ens: _Ensemble, frame: _Frame, duration, noise: NoiseModel | None):
    if noise is None or duration <= 0:
        return
    if math.isfinite(noise.t2):
        dm = frame.sz[:, None] - frame.sz[None, :]
        ens.rho *= np.exp(-(dm ** 2) * duration / noise.t2)[:, :, None]
    if math.isfinite(noise.t1):
        k = math.exp(-duration / noise.t1)
        idx = np.arange(6)
        pops = np.real(ens.rho[idx, idx, :])
        target = frame.t1_transfer() @ pops
        ens.rho *= k
        ens.rho[idx, idx, :] += (1 - k) * target


def _free(ens: _Ensemble, frame: _Frame, duration, noise):
    if duration > 0 and np.any(ens.eps):
        ph = np.exp(-1j * TWO_PI * ens.eps * duration)
        ens.rho *= ph[:, None, :] * np.conj(ph)[None, :, :]
    _markov(ens, frame, duration, noise)
    ens.time += duration


def _drive(ens, frame, drive: Drive, mode, noise):
    if drive.rabi_amplitude < 0:
        raise ConfigError("rabi amplitude must be >= 0")
    if drive.duration < 0:
        raise ConfigError("drive duration must be >= 0")
    lines = _addressed_lines(frame, drive)
    if drive.rabi_amplitude > 0.1 * lines[0][2]:
        warnings.warn(f"Rabi amplitude {drive.rabi_amplitude} MHz is not small against the "
                      f"{lines[0][2]:.3f} MHz transition; rotating-wave result is unreliable",
                      RWAWarning, stacklevel=3)
    if mode == "ideal_gate":
        _ideal_gate(ens, frame, drive, lines)
    elif mode == "time_domain":
        _time_domain(ens, frame, drive, lines)
    else:
        raise ConfigError(f"unknown drive mode {mode!r}")
    _markov(ens, frame, drive.duration, noise)
    ens.time += drive.duration


def _detunings(noise, seed=None):
    return np.zeros((1, 2)) if noise is None else noise.detunings(seed)


def apply_drive(state: DensityState, drive: Drive, eig: EigenSystem, mode: str = "ideal_gate",
                noise: NoiseModel | None = None) -> DensityState:
    """Apply one resolved drive primitive.

    ``ideal_gate`` rotates only the addressed two-level subspace (generalized
    Rabi formula, detuning included); ``time_domain`` integrates every nearby
    transition of the channel with piecewise-constant steps no longer than
    min(0.01/Rabi, 0.01/detuning).
    """
    fr = _frame(eig)
    ens = _Ensemble.from_state(state, fr, _detunings(noise))
    _drive(ens, fr, drive, mode, noise)
    return ens.mean_state()


def evolve_noise(state: DensityState, duration: float, noise: NoiseModel | None,
                 eig: EigenSystem, detuning=None) -> DensityState:
    """Free evolution for ``duration`` us under the noise model.

    ``detuning`` fixes one (electron, nuclear) quasi-static offset in MHz;
    otherwise the model's distribution is averaged over.
    """
    if duration < 0:
        raise ConfigError("duration must be >= 0")
    fr = _frame(eig)
    det = np.atleast_2d(detuning) if detuning is not None else _detunings(noise)
    ens = _Ensemble.from_state(state, fr, np.asarray(det, dtype=float))
    _free(ens, fr, float(duration), noise)
    return ens.mean_state()


def initialize(params: SpinSystemParams, field, mode: str = "simple", eig=None,
               residual: float = 0.0) -> DensityState:
    """Optically pumped start state: ``simple`` (no nuclear polarization), ``dnp``
    (flip-flop polarization at this field) or ``pure`` (ideal |0,u>)."""
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    if mode == "simple":
        p = 0.0
    elif mode == "dnp":
        p = polarization_at(params, field.bz).p
    elif mode == "pure":
        p = 1.0
    else:
        raise ConfigError(f"unknown initialization mode {mode!r}")
    pops = steady_populations(p, residual).values
    return DensityState(np.diag(pops).astype(complex))


def ms0_population(state: DensityState, eig: EigenSystem) -> float:
    fr = _frame(eig)
    return float(np.real(np.diag(state.matrix)) @ fr.p0)


def read_signal(state: DensityState, params: SpinSystemParams, eig: EigenSystem | None = None,
                rng=None, photons: float = 1e5) -> float:
    """Normalized photoluminescence 1 - contrast * (1 - P(ms=0)).

    Coherences between eigenstates oscillate far faster than the readout
    window and are dropped. Poisson shot noise is added when ``rng`` is given.
    """
    if eig is None:
        p0 = float(np.real(state.matrix[2, 2] + state.matrix[3, 3]))
    else:
        p0 = ms0_population(state, eig)
    p0 = min(max(p0, 0.0), 1.0)
    s = 1.0 - params.readout_contrast * (1.0 - p0)
    if rng is not None:
        s = rng.poisson(s * photons) / photons
    return float(s)


def _hash(obj) -> str:
    return hashlib.sha256(str(obj).encode()).hexdigest()[:16]


def simulate(seq: PulseSequence, params: SpinSystemParams, field, noise: NoiseModel | None = None,
             mode: str = "ideal_gate", init: str = "simple", eig: EigenSystem | None = None,
             seed: int | None = None, start: DensityState | None = None):
    """Run one resolved sequence; returns (read values, final averaged state)."""
    if not seq.is_resolved:
        seq = seq.resolve()
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    eig = eig or eigensystem(params, field)
    fr = _frame(eig)
    init_state = initialize(params, field, init) if start is None else start
    ens = _Ensemble.from_state(init_state, fr, _detunings(noise, seed))
    reads = []
    rng = None
    if noise is not None and noise.shot_noise:
        rng = np.random.default_rng(noise.seed if seed is None else seed)
    photons = noise.photons if noise is not None else 1e5

    def reset(dur):
        t = ens.time + dur
        ens.reset(init_state.matrix)
        ens.time = t

    for prim in seq.primitives:
        if isinstance(prim, Laser):
            reset(prim.duration)
        elif isinstance(prim, Wait):
            _free(ens, fr, prim.duration, noise)
        elif isinstance(prim, Drive):
            _drive(ens, fr, prim, mode, noise)
        elif isinstance(prim, Read):
            reads.append(read_signal(ens.mean_state(), params, eig, rng, photons))
            reset(prim.window)
    return reads, ens.mean_state()


def evolve_sequence(state: DensityState, seq: PulseSequence, eig: EigenSystem,
                    params: SpinSystemParams, noise=None, mode="ideal_gate", seed=None):
    """Apply drives and waits of ``seq`` to ``state``; lasers and reads are not allowed."""
    for prim in seq.primitives:
        if isinstance(prim, (Laser, Read)):
            raise ConfigError("evolve_sequence takes coherent primitives only")
    _, final = simulate(seq, params, eig.field or FieldPoint(), noise, mode, eig=eig,
                        seed=seed, start=state)
    return final


def run_experiment(template: PulseSequence, sweep: dict, params: SpinSystemParams, field,
                   noise: NoiseModel | None = None, mode: str = "ideal_gate",
                   init: str = "simple", bindings: dict | None = None) -> SimTrace:
    """Sweep one sequence variable; the signal at each point is the last read.

    ``sweep`` maps a single variable name to its values. Point ``i`` draws its
    noise samples and shot noise from seed ``noise.seed + i``.
    """
    if len(sweep) != 1:
        raise ConfigError("sweep must bind exactly one variable")
    (name, values), = sweep.items()
    values = np.asarray(values, dtype=float)
    free = set(template.free_variables()) - set(bindings or {}) - {name}
    if free:
        missing = sorted(free)[0]
        template.resolve({**(bindings or {}), name: 0.0})  # raises with location
        raise ConfigError(f"unbound variable ${missing}")
    if not isinstance(field, FieldPoint):
        field = FieldPoint(bz=float(field))
    eig = eigensystem(params, field)
    base_seed = noise.seed if noise is not None else 0
    sig = np.empty(len(values))
    for i, v in enumerate(values):
        seq = template.resolve({**(bindings or {}), name: float(v)})
        reads, _ = simulate(seq, params, field, noise, mode, init, eig=eig, seed=base_seed + i)
        if not reads:
            raise ConfigError("sequence has no read")
        sig[i] = reads[-1]
    meta = {
        "sweep_variable": name,
        "sequence_hash": template.digest(),
        "params_hash": _hash(params.to_json()),
        "field_gauss": field.bz,
        "mode": mode,
        "init": init,
        "seed": base_seed,
    }
    return SimTrace(values, sig, meta)
