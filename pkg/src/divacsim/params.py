"""Physical parameters of the divacancy / 13C register.

Units throughout: MHz, microseconds, Gauss.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

GAMMA_E = 2.8  # MHz/G  (2.8 GHz/T)
GAMMA_13C = 1.0708e-3  # MHz/G  (10.708 MHz/T)

PL6_D = 1340.4
PL6_E = 6.95
PL6_A_DIAG = (93.1, 93.1, 56.5)


def _as_tensor(a):
    a = np.asarray(a, dtype=float)
    if a.shape == (3,):
        a = np.diag(a)
    if a.shape != (3, 3):
        raise ConfigError(f"hyperfine tensor must be 3x3, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class SpinSystemParams:
    """Constants of the coupled S=1 / I=1/2 register.

    ``A`` is the 3x3 hyperfine tensor in MHz (a length-3 sequence is read as
    its diagonal). ``D`` may be zero for degenerate test cases.
    """

    D: float = PL6_D
    E: float = 0.0
    gamma_e: float = GAMMA_E
    gamma_n: float = GAMMA_13C
    A: np.ndarray = field(default_factory=lambda: np.diag(PL6_A_DIAG))
    t1: float = 146.0
    t2: float = 4.62
    t2star_e: float = 0.46
    t2star_n: float = 13.0
    readout_contrast: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "A", _as_tensor(self.A))
        self.validate()

    def validate(self):
        a = self.A
        if not np.all(np.isfinite(a)):
            raise ConfigError("hyperfine tensor has non-finite entries")
        if np.max(np.abs(a - a.T)) > 1e-12:
            raise ConfigError("hyperfine tensor must be symmetric")
        for name in ("D", "E", "gamma_e", "gamma_n"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.D < 0:
            raise ConfigError("D must be non-negative")
        if self.gamma_e < 0:
            raise ConfigError("gamma_e must be non-negative")
        for name in ("t1", "t2", "t2star_e", "t2star_n"):
            v = getattr(self, name)
            if not (v > 0):
                raise ConfigError(f"{name} must be > 0, got {v}")
        if not 0.0 <= self.readout_contrast <= 1.0:
            raise ConfigError("readout_contrast must lie in [0, 1]")

    def replace(self, **changes) -> "SpinSystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["A"] = [[float(x) for x in row] for row in self.A]
        return {k: (float(v) if not isinstance(v, list) else v) for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SpinSystemParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown parameter fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "SpinSystemParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FieldPoint:
    """Magnetic field in Gauss; ``bz`` is along the defect (c) axis."""

    bz: float = 0.0
    bx: float = 0.0
    by: float = 0.0

    def __post_init__(self):
        for v in (self.bz, self.bx, self.by):
            if not math.isfinite(v):
                raise ConfigError("field components must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=float)


def pl6b() -> SpinSystemParams:
    """PL6 B register: first-shell 13C, E taken as zero."""
    return SpinSystemParams()


def pl6a() -> SpinSystemParams:
    """PL6 A: bare electron spin with the fitted E and no nuclear coupling."""
    return SpinSystemParams(E=PL6_E, A=np.zeros((3, 3)))


def pl6c() -> SpinSystemParams:
    """Waveguide-integrated PL6 C register."""
    return SpinSystemParams(t1=188.0, t2star_e=0.94)


def pl6() -> SpinSystemParams:
    """All fitted constants together, including E and the hyperfine tensor."""
    return SpinSystemParams(E=PL6_E)


PRESETS = {"pl6": pl6, "pl6a": pl6a, "pl6b": pl6b, "pl6c": pl6c}


def preset(name: str) -> SpinSystemParams:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
