"""Spin operators and the fixed product basis.

The 6-dim product basis is ordered

    |+1,u>, |+1,d>, |0,u>, |0,d>, |-1,u>, |-1,d>

(electron m_s outer, nuclear inner, u = up, d = down). Every matrix in the
package is written against this order.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

_S2 = np.sqrt(2.0)

# spin-1, basis (+1, 0, -1)
SX1 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / _S2
SY1 = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / _S2
SZ1 = np.diag([1.0, 0.0, -1.0]).astype(complex)

# spin-1/2, basis (up, down)
IX1 = np.array([[0, 1], [1, 0]], dtype=complex) / 2
IY1 = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
IZ1 = np.diag([0.5, -0.5]).astype(complex)

_E3 = np.eye(3)
_E2 = np.eye(2)

SX = np.kron(SX1, _E2)
SY = np.kron(SY1, _E2)
SZ = np.kron(SZ1, _E2)
IX = np.kron(_E3, IX1)
IY = np.kron(_E3, IY1)
IZ = np.kron(_E3, IZ1)

S_VEC = (SX, SY, SZ)
I_VEC = (IX, IY, IZ)


class Label(NamedTuple):
    """Product-basis label: electron projection and nuclear spin (+1 up, -1 down)."""

    ms: int
    nuc: int

    def __str__(self):
        return f"|{self.ms:+d},{'↑' if self.nuc > 0 else '↓'}⟩".replace("+0", "0")

    @property
    def code(self):
        """ASCII form used in CSV/JSON, e.g. ``0u`` or ``-1d``."""
        ms = "0" if self.ms == 0 else f"{self.ms:+d}"
        return ms + ("u" if self.nuc > 0 else "d")


BASIS = (
    Label(1, 1), Label(1, -1),
    Label(0, 1), Label(0, -1),
    Label(-1, 1), Label(-1, -1),
)
BASIS_INDEX = {lab: i for i, lab in enumerate(BASIS)}


def label(spec) -> Label:
    """Coerce ``"0u"``, ``"-1d"``, ``"+1,up"`` or a ``(ms, nuc)`` pair to a Label."""
    if isinstance(spec, Label):
        return spec
    if isinstance(spec, tuple):
        return Label(int(spec[0]), 1 if spec[1] in (1, "u", "up", "↑") else -1)
    s = str(spec).strip().strip("|⟩>").replace(",", "").replace(" ", "")
    for suffix, nuc in (("up", 1), ("dn", -1), ("down", -1), ("u", 1), ("d", -1),
                        ("↑", 1), ("↓", -1)):
        if s.endswith(suffix):
            ms = int(s[: -len(suffix)])
            lab = Label(ms, nuc)
            if lab in BASIS_INDEX:
                return lab
            break
    raise ValueError(f"not a basis label: {spec!r}")


def basis_vector(lab) -> np.ndarray:
    v = np.zeros(6, dtype=complex)
    v[BASIS_INDEX[label(lab)]] = 1.0
    return v


def ms0_projector() -> np.ndarray:
    return np.diag([0, 0, 1, 1, 0, 0]).astype(complex)
