import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divacsim.errors import ConfigError
from divacsim.operators import (BASIS, I_VEC, IX, IY, IZ, S_VEC, SX, SY, SZ, basis_vector,
                                label, ms0_projector)
from divacsim.params import FieldPoint, SpinSystemParams, pl6, pl6a, pl6b, pl6c, preset


def comm(a, b):
    return a @ b - b @ a


def test_spin_commutators():
    assert np.allclose(comm(SX, SY), 1j * SZ)
    assert np.allclose(comm(IX, IY), 1j * IZ)
    for s in S_VEC:
        for i in I_VEC:
            assert np.allclose(comm(s, i), 0)


def test_casimirs():
    s2 = sum(s @ s for s in S_VEC)
    i2 = sum(i @ i for i in I_VEC)
    assert np.allclose(s2, 2 * np.eye(6))
    assert np.allclose(i2, 0.75 * np.eye(6))


def test_basis_order():
    assert [lab.code for lab in BASIS] == ["+1u", "+1d", "0u", "0d", "-1u", "-1d"]
    assert np.allclose(np.real(np.diag(SZ)), [1, 1, 0, 0, -1, -1])
    assert np.allclose(np.real(np.diag(IZ)), [0.5, -0.5] * 3)
    assert np.allclose(ms0_projector(), np.diag([0, 0, 1, 1, 0, 0]))


@pytest.mark.parametrize("spec,code", [("0u", "0u"), ("-1d", "-1d"), ("+1,up", "+1u"),
                                       ("|0,↓⟩", "0d"), ((-1, "u"), "-1u")])
def test_label_parsing(spec, code):
    assert label(spec).code == code


def test_bad_label():
    with pytest.raises(ValueError):
        label("2u")


def test_basis_vector():
    assert basis_vector("0d")[3] == 1 and np.sum(np.abs(basis_vector("0d"))) == 1


def test_presets():
    assert pl6b().E == 0 and pl6b().A[2, 2] == 56.5
    assert pl6a().E == 6.95 and not pl6a().A.any()
    assert pl6c().t1 == 188.0 and pl6c().t2star_e == 0.94
    assert pl6().E == 6.95 and pl6().A[0, 0] == 93.1
    with pytest.raises(ConfigError):
        preset("pl7")


@pytest.mark.parametrize("bad", [dict(D=-1.0), dict(t1=0.0), dict(gamma_e=-2.8),
                                 dict(readout_contrast=1.5), dict(D=float("nan")),
                                 dict(A=[[0, 1, 0], [0, 0, 0], [0, 0, 0]])])
def test_validation(bad):
    with pytest.raises(ConfigError):
        SpinSystemParams(**bad)


def test_field_validation():
    with pytest.raises(ConfigError):
        FieldPoint(bz=float("inf"))
    assert np.allclose(FieldPoint(1, 2, 3).vector, [2, 3, 1])


def test_unknown_field_in_dict():
    d = pl6b().to_dict()
    d["Q"] = 1
    with pytest.raises(ConfigError):
        SpinSystemParams.from_dict(d)


finite = st.floats(-500, 500, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(D=st.floats(0, 3000), E=finite, axx=finite, azz=finite, axz=finite,
       t2s=st.floats(0.01, 100))
def test_json_round_trip(D, E, axx, azz, axz, t2s):
    a = [[axx, 0, axz], [0, axx, 0], [axz, 0, azz]]
    p = SpinSystemParams(D=D, E=E, A=a, t2star_e=t2s)
    q = SpinSystemParams.from_json(p.to_json())
    assert q.to_json() == p.to_json()
    assert np.array_equal(q.A, p.A)
    json.loads(p.to_json())
