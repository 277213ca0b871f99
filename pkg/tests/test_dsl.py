import pytest
from hypothesis import given, settings, strategies as st

from divacsim.errors import DSLError
from divacsim.io import bundled_sequence, bundled_sequences
from divacsim.pulses import (Drive, Laser, Read, Var, Wait, format_sequence, parse_sequence)


def test_three_primitive_sequence():
    seq = parse_sequence("laser 3us; mw f=1288.0MHz amp=2.5MHz dur=$t; read 0.5us")
    assert len(seq) == 3
    assert seq.free_variables() == ["t"]
    r = seq.resolve({"t": 0.1})
    assert r.is_resolved
    assert r.primitives == (Laser(3.0), Drive("MW", 1288.0, 2.5, 0.1, 0.0), Read(0.5))


def test_negative_duration_location():
    with pytest.raises(DSLError) as ei:
        parse_sequence("mw dur=-1us")
    assert (ei.value.line, ei.value.col) == (1, 8)


def test_repeat_expands():
    seq = parse_sequence("repeat 2 { rf f=27.688MHz amp=0.1MHz dur=5us }", require_read=False)
    assert seq.primitives == (Drive("RF", 27.688, 0.1, 5.0),) * 2


def test_nested_repeat_and_units():
    seq = parse_sequence(
        "repeat 2 {\n repeat 3 { wait 100ns }\n mw f=1000MHz amp=500kHz dur=1us ph=1.5rad }\n"
        "read 1us")
    assert len(seq) == 2 * 4 + 1
    assert seq.primitives[0] == Wait(pytest.approx(0.1))
    d = seq.primitives[3]
    assert d.rabi_amplitude == pytest.approx(0.5) and d.phase == 1.5


@pytest.mark.parametrize("text,line,col", [
    ("laser 3us\nmw f=1MHz amp=1MHz\nread 1us", 2, 1),       # missing dur=
    ("laser 3\nread 1us", 1, 7),                              # missing unit
    ("laser 3MHz\nread 1us", 1, 7),                           # wrong unit kind
    ("laser 3us\nblink 1us\nread 1us", 2, 1),                 # unknown keyword
    ("laser 3us\nmw f=1MHz amp=1MHz dur=1us gain=2\nread 1us", 2, 28),
    ("repeat x { wait 1us }\nread 1us", 1, 8),
    ("repeat 2 { wait 1us \nread 1us", 2, 9),                 # unclosed brace
    ("laser 3us @", 1, 11),
    ("laser 3us", 1, 10),                                     # no read
])
def test_error_locations(text, line, col):
    with pytest.raises(DSLError) as ei:
        parse_sequence(text)
    assert (ei.value.line, ei.value.col) == (line, col)


def test_unbound_and_negative_binding():
    seq = parse_sequence("wait $tau\nread 1us")
    with pytest.raises(DSLError) as ei:
        seq.resolve()
    assert ei.value.line == 1 and ei.value.col == 6
    with pytest.raises(DSLError):
        seq.resolve({"tau": -1.0})


def test_comments_and_blank_lines():
    seq = parse_sequence("# header\n\nlaser 3us # init\n\n;read 1us\n")
    assert seq.primitives == (Laser(3.0), Read(1.0))


def test_bundled_sequences_parse():
    names = bundled_sequences()
    assert {"electron_rabi", "electron_ramsey", "nuclear_ramsey", "odnmr", "echo", "t1"} <= set(names)
    for n in names:
        parse_sequence(bundled_sequence(n))


times = st.floats(0, 1e3, allow_nan=False).map(lambda x: round(x, 6))
freqs = st.floats(-1e4, 1e4, allow_nan=False)
values = st.one_of(times, st.sampled_from(["$a", "$b_2"]))


def _val(v, unit):
    return v if isinstance(v, str) else f"{v!r}{unit}"


stmt = st.one_of(
    st.builds(lambda d: f"laser {_val(d, 'us')}", values),
    st.builds(lambda d: f"wait {_val(d, 'ns')}", values),
    st.builds(lambda d: f"read {_val(d, 'us')}", values),
    st.builds(lambda c, f, a, d, p: f"{c} f={_val(f, 'MHz')} amp={_val(a, 'kHz')} "
                                    f"dur={_val(d, 'us')} ph={_val(p, 'rad')}",
              st.sampled_from(["mw", "rf"]), freqs, freqs, values, freqs),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(stmt, min_size=1, max_size=8))
def test_format_parse_fixed_point(stmts):
    seq = parse_sequence("\n".join(stmts), require_read=False)
    text = format_sequence(seq)
    again = parse_sequence(text, require_read=False)
    assert format_sequence(again) == text
    assert len(again) == len(seq)
    for a, b in zip(seq.primitives, again.primitives):
        assert type(a) is type(b)
    assert again.free_variables() == seq.free_variables()


def test_digest_ignores_formatting():
    a = parse_sequence("laser 3us; read 1us")
    b = parse_sequence("laser   3000ns\n\nread 1us  # x")
    assert a.digest() == b.digest()
    assert isinstance(parse_sequence("wait $t; read 1us").primitives[0].duration, Var)
