"""A small text format for pulse sequences.

Grammar::

    seq   := stmt ((";" | NEWLINE) stmt)*
    stmt  := "laser" value | "wait" value | "read" value
           | ("mw" | "rf") kv+
           | "repeat" INT "{" seq "}"
    kv    := ("f=" | "amp=" | "dur=" | "ph=") value
    value := NUMBER unit | "$" IDENT
    unit  := "MHz" | "kHz" | "us" | "ns" | "rad"

``#`` starts a comment that runs to the end of the line. Times are stored in
microseconds, frequencies in MHz and phases in radians.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from typing import Union

from ..errors import DSLError

UNITS = {
    "MHz": ("freq", 1.0),
    "kHz": ("freq", 1e-3),
    "us": ("time", 1.0),
    "ns": ("time", 1e-3),
    "rad": ("phase", 1.0),
}
CANONICAL = {"freq": "MHz", "time": "us", "phase": "rad"}
KEY_KIND = {"f": "freq", "amp": "freq", "dur": "time", "ph": "phase"}
KEYWORDS = ("laser", "wait", "read", "mw", "rf", "repeat")


@dataclass(frozen=True)
class Var:
    name: str
    kind: str
    line: int = 0
    col: int = 0

    def __str__(self):
        return "$" + self.name


Value = Union[float, Var]


@dataclass(frozen=True)
class Laser:
    duration: Value


@dataclass(frozen=True)
class Wait:
    duration: Value


@dataclass(frozen=True)
class Read:
    window: Value


@dataclass(frozen=True)
class Drive:
    channel: str  # "MW" or "RF"
    frequency: Value
    rabi_amplitude: Value
    duration: Value
    phase: Value = 0.0


Primitive = Union[Laser, Wait, Read, Drive]


@dataclass(frozen=True)
class PulseSequence:
    primitives: tuple
    bindings: dict = field(default_factory=dict)
    repetitions: int = 1

    def __iter__(self):
        return iter(self.primitives)

    def __len__(self):
        return len(self.primitives)

    def free_variables(self) -> list:
        seen = []
        for prim in self.primitives:
            for v in _values(prim):
                if isinstance(v, Var) and v.name not in seen:
                    seen.append(v.name)
        return seen

    def resolve(self, bindings: dict | None = None) -> "PulseSequence":
        """Substitute sweep variables; every variable must be bound."""
        env = dict(self.bindings)
        env.update(bindings or {})
        out = []
        for prim in self.primitives:
            out.append(_map_values(prim, lambda v: _lookup(v, env)))
        return PulseSequence(tuple(out), {}, self.repetitions)

    @property
    def is_resolved(self) -> bool:
        return not self.free_variables()

    def digest(self) -> str:
        return hashlib.sha256(format_sequence(self).encode()).hexdigest()

    def __add__(self, other):
        return PulseSequence(self.primitives + tuple(other.primitives),
                             {**self.bindings, **other.bindings}, self.repetitions)


def _values(prim):
    if isinstance(prim, Drive):
        return (prim.frequency, prim.rabi_amplitude, prim.duration, prim.phase)
    if isinstance(prim, Read):
        return (prim.window,)
    return (prim.duration,)


def _map_values(prim, fn):
    if isinstance(prim, Drive):
        return replace(prim, frequency=fn(prim.frequency), rabi_amplitude=fn(prim.rabi_amplitude),
                       duration=fn(prim.duration), phase=fn(prim.phase))
    if isinstance(prim, Read):
        return replace(prim, window=fn(prim.window))
    return replace(prim, duration=fn(prim.duration))


def _lookup(v, env):
    if not isinstance(v, Var):
        return v
    if v.name not in env:
        raise DSLError(f"unresolved sweep variable ${v.name}", v.line, v.col)
    val = float(env[v.name])
    if v.kind == "time" and val < 0:
        raise DSLError(f"negative duration bound to ${v.name}", v.line, v.col)
    return val


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<semi>;)
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
  | (?P<key>(?:f|amp|dur|ph)=)
  | (?P<var>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?P<unit>[A-Za-z]+)?
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*=?)
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int
    unit: str | None = None


def _tokenize(text: str) -> list:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise DSLError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup if m.lastgroup != "unit" else "number"
        if kind == "nl":
            toks.append(_Tok("sep", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "semi":
            toks.append(_Tok("sep", ";", line, col))
        elif kind not in ("ws", "comment"):
            unit = m.group("unit") if kind == "number" else None
            txt = m.group("number") if kind == "number" else m.group(0)
            toks.append(_Tok(kind, txt, line, col, unit))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def skip_seps(self):
        while self.peek().kind == "sep":
            self.i += 1

    def parse_seq(self, closing=None):
        prims = []
        self.skip_seps()
        while True:
            t = self.peek()
            if t.kind == "eof" or (closing and t.kind == "rbrace"):
                break
            prims.extend(self.parse_stmt())
            t = self.peek()
            if t.kind == "sep":
                self.skip_seps()
            elif t.kind == "eof" or (closing and t.kind == "rbrace"):
                break
            else:
                raise DSLError(f"expected ';' or newline before {t.text!r}", t.line, t.col)
        return prims

    def value(self, kind, ctx):
        t = self.next()
        if t.kind == "var":
            return Var(t.text[1:], kind, t.line, t.col)
        if t.kind != "number":
            raise DSLError(f"expected a value for {ctx}, got {t.text or 'end of input'!r}",
                           t.line, t.col)
        if t.unit is None:
            raise DSLError(f"missing unit suffix on {t.text!r} ({ctx})", t.line, t.col)
        if t.unit not in UNITS:
            raise DSLError(f"unknown unit {t.unit!r}", t.line, t.col)
        ukind, scale = UNITS[t.unit]
        if ukind != kind:
            raise DSLError(f"{ctx} needs a {kind} unit, got {t.unit!r}", t.line, t.col)
        v = float(t.text) * scale
        if kind == "time" and v < 0:
            raise DSLError(f"negative duration {t.text}{t.unit}", t.line, t.col)
        return v

    def parse_stmt(self):
        t = self.next()
        if t.kind != "word" or t.text not in KEYWORDS:
            raise DSLError(f"unknown keyword {t.text!r}", t.line, t.col)
        kw = t.text
        if kw == "laser":
            return [Laser(self.value("time", "laser duration"))]
        if kw == "wait":
            return [Wait(self.value("time", "wait duration"))]
        if kw == "read":
            return [Read(self.value("time", "read window"))]
        if kw == "repeat":
            n = self.next()
            if n.kind != "number" or n.unit is not None or not re.fullmatch(r"\d+", n.text):
                raise DSLError("repeat needs a non-negative integer count", n.line, n.col)
            b = self.next()
            if b.kind != "lbrace":
                raise DSLError("expected '{' after repeat count", b.line, b.col)
            body = self.parse_seq(closing=True)
            e = self.next()
            if e.kind != "rbrace":
                raise DSLError("missing '}'", e.line, e.col)
            return body * int(n.text)
        kv = {}
        while self.peek().kind == "key":
            k = self.next()
            name = k.text[:-1]
            if name in kv:
                raise DSLError(f"duplicate key {name}=", k.line, k.col)
            kv[name] = self.value(KEY_KIND[name], f"{name}=")
        nxt = self.peek()
        if nxt.kind == "word" and nxt.text.endswith("="):
            raise DSLError(f"unknown key {nxt.text!r}", nxt.line, nxt.col)
        for req in ("f", "amp", "dur"):
            if req not in kv:
                raise DSLError(f"{kw} needs {req}=", t.line, t.col)
        return [Drive(kw.upper(), kv["f"], kv["amp"], kv["dur"], kv.get("ph", 0.0))]


def parse_sequence(text: str, require_read: bool = True) -> PulseSequence:
    """Parse sequence source into a :class:`PulseSequence`.

    Raises :class:`DSLError` carrying line/column on any syntax problem.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    p = _Parser(text)
    prims = p.parse_seq()
    if require_read and not any(isinstance(x, Read) for x in prims):
        end = p.toks[-1]
        raise DSLError("sequence has no read", end.line, end.col)
    return PulseSequence(tuple(prims))


def _fmt(v, kind):
    if isinstance(v, Var):
        return str(v)
    return f"{float(v)!r}{CANONICAL[kind]}"


def format_sequence(seq: PulseSequence) -> str:
    """Canonical text; ``parse_sequence(format_sequence(s))`` reproduces ``s``."""
    parts = []
    for prim in seq.primitives:
        if isinstance(prim, Laser):
            parts.append(f"laser {_fmt(prim.duration, 'time')}")
        elif isinstance(prim, Wait):
            parts.append(f"wait {_fmt(prim.duration, 'time')}")
        elif isinstance(prim, Read):
            parts.append(f"read {_fmt(prim.window, 'time')}")
        else:
            parts.append(f"{prim.channel.lower()} f={_fmt(prim.frequency, 'freq')} "
                         f"amp={_fmt(prim.rabi_amplitude, 'freq')} "
                         f"dur={_fmt(prim.duration, 'time')} ph={_fmt(prim.phase, 'phase')}")
    return ";\n".join(parts) + "\n"
