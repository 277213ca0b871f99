"""File formats: CSV tables, JSON documents, run manifests and the output-directory lock."""
from __future__ import annotations

import hashlib
import json
import os
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError

LOCK_NAME = ".divacsim.lock"


def _num(x) -> str:
    # repr round-trips exactly and is platform independent
    return repr(float(x))


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _num(v) for v in row))
    return "\n".join(lines) + "\n"


def read_csv(path) -> tuple[list, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def canonical_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_schema(name: str) -> dict:
    text = resources.files("divacsim.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def bundled_sequence(name: str) -> str:
    stem = name[:-4] if name.endswith(".seq") else name
    res = resources.files("divacsim.sequences").joinpath(f"{stem}.seq")
    if not res.is_file():
        raise ConfigError(f"no bundled sequence named {name!r}")
    return res.read_text()


def bundled_sequences() -> list:
    return sorted(p.name[:-4] for p in resources.files("divacsim.sequences").iterdir()
                  if p.name.endswith(".seq"))


class OutputDir:
    """Output directory owned by one invocation; tracks written files for the manifest."""

    def __init__(self, path):
        self.path = Path(path)
        self.outputs = {}
        self._lock = None

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        lock = self.path / LOCK_NAME
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"output directory {self.path} is locked by another run "
                              f"(remove {lock} if that run is gone)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        self._lock = lock
        return self

    def __exit__(self, *exc):
        if self._lock is not None:
            self._lock.unlink(missing_ok=True)
            self._lock = None
        return False

    def write_text(self, name: str, text: str) -> Path:
        p = self.path / name
        with open(p, "w", newline="\n") as fh:
            fh.write(text)
        self.outputs[name] = sha256_file(p)
        return p

    def write_csv(self, name, header, rows):
        return self.write_text(name, csv_text(header, rows))

    def write_json(self, name, obj):
        return self.write_text(name, json_text(obj))

    def manifest(self, command, config_hash, wall_clock, extra=None) -> dict:
        m = {
            "command": command,
            "config_hash": config_hash,
            "version": __version__,
            "outputs": dict(sorted(self.outputs.items())),
            "wall_clock_s": float(wall_clock),
        }
        if extra:
            m["results"] = extra
        with open(self.path / "manifest.json", "w", newline="\n") as fh:
            fh.write(json_text(m))
        return m


def density_matrix_json(rho, labels=("00", "01", "10", "11"), levels=None, extra=None) -> dict:
    m = rho.matrix if hasattr(rho, "matrix") else np.asarray(rho)
    out = {"basis": list(labels),
           "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in m]}
    if levels is not None:
        out["levels"] = list(levels)
    if extra:
        out.update(extra)
    return out


def levels_rows(b_grid, energies):
    return [[b, *e] for b, e in zip(b_grid, energies)]


def gnuplot_script(kind: str, files) -> str:
    """Plot script text for the written data; no plotting happens in process."""
    files = list(files)
    head = ["set datafile separator ','", "set key autotitle columnhead"]
    if kind == "levels":
        body = ["set xlabel 'B (G)'", "set ylabel 'E (MHz)'",
                f"plot for [i=2:7] '{files[0]}' using 1:i with lines"]
    elif kind == "odmr":
        body = ["set xlabel 'f (MHz)'", "set ylabel 'contrast'",
                "plot " + ", ".join(f"'{f}' using 1:2 with lines title '{f}'" for f in files)]
    elif kind == "dnp":
        body = ["set xlabel 'B (G)'", "set ylabel 'P'",
                f"plot '{files[0]}' using 1:2 with linespoints"]
    else:
        body = ["set xlabel 'sweep'", "set ylabel 'PL (norm.)'",
                f"plot '{files[0]}' using 1:2 with linespoints"]
    return "\n".join(head + body) + "\n"
