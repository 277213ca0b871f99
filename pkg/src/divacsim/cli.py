"""Command-line front end: ``divacsim <levels|odmr|dnp|run|bell> --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 sequence parse error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_trace
from .dnp import polarization_at, polarization_curve, steady_populations
from .errors import ConfigError, DSLError, NumericalError
from .io import OutputDir, bundled_sequence, canonical_hash, density_matrix_json, gnuplot_script
from .params import FieldPoint, SpinSystemParams, preset
from .pulses import NoiseModel, parse_sequence, run_experiment
from .spectra import PeakDegeneracyWarning, fit_peaks, synthesize_odmr
from .spin_core import eigensystem, gslac_field, scan_levels
from .tomography import (BELL_FIELD, PSI_PLUS, SubspaceMap, fidelity, forward_model,
                         reconstruct, run_bell, tomo_settings)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARSE = 0, 2, 3, 4
COMMANDS = ("levels", "odmr", "dnp", "run", "bell")
DEFAULT_GRIDS = {"levels": (0.0, 600.0, 601), "dnp": (100.0, 600.0, 501)}
WAVEGUIDE_NOISE = {"t1": 188.0, "t2star_e": 0.94}


def parse_grid(spec) -> np.ndarray:
    """``"start:end:steps"``, a {start, stop, steps} mapping, or an explicit list."""
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {spec!r} must look like start:end:steps")
        try:
            start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"cannot parse grid {spec!r}") from None
    elif isinstance(spec, dict):
        try:
            start, stop, steps = float(spec["start"]), float(spec["stop"]), int(spec["steps"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("grid mapping needs numeric start, stop and steps") from None
    elif isinstance(spec, (list, tuple)):
        g = np.asarray(spec, dtype=float)
        if g.size == 0:
            raise ConfigError("empty grid")
        return g
    else:
        raise ConfigError(f"unsupported grid specification {spec!r}")
    if steps < 1:
        raise ConfigError("grid needs at least one step")
    if not (math.isfinite(start) and math.isfinite(stop)):
        raise ConfigError("grid bounds must be finite")
    return np.linspace(start, stop, steps)


def thread_count() -> int:
    raw = os.environ.get("DIVACSIM_THREADS")
    cap = os.cpu_count() or 1
    if raw is None or raw == "":
        return min(cap, 4)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DIVACSIM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("DIVACSIM_THREADS must be >= 1")
    return n


@dataclass
class RunConfig:
    command: str
    params: SpinSystemParams
    raw: dict
    base_dir: Path
    out: Path
    seed: int = 0
    fields: np.ndarray | None = None
    noise: NoiseModel | None = None
    gnuplot: bool = False
    resolved: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return canonical_hash(self.resolved)


def _params(raw) -> SpinSystemParams:
    name = raw.get("defaults", "pl6")
    base = preset(name)
    over = raw.get("params", {})
    if not isinstance(over, dict):
        raise ConfigError("params must be a mapping")
    d = base.to_dict()
    d.update(over)
    return SpinSystemParams.from_dict(d)


def _noise(raw, params, seed) -> NoiseModel | None:
    spec = raw.get("noise", {})
    if spec == "off" or spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("noise must be a mapping or \"off\"")
    spec = dict(spec)
    for k in ("t1", "t2", "t2star_e", "t2star_n"):
        if spec.get(k) in ("inf", "off"):
            spec[k] = math.inf
    try:
        return NoiseModel.from_params(params, seed=seed, **spec)
    except TypeError as exc:
        raise ConfigError(f"bad noise settings: {exc}") from None


def _seed(value) -> int:
    try:
        s = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value!r}") from None
    if not 0 <= s < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return s


def load_config(command, path, out=None, seed=None, b=None, b_grid=None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    params = _params(raw)
    s = _seed(seed if seed is not None else raw.get("seed", 0))
    fields = None
    if b is not None:
        fields = np.array([float(b)])
    elif b_grid is not None:
        fields = parse_grid(b_grid)
    elif "b" in raw:
        fields = np.array([float(raw["b"])])
    elif "b_grid" in raw:
        fields = parse_grid(raw["b_grid"])
    elif "fields" in raw:
        fields = parse_grid(list(raw["fields"]))
    elif command in DEFAULT_GRIDS:
        fields = np.linspace(*DEFAULT_GRIDS[command])
    if fields is not None and fields.size == 0:
        raise ConfigError("empty field grid")
    out_dir = Path(out if out is not None else raw.get("out", f"divacsim_out/{command}"))
    cfg = RunConfig(command, params, raw, path.parent, out_dir, s, fields,
                    _noise(raw, params, s), bool(raw.get("gnuplot", False)))
    cfg.resolved = {
        "command": command,
        "params": params.to_dict(),
        "seed": s,
        "fields": None if fields is None else [float(x) for x in fields],
        "noise": None if cfg.noise is None else {k: (v if not isinstance(v, float) or math.isfinite(v)
                                                     else "inf")
                                                 for k, v in vars(cfg.noise).items()},
        "section": raw.get(command, {}),
    }
    return cfg


def _fields(cfg, required=True):
    if cfg.fields is None:
        raise ConfigError("no field given (use --b, --b-grid or the config)")
    return cfg.fields


def cmd_levels(cfg: RunConfig, od: OutputDir) -> dict:
    grid = _fields(cfg)
    e = scan_levels(cfg.params, grid, thread_count())
    if e.shape != (len(grid), 6) or not np.all(np.isfinite(e)):
        raise NumericalError("eigenvalue scan produced invalid output")
    od.write_csv("levels.csv", ["b_gauss"] + [f"e{i}" for i in range(1, 7)],
                 [[b, *row] for b, row in zip(grid, e)])
    try:
        g = gslac_field(cfg.params)
    except NumericalError:
        g = None
    if cfg.gnuplot:
        od.write_text("levels.gp", gnuplot_script("levels", ["levels.csv"]))
    return {"gslac_field_gauss": g, "rows": len(grid)}


def _odmr_grid(sec, lines, linewidth):
    if "grid" in sec:
        return parse_grid(sec["grid"])
    strong = [p.center for p in lines if p.amplitude > 1e-3 * max(q.amplitude for q in lines)]
    lo = max(min(strong) - 10 * linewidth, 0.0)
    hi = max(strong) + 10 * linewidth
    step = linewidth / 20
    return np.arange(lo, hi + step / 2, step)


def _count_resolved(peaks, grid, fwhm, floor=0.02):
    top = max((p.amplitude for p in peaks), default=0.0)
    centers = sorted(p.center for p in peaks
                     if p.amplitude >= floor * top and grid[0] <= p.center <= grid[-1])
    n = 0
    last = -np.inf
    for c in centers:
        if c - last > fwhm / 2:
            n += 1
            last = c
    return max(n, 1)


def cmd_odmr(cfg: RunConfig, od: OutputDir) -> dict:
    grid_b = _fields(cfg)
    sec = cfg.raw.get("odmr", {})
    lw = float(sec.get("linewidth", 8.0))
    pop_mode = sec.get("populations", "dnp")
    if pop_mode not in ("dnp", "unpolarized"):
        raise ConfigError("odmr.populations must be 'dnp' or 'unpolarized'")
    summary = {}
    names = []
    for b in grid_b:
        p = polarization_at(cfg.params, b).p if pop_mode == "dnp" else 0.0
        pops = steady_populations(p)
        probe = synthesize_odmr(cfg.params, b, pops, lw, grid=np.array([0.0]))
        grid = _odmr_grid(sec, probe.peaks, lw)
        spec = synthesize_odmr(cfg.params, b, pops, lw, grid=grid,
                               normalize=bool(sec.get("normalize", True)))
        tag = f"{b:g}G"
        # peaks by default; "dips": true writes the same contrast with negative sign
        sign = -1.0 if sec.get("dips", False) else 1.0
        od.write_csv(f"spectrum_{tag}.csv", ["freq_mhz", "contrast"],
                     zip(spec.freq, sign * spec.contrast))
        names.append(f"spectrum_{tag}.csv")
        doc = {"field_gauss": float(b), "polarization": float(p),
               "lines": [{"center": pk.center, "amplitude": pk.amplitude, "fwhm": pk.fwhm,
                          "lower": pk.lower, "upper": pk.upper} for pk in spec.peaks]}
        if sec.get("fit", True):
            n = int(sec.get("n_peaks") or _count_resolved(spec.peaks, grid, lw))
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", PeakDegeneracyWarning)
                fitted = fit_peaks(spec, n, fwhm_guess=lw)
            doc["peaks"] = [f.to_dict() for f in fitted]
            doc["warnings"] = [str(w.message) for w in caught
                               if issubclass(w.category, PeakDegeneracyWarning)]
        od.write_json(f"peaks_{tag}.json", doc)
        summary[tag] = {"polarization": float(p), "n_fitted": len(doc.get("peaks", []))}
    if cfg.gnuplot:
        od.write_text("odmr.gp", gnuplot_script("odmr", names))
    return summary


def cmd_dnp(cfg: RunConfig, od: OutputDir) -> dict:
    grid = _fields(cfg)
    pts = polarization_curve(cfg.params, grid, thread_count())
    od.write_csv("polarization.csv", ["b_gauss", "p", "rho_up", "rho_down"],
                 [[pt.field, pt.p, pt.rho_up, pt.rho_down] for pt in pts])
    od.write_csv("polarization_normalized.csv", ["b_gauss", "normalized"],
                 [[pt.field, pt.normalized] for pt in pts])
    best = max(pts, key=lambda pt: pt.p)
    bestn = max(pts, key=lambda pt: pt.normalized)
    if cfg.gnuplot:
        od.write_text("dnp.gp", gnuplot_script("dnp", ["polarization.csv"]))
    return {"peak_p": best.p, "peak_field_gauss": best.field,
            "peak_normalized": bestn.normalized, "peak_normalized_field_gauss": bestn.field}


def auto_bindings(params, b, detuning=0.0) -> dict:
    """Working-transition frequencies at field ``b``; ``*_det`` variants add ``detuning``."""
    eig = eigensystem(params, FieldPoint(bz=float(b)))

    def f(a, c):
        return abs(eig.energy(c) - eig.energy(a))

    out = {"f_mw": f("0u", "-1u"), "f_mw_down": f("0d", "-1d"), "f_mw_plus": f("0u", "+1u"),
           "f_rf1": f("-1u", "-1d"), "f_rf2": f("0u", "0d")}
    out.update({k + "_det": v + detuning for k, v in list(out.items())})
    return out


def _sweep(sec):
    sw = sec.get("sweep")
    if not isinstance(sw, dict) or "var" not in sw:
        raise ConfigError("run.sweep must be a mapping with 'var'")
    values = parse_grid(sw["values"] if "values" in sw else sw)
    return str(sw["var"]), values


def _sequence_text(cfg, sec):
    name = sec.get("sequence")
    if not name:
        raise ConfigError("run.sequence is required")
    p = Path(name)
    if not p.is_absolute():
        p = cfg.base_dir / p
    if p.is_file():
        return p.read_text(), str(p)
    return bundled_sequence(name), f"bundled:{name}"


def cmd_run(cfg: RunConfig, od: OutputDir) -> dict:
    sec = cfg.raw.get("run", {})
    b = float(_fields(cfg)[0]) if cfg.fields is not None else float(sec.get("b", 200.0))
    text, source = _sequence_text(cfg, sec)
    cfg.resolved["sequence_sha256"] = hashlib.sha256(text.encode()).hexdigest()
    try:
        seq = parse_sequence(text)
    except DSLError as exc:
        exc.source = source
        exc.text = text
        raise
    var, values = _sweep(sec)
    binds = auto_bindings(cfg.params, b, float(sec.get("detuning_mhz", 0.0)))
    binds.update({k: float(v) for k, v in sec.get("bindings", {}).items()})
    used = set(seq.free_variables()) - {var}
    binds = {k: v for k, v in binds.items() if k in used}
    trace = run_experiment(seq, {var: values}, cfg.params, b, cfg.noise,
                           sec.get("mode", "ideal_gate"), sec.get("init", "simple"), binds)
    if not np.all(np.isfinite(trace.signal)):
        raise NumericalError("simulation produced non-finite signal")
    od.write_text("trace.csv", trace.to_csv())
    if cfg.gnuplot:
        od.write_text("trace.gp", gnuplot_script("run", ["trace.csv"]))
    res = {"sequence": source, "field_gauss": b, "bindings": binds, **trace.metadata}
    if sec.get("fit"):
        res["fit"] = fit_trace(trace.sweep_values, trace.signal, sec["fit"]).to_dict()
    return res


def _records_rows(recs):
    return [[r.setting, r.expectation, float(r.shots)] for r in recs]


def cmd_bell(cfg: RunConfig, od: OutputDir) -> dict:
    sec = cfg.raw.get("bell", {})
    if cfg.fields is not None:
        b = float(cfg.fields[0])
    else:
        b = float(sec.get("field", BELL_FIELD))
    kw = {"mw_rabi": float(sec.get("mw_rabi", 5.0)), "rf_rabi": float(sec.get("rf_rabi", 1.0))}
    shots = sec.get("shots")
    method = sec.get("method", "linear")
    mode = sec.get("mode", "ideal_gate")
    # noise-off variant: ideal initialization, exact gates
    off = run_bell(cfg.params, b, None, "pure", mode, shots, cfg.seed, method, **kw)
    cal_over = dict(WAVEGUIDE_NOISE)
    cal_over.update(sec.get("calibrated", {}))
    cal_params = cfg.params.replace(**{k: v for k, v in cal_over.items()
                                       if k in cfg.params.to_dict()})
    cal_noise = NoiseModel.from_params(cal_params, seed=cfg.seed,
                                       **{k: v for k, v in cal_over.items()
                                          if k in ("detuning", "samples")})
    cal = run_bell(cal_params, b, cal_noise, sec.get("init", "dnp"), mode, shots, cfg.seed,
                   method, **kw)
    results = {}
    for tag, res in (("noise_off", off), ("calibrated", cal)):
        od.write_json(f"rho_{tag}.json", density_matrix_json(
            res.rho, levels=["0u", "0d", "-1u", "-1d"],
            extra={"leakage": res.leakage, "fidelity": res.report.to_dict()}))
        od.write_csv(f"records_{tag}.csv", ["setting", "expectation", "shots"],
                     _records_rows(res.records))
        results[tag] = {**res.report.to_dict(), "leakage": res.leakage}
    # initialization alone: the register state the circuit starts from
    p = polarization_at(cal_params, b).p
    init_rho, _ = SubspaceMap().extract(np.diag(steady_populations(p).values).astype(complex))
    init_rec = reconstruct(forward_model(init_rho, tomo_settings(), shots=shots, seed=cfg.seed),
                           method)
    od.write_json("rho_init_only.json", density_matrix_json(
        init_rec, levels=["0u", "0d", "-1u", "-1d"], extra={"polarization": p}))
    results["init_only"] = {"polarization": p,
                            "dominant_diagonal": float(np.max(np.real(np.diag(init_rec.matrix)))),
                            "fidelity_vs_00": fidelity(init_rec, np.diag([1.0, 0, 0, 0]),
                                                       "00").to_dict()}
    od.write_json("fidelity.json", results)
    results["target"] = "Psi+"
    results["field_gauss"] = b
    if results["noise_off"]["uhlmann"] < 0.999:
        raise NumericalError(f"noise-off Bell fidelity {results['noise_off']['uhlmann']:.6f} < 0.999")
    return results


HANDLERS = {"levels": cmd_levels, "odmr": cmd_odmr, "dnp": cmd_dnp, "run": cmd_run,
            "bell": cmd_bell}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divacsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"divacsim {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (default divacsim_out/<command>)")
    ap.add_argument("--seed", help="unsigned 64-bit seed (overrides the config)")
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--b", type=float, help="single axial field in gauss")
    g.add_argument("--b-grid", help="field grid start:end:steps in gauss")
    return ap


def _report_parse_error(exc: DSLError):
    src = getattr(exc, "source", "<sequence>")
    print(f"{src}:{exc.line}:{exc.col}: error: {exc.msg}", file=sys.stderr)
    text = getattr(exc, "text", None)
    if text and exc.line:
        lines = text.splitlines()
        if 0 < exc.line <= len(lines):
            print("  " + lines[exc.line - 1], file=sys.stderr)
            print("  " + " " * max(exc.col - 1, 0) + "^", file=sys.stderr)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.command, args.config, args.out, args.seed, args.b, args.b_grid)
        thread_count()
        with OutputDir(cfg.out) as od:
            results = HANDLERS[args.command](cfg, od)
            od.manifest(args.command, cfg.config_hash, time.perf_counter() - t0, results)
    except DSLError as exc:
        _report_parse_error(exc)
        return EXIT_PARSE
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"divacsim: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"divacsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
