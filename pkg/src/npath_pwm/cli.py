"""Command-line front end: clock files, single runs and figure presets.

Settings are resolved as command-line flags, then the JSON config file, then
built-in defaults. The output directory can also come from the
``NPATH_PWM_OUTPUT_DIR`` environment variable, which beats the config file
but not ``--output-dir``.

Exit status: 0 on success, 2 for an invalid config, 3 for a numerical
failure during a run.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import jsonschema

from . import __version__
from .circuit import PWM_A_LO, CircuitConfigError, CircuitSpec, fixed_duty_spec, pwm_filter_spec
from .engine import EngineError, run_to_steady_state
from .metrics import (MetricsError, SweepResult, config_hash, db20, dumps_json, fmt_float,
                      gain_vs_alo, harmonic_folding, harmonic_response, merge_reports,
                      reflection, rf_transfer, run_parallel, s11)
from .pwm_clocks import (ClockConfigError, ClockSet, LoSpec, build_all_off_clockset,
                         build_fixed_duty_clockset, build_iq_clockset)
from .spectral import SpectralError, tone_of_samples

log = logging.getLogger("npath_pwm")

OUTPUT_ENV = "NPATH_PWM_OUTPUT_DIR"
EXPERIMENTS = ("gen-clocks", "simulate", "sweep", "fig6", "fig7", "fig8", "fig9", "s11", "folding")
CONFIG_EXPERIMENTS = {"sweep": "custom-sweep"}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_numlist = {"type": "array", "items": _num, "minItems": 1}

CIRCUIT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "r_source": _pos, "has_inductor": {"type": "boolean"}, "l_series": _pos,
        "c_par": {"type": "number", "minimum": 0}, "has_balun": {"type": "boolean"},
        "r_sw": _pos, "c_load": _pos, "n_paths_per_bank": {"type": "integer", "minimum": 1},
        "v_source_amp": _num, "f_in": {"type": "number", "minimum": 0},
        "r_load": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "shared_load": {"type": "boolean"},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "npath-pwm experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": ["gen-clocks", "simulate", "custom-sweep", "fig6", "fig7",
                                "fig8", "fig9", "s11", "folding"]},
        "circuit": CIRCUIT_SCHEMA,
        "baseline": CIRCUIT_SCHEMA,
        "clocks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["iq_fixed_ramp", "iq_alternating", "fixed_duty", "all_off"]},
                "f_lo": _pos, "f_pwm": _pos,
                "a_lo": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
                "n_paths": {"type": "integer", "minimum": 1},
                "file": {"type": "string"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tol": _pos, "max_periods": {"type": "integer", "minimum": 1},
                           "span": {"type": "integer", "minimum": 1}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["parameter", "values"],
            "properties": {"parameter": {"type": "string"}, "values": _numlist},
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "f_in": _pos,
                "offsets": _numlist,
                "harmonics": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 1},
                "freqs": _numlist,
                "r_sw_values": _numlist,
                "alos": _numlist,
                "f_lo_values": _numlist,
                "band_max": _pos,
                "step": _pos,
                "channel": _pos,
                "offset": _num,
                "trace": {"type": "boolean"},
            },
        },
        "output_dir": {"type": "string"},
    },
}

CLOCK_DEFAULTS = {"scheme": "iq_alternating", "f_lo": 100e6, "f_pwm": 1.6e9, "a_lo": PWM_A_LO,
                  "n_paths": 16}
SOLVER_DEFAULTS = {"tol": 1e-9, "max_periods": 400, "span": 1}


def _mhz_grid(lo: float, hi: float, step: float) -> List[float]:
    n = int(round((hi - lo) / step))
    return [lo + j * step for j in range(n + 1)]


PARAM_DEFAULTS: Dict[str, dict] = {
    "gen-clocks": {},
    "simulate": {"f_in": 101e6, "trace": False},
    "custom-sweep": {"f_in": 101e6},
    "fig6": {"harmonics": [1, 3, 5, 7],
             "offsets": [o for o in _mhz_grid(-25e6, 25e6, 1e6) if o != 0]},
    "fig7": {"r_sw_values": [1.0, 5.0, 10.0, 20.0, 50.0],
             "freqs": _mhz_grid(2e6, 798e6, 2e6)},
    "fig8": {"alos": [j * 20 / 1200 for j in range(24)], "offset": 1e6},
    "fig9": {"f_lo_values": [100e6, 200e6, 400e6],
             "offsets": [o for o in _mhz_grid(-25e6, 25e6, 1e6) if o != 0],
             "band_max": 800e6, "step": 1e6, "channel": 25e6},
    "s11": {"freqs": _mhz_grid(50e6, 150e6, 2e6), "alos": [j * 20 / 1200 for j in range(24)],
            "offset": 1e6},
    "folding": {"band_max": 800e6, "step": 1e6, "channel": 25e6},
}

SWEEPABLE = ("r_sw", "c_load", "l_series", "c_par", "r_source", "v_source_amp", "a_lo", "f_in")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------- resolving ----

def validate_config(doc: dict) -> None:
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config field '{path}': {e.message}")


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config field '<root>': must be an object")
    validate_config(doc)
    return doc


def _flag_overrides(args) -> dict:
    """Nested config fragment built from explicit command-line flags."""
    out: dict = {}

    def put(section, key, value):
        if value is not None:
            out.setdefault(section, {})[key] = value

    for key in ("scheme", "f_lo", "f_pwm", "a_lo", "n_paths"):
        put("clocks", key, getattr(args, key, None))
    put("clocks", "file", getattr(args, "clock_file", None))
    for key in ("r_sw", "c_load"):
        put("circuit", key, getattr(args, key, None))
    for key in ("tol", "max_periods", "span"):
        put("solver", key, getattr(args, key, None))
    for key in ("f_in", "band_max", "step", "channel"):
        put("params", key, getattr(args, key, None))
    if getattr(args, "trace", False):
        put("params", "trace", True)
    if getattr(args, "parameter", None) is not None or getattr(args, "values", None):
        out["sweep"] = {"parameter": args.parameter, "values": args.values}
    return out


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(experiment: str, file_doc: dict, flags: dict, output_dir: Optional[str] = None) -> dict:
    """Fully materialized config for one experiment."""
    exp = CONFIG_EXPERIMENTS.get(experiment, experiment)
    if "experiment" in file_doc and file_doc["experiment"] != exp:
        raise ConfigError(f"config field 'experiment': file says {file_doc['experiment']!r} "
                          f"but the command is {experiment!r}")
    doc = _merge(file_doc, flags)
    doc["experiment"] = exp
    validate_config(doc)
    clocks = {**CLOCK_DEFAULTS, **doc.get("clocks", {})}
    if clocks.get("file"):
        clocks["file"] = str(clocks["file"])
    base_pwm = pwm_filter_spec().to_dict()
    base_fd = fixed_duty_spec().to_dict()
    # a single-design run on fixed-duty clocks starts from the baseline values
    single_fd = clocks["scheme"] == "fixed_duty" and exp in ("simulate", "custom-sweep",
                                                             "s11", "folding", "gen-clocks")
    circuit = {**(base_fd if single_fd else base_pwm), **doc.get("circuit", {})}
    if single_fd:
        circuit["n_paths_per_bank"] = doc.get("circuit", {}).get("n_paths_per_bank",
                                                                 clocks["n_paths"])
    baseline = {**base_fd, **doc.get("baseline", {})}
    params = {**PARAM_DEFAULTS[exp], **doc.get("params", {})}
    unknown = set(doc.get("params", {})) - set(PARAM_DEFAULTS[exp])
    if unknown:
        raise ConfigError(f"config field 'params/{sorted(unknown)[0]}': "
                          f"not used by experiment {exp!r}")
    if exp == "custom-sweep":
        if "sweep" not in doc:
            raise ConfigError("config field 'sweep': required for a custom sweep")
        if doc["sweep"]["parameter"] not in SWEEPABLE:
            raise ConfigError(f"config field 'sweep/parameter': must be one of {SWEEPABLE}")
    elif "sweep" in doc:
        raise ConfigError("config field 'sweep': only valid for custom-sweep")
    out_dir = output_dir or os.environ.get(OUTPUT_ENV) or doc.get("output_dir") or "out"
    resolved = {
        "experiment": exp,
        "circuit": circuit,
        "baseline": baseline,
        "clocks": clocks,
        "solver": {**SOLVER_DEFAULTS, **doc.get("solver", {})},
        "params": params,
        "output_dir": out_dir,
        "version": __version__,
    }
    if "sweep" in doc:
        resolved["sweep"] = dict(doc["sweep"])
    # construct once so element-value errors surface as config errors
    try:
        CircuitSpec(**circuit)
        CircuitSpec(**baseline)
        if not clocks.get("file"):
            make_clocks(clocks)
    except (CircuitConfigError, ClockConfigError, TypeError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    return resolved


def make_clocks(c: dict) -> ClockSet:
    if c.get("file"):
        with open(c["file"], encoding="utf-8") as fh:
            doc = json.load(fh)
        # files from gen-clocks wrap the clock set next to the resolved config
        return ClockSet.from_dict(doc["clocks"] if "banks" not in doc else doc)
    scheme = c["scheme"]
    if scheme in ("iq_fixed_ramp", "iq_alternating"):
        return build_iq_clockset(LoSpec(c["f_lo"], c["a_lo"]), c["f_pwm"],
                                 alternating=scheme == "iq_alternating")
    if scheme == "fixed_duty":
        return build_fixed_duty_clockset(c["f_lo"], int(c["n_paths"]))
    if scheme == "all_off":
        return build_all_off_clockset(c["f_lo"])
    raise ConfigError(f"config field 'clocks/scheme': unsupported {scheme!r}")


# --------------------------------------------------------------- writing ----

class Writer:
    """Writes artifacts that all carry the resolved config and its hash."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.dir = Path(cfg["output_dir"])
        self.files: List[Path] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.files.append(p)
        return p

    def csv(self, name: str, text: str) -> Path:
        head = (f"# config_sha256={self.hash}\n"
                f"# config={json.dumps(self.cfg, sort_keys=True, separators=(',', ':'), default=fmt_float)}\n")
        p = self._path(name)
        p.write_text(head + text, encoding="utf-8")
        return p

    def json(self, name: str, doc: dict) -> Path:
        doc = {"config_sha256": self.hash, "config": self.cfg, **doc}
        p = self._path(name)
        p.write_text(dumps_json(doc) + "\n", encoding="utf-8")
        return p

    def sweep(self, stem: str, res: SweepResult) -> None:
        self.csv(stem + ".csv", res.to_csv())
        self.json(stem + ".json", res.as_dict())


def _stack(name: str, parameter: str, key: str, parts) -> SweepResult:
    """Long-format table of several sweeps tagged by ``key``."""
    values, rows, summary = [], [], {}
    cols = None
    for kv, res in parts:
        cols = [key] + res.columns
        for v, r in zip(res.values, res.rows):
            values.append(v)
            rows.append({key: kv, **r})
        summary[f"{key}={fmt_float(kv)}"] = res.summary
    meta = parts[0][1].metadata if parts else {}
    return SweepResult(name, parameter, values, cols or [key], rows, meta, summary)


# ----------------------------------------------------------- experiments ----

def _spec(d: dict) -> CircuitSpec:
    return CircuitSpec(**d)


def exp_gen_clocks(cfg, w, jobs):
    clocks = make_clocks(cfg["clocks"])
    w.json("clocks.json", {"clocks": clocks.to_dict()})


def _measure_run(spec, clocks, f_in, solver):
    tr = run_to_steady_state(spec, clocks, f_in=f_in, tol=solver["tol"],
                             max_periods=solver["max_periods"], span=solver["span"])
    f_bb = abs(f_in - round(f_in / clocks.f_lo) * clocks.f_lo)
    tones = {
        "v_rf": tone_of_samples(tr.samples["v_rf"], tr.dt, f_in),
        "i_src": tone_of_samples(tr.samples["i_src"], tr.dt, f_in),
        "v_port": tone_of_samples(tr.samples["v_port"], tr.dt, f_in),
        "bb_i": tone_of_samples(tr.samples["bb_i"], tr.dt, f_bb),
        "bb_q": tone_of_samples(tr.samples["bb_q"], tr.dt, f_bb),
    }
    return tr, tones


def exp_simulate(cfg, w, jobs):
    clocks = make_clocks(cfg["clocks"])
    spec = _spec(cfg["circuit"])
    f_in = cfg["params"]["f_in"]
    tr, tones = _measure_run(spec, clocks, f_in, cfg["solver"])
    lines = ["probe,freq_hz,amplitude,phase_rad"]
    for k, ln in tones.items():
        lines.append(f"{k},{fmt_float(ln.freq)},{fmt_float(ln.amplitude)},{fmt_float(ln.phase)}")
    w.csv("simulate_tones.csv", "\n".join(lines) + "\n")
    w.json("simulate.json", {
        "clocks": clocks.descriptor(),
        "tones": {k: {"freq_hz": ln.freq, "amplitude": ln.amplitude, "phase_rad": ln.phase}
                  for k, ln in tones.items()},
        "residuals": tr.residuals, "settings": tr.settings,
    })
    if cfg["params"].get("trace"):
        w.csv("simulate_trace.csv", tr.to_csv())


def _job_custom(args):
    spec, clocks_cfg, f_in, solver = args
    clocks = make_clocks(clocks_cfg)
    _, t = _measure_run(spec, clocks, f_in, solver)
    V = spec.v_source_amp
    g = reflection(t["v_port"].phasor, t["i_src"].phasor, spec.r_source)
    return {"rf_db": db20(t["v_rf"].amplitude / V),
            "bb_db": db20(math.hypot(t["bb_i"].amplitude, t["bb_q"].amplitude) / V),
            "s11_db": db20(abs(g))}


def exp_sweep(cfg, w, jobs):
    par = cfg["sweep"]["parameter"]
    values = sorted(float(v) for v in cfg["sweep"]["values"])
    args = []
    for v in values:
        circ = dict(cfg["circuit"])
        clk = dict(cfg["clocks"])
        f_in = cfg["params"]["f_in"]
        if par == "a_lo":
            clk["a_lo"] = v
        elif par == "f_in":
            f_in = v
        else:
            circ[par] = v
        try:
            spec = _spec(circ)
            make_clocks(clk)
        except (CircuitConfigError, ClockConfigError) as exc:
            raise ConfigError(f"config field 'sweep/values': {exc}") from exc
        args.append((spec, clk, f_in, cfg["solver"]))
    rows = run_parallel(_job_custom, args, jobs)
    res = SweepResult("custom_sweep", par, values, ["rf_db", "bb_db", "s11_db"], rows,
                      {"circuit": cfg["circuit"], "clocks": cfg["clocks"], "solver": cfg["solver"]})
    w.sweep("sweep", res)


def exp_fig6(cfg, w, jobs):
    p = cfg["params"]
    f_lo = cfg["clocks"]["f_lo"]
    designs = (
        ("fixed_duty", _spec(cfg["baseline"]),
         build_fixed_duty_clockset(f_lo, cfg["baseline"]["n_paths_per_bank"])),
        ("pwm", _spec(cfg["circuit"]), make_clocks(cfg["clocks"])),
    )
    summary = {}
    for name, spec, clocks in designs:
        reps = [harmonic_response(spec, clocks, k, p["offsets"], cfg["solver"], jobs)
                for k in p["harmonics"]]
        res = merge_reports(f"fig6_{name}", reps)
        w.sweep(f"fig6_{name}", res)
        summary[name] = res.summary
    if "fixed_duty" in summary and "pwm" in summary:
        summary["improvement_db"] = {
            k: summary["fixed_duty"][k] - summary["pwm"][k]
            for k in summary["pwm"] if k.endswith("_rel_db") and k != "k1_rel_db"}
    w.json("fig6_summary.json", {"summary": summary})


def exp_fig7(cfg, w, jobs):
    p = cfg["params"]
    f_lo = cfg["clocks"]["f_lo"]
    designs = (
        ("fixed_duty", cfg["baseline"],
         build_fixed_duty_clockset(f_lo, cfg["baseline"]["n_paths_per_bank"])),
        ("pwm", cfg["circuit"], make_clocks(cfg["clocks"])),
    )
    for name, circ, clocks in designs:
        parts = []
        for r in sorted(p["r_sw_values"]):
            spec = _spec({**circ, "r_sw": r})
            parts.append((r, rf_transfer(spec, clocks, p["freqs"], cfg["solver"], jobs)))
        w.sweep(f"fig7_{name}", _stack(f"fig7_{name}", "freq_hz", "r_sw", parts))


def exp_fig8(cfg, w, jobs):
    p = cfg["params"]
    c = cfg["clocks"]
    res = gain_vs_alo(_spec(cfg["circuit"]), p["alos"], c["f_lo"], c["f_pwm"], p["offset"],
                      c["scheme"] != "iq_fixed_ramp", cfg["solver"], jobs)
    w.sweep("fig8", res)


def exp_fig9(cfg, w, jobs):
    p = cfg["params"]
    spec = _spec(cfg["circuit"])
    resp, fold = [], []
    for f_lo in sorted(p["f_lo_values"]):
        clocks = make_clocks({**cfg["clocks"], "f_lo": f_lo, "file": None})
        rep = harmonic_response(spec, clocks, 1, p["offsets"], cfg["solver"], jobs)
        resp.append((f_lo, merge_reports("fig9_response", [rep])))
        fold.append((f_lo, harmonic_folding(spec, clocks, p["band_max"], p["step"], p["channel"],
                                            cfg["solver"], jobs)))
    w.sweep("fig9_response", _stack("fig9_response", "offset_hz", "f_lo", resp))
    rows = [{"ratio": cfg["clocks"]["f_pwm"] / f, **{k: r.summary[k] for k in
                                               ("worst_iq_rel_db", "worst_iq_freq_hz",
                                                "worst_raw_rel_db", "worst_raw_freq_hz")}}
            for f, r in fold]
    cols = list(rows[0])
    w.sweep("fig9_folding", SweepResult("fig9_folding", "f_lo", [f for f, _ in fold], cols, rows,
                                        fold[0][1].metadata))


def exp_s11(cfg, w, jobs):
    p = cfg["params"]
    c = cfg["clocks"]
    spec = _spec(cfg["circuit"])
    w.sweep("s11_freq", s11(spec, make_clocks(c), p["freqs"], cfg["solver"], jobs))
    if c["scheme"] in ("iq_fixed_ramp", "iq_alternating") and not c.get("file"):
        res = gain_vs_alo(spec, p["alos"], c["f_lo"], c["f_pwm"], p["offset"],
                          c["scheme"] == "iq_alternating", cfg["solver"], jobs)
        res.experiment = "s11_alo"
        w.sweep("s11_alo", res)


def exp_folding(cfg, w, jobs):
    p = cfg["params"]
    res = harmonic_folding(_spec(cfg["circuit"]), make_clocks(cfg["clocks"]), p["band_max"],
                           p["step"], p["channel"], cfg["solver"], jobs)
    w.sweep("folding", res)


RUNNERS = {
    "gen-clocks": exp_gen_clocks, "simulate": exp_simulate, "custom-sweep": exp_sweep,
    "fig6": exp_fig6, "fig7": exp_fig7, "fig8": exp_fig8, "fig9": exp_fig9, "s11": exp_s11,
    "folding": exp_folding,
}


def run(cfg: dict, jobs: Optional[int] = None) -> List[Path]:
    """Run a resolved config and return the files written."""
    w = Writer(cfg)
    RUNNERS[cfg["experiment"]](cfg, w, jobs)
    return w.files


# ------------------------------------------------------------------ main ----

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="npath-pwm",
                                 description="N-path filter with PWM clocks: simulation and figures.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON experiment config")
    common.add_argument("-o", "--output-dir", help=f"output directory (overrides ${OUTPUT_ENV})")
    common.add_argument("-j", "--jobs", type=int, help="worker processes (default: all CPUs)")
    common.add_argument("-v", "--verbose", action="store_true")
    g = common.add_argument_group("clocks")
    g.add_argument("--scheme", choices=["iq_fixed_ramp", "iq_alternating", "fixed_duty", "all_off"])
    g.add_argument("--f-lo", type=float)
    g.add_argument("--f-pwm", type=float)
    g.add_argument("--a-lo", type=float, help="LO amplitude as a fraction of the ramp peak")
    g.add_argument("--n-paths", type=int, help="paths of the fixed-duty clocks")
    g = common.add_argument_group("circuit")
    g.add_argument("--r-sw", type=float)
    g.add_argument("--c-load", type=float)
    g = common.add_argument_group("solver")
    g.add_argument("--tol", type=float)
    g.add_argument("--max-periods", type=int)
    g.add_argument("--span", type=int)

    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-clocks", parents=[common], help="write a clock JSON file")
    p = sub.add_parser("simulate", parents=[common], help="one steady-state run")
    p.add_argument("--f-in", type=float)
    p.add_argument("--clock-file", help="clock JSON written by gen-clocks")
    p.add_argument("--trace", action="store_true", help="also write the sampled probes as CSV")
    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    p.add_argument("--parameter", choices=SWEEPABLE)
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--f-in", type=float)
    for name, text in (("fig6", "harmonic response, fixed-duty vs PWM"),
                       ("fig7", "RF response vs switch resistance"),
                       ("fig8", "gain vs LO amplitude"),
                       ("fig9", "fundamental response and folding vs f_lo"),
                       ("s11", "input match")):
        sub.add_parser(name, parents=[common], help=text)
    p = sub.add_parser("folding", parents=[common], help="worst in-channel harmonic folding")
    p.add_argument("--band-max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--channel", type=float)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args.command, load_config(args.config), _flag_overrides(args),
                      args.output_dir)
    except ConfigError as exc:
        print(f"npath-pwm: {exc}", file=sys.stderr)
        return 2
    if args.jobs is not None and args.jobs < 1:
        print("npath-pwm: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        files = run(cfg, args.jobs)
    except ConfigError as exc:
        print(f"npath-pwm: {exc}", file=sys.stderr)
        return 2
    except (EngineError, SpectralError, MetricsError, ClockConfigError,
            CircuitConfigError, FloatingPointError, OSError, ValueError) as exc:
        print(f"npath-pwm: {cfg['experiment']} failed: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
