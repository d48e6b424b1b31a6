"""Measurements built on steady-state runs: harmonic response, RF transfer,
input match, LO-amplitude gain control and harmonic folding.

Every sweep point is an independent engine run, so sweeps fan out over a
process pool; results are always assembled in the order of the swept values.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from . import __version__
from .circuit import CircuitSpec
from .engine import run_to_steady_state
from .pwm_clocks import ClockSet, LoSpec, build_iq_clockset
from .spectral import complex_tone_of_samples, tone_of_samples

PEAK_PROMINENCE_DB = 0.1
DEFAULT_SOLVER = {"tol": 1e-9, "max_periods": 400, "span": 1}


class MetricsError(ValueError):
    pass


def db20(x) -> float:
    x = float(x)
    return 20.0 * math.log10(x) if x > 0 else -math.inf


# ---------------------------------------------------------------- output ----

def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dumps_json(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits.

    Non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt_float(x) if math.isfinite(x) else json.dumps(fmt_float(x))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(obj) -> str:
    return hashlib.sha256(dumps_json(obj).encode("utf-8")).hexdigest()


@dataclass
class SweepResult:
    """One row per swept value plus the metadata needed to recompute it."""

    experiment: str
    parameter: str
    values: List[float]
    columns: List[str]
    rows: List[Dict[str, float]]
    metadata: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter] + self.columns)
        for v, r in zip(self.values, self.rows):
            w.writerow([fmt_float(v)] + [fmt_float(r[c]) for c in self.columns])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "metadata_sha256": config_hash(self.metadata),
            "metadata": self.metadata,
            "summary": self.summary,
            "parameter": self.parameter,
            "columns": self.columns,
            "points": [{self.parameter: v, **{c: r[c] for c in self.columns}}
                       for v, r in zip(self.values, self.rows)],
        }

    def to_json(self) -> str:
        return dumps_json(self.as_dict()) + "\n"


@dataclass
class HarmonicResponseReport:
    """Baseband conversion gain for inputs at ``k*f_lo + offset``."""

    k: int
    offsets: List[float]
    conv_gain: List[float]  # dB
    i_amp: List[float] = field(default_factory=list)
    q_amp: List[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def peak(self) -> float:
        return max(self.conv_gain)

    def as_sweep(self) -> SweepResult:
        rows = [{"k": float(self.k), "conv_gain_db": g, "i_amp": i, "q_amp": q}
                for g, i, q in zip(self.conv_gain, self.i_amp, self.q_amp)]
        return SweepResult(f"harmonic_response_k{self.k}", "offset_hz", list(self.offsets),
                           ["k", "conv_gain_db", "i_amp", "q_amp"], rows, self.metadata)


def merge_reports(name: str, reports: Sequence[HarmonicResponseReport]) -> SweepResult:
    """Stack several harmonic-response reports into one table (long format)."""
    values, rows = [], []
    ref = max(r.peak for r in reports if r.k == 1) if any(r.k == 1 for r in reports) else None
    for rep in reports:
        for off, g, i, q in zip(rep.offsets, rep.conv_gain, rep.i_amp, rep.q_amp):
            values.append(off)
            rows.append({"k": float(rep.k), "conv_gain_db": g,
                         "rel_k1_peak_db": g - ref if ref is not None else math.nan,
                         "i_amp": i, "q_amp": q})
    meta = dict(reports[0].metadata) if reports else {}
    summary = {}
    for rep in reports:
        summary[f"k{rep.k}_peak_db"] = rep.peak
        if ref is not None:
            summary[f"k{rep.k}_rel_db"] = rep.peak - ref
    return SweepResult(name, "offset_hz", values,
                       ["k", "conv_gain_db", "rel_k1_peak_db", "i_amp", "q_amp"], rows, meta, summary)


# ------------------------------------------------------------- execution ----

def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover
        return max(1, os.cpu_count() or 1)


def run_parallel(fn: Callable, args: Sequence, jobs: Optional[int] = None) -> list:
    """``[fn(a) for a in args]``, fanned out over processes, order preserved."""
    jobs = default_jobs() if jobs is None else int(jobs)
    if jobs < 1:
        raise MetricsError("jobs must be >= 1")
    args = list(args)
    if jobs == 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as ex:
        return list(ex.map(fn, args, chunksize=max(1, len(args) // (4 * jobs))))


def _solver(solver: Optional[dict]) -> dict:
    out = dict(DEFAULT_SOLVER)
    if solver:
        unknown = set(solver) - set(DEFAULT_SOLVER)
        if unknown:
            raise MetricsError(f"unknown solver settings {sorted(unknown)}")
        out.update(solver)
    return out


def metadata(spec: CircuitSpec, clocks: Optional[ClockSet], solver: dict, **extra) -> dict:
    meta = {"package_version": __version__, "circuit": spec.to_dict(),
            "clocks": clocks.descriptor() if clocks is not None else None,
            "solver": dict(solver)}
    meta.update(extra)
    return meta


def _steady(spec, clocks, f_in, solver):
    return run_to_steady_state(spec, clocks, f_in=f_in, tol=solver["tol"],
                               max_periods=solver["max_periods"], span=solver["span"])


def _job_baseband(args):
    spec, clocks, f_in, f_out, solver = args
    tr = _steady(spec, clocks, f_in, solver)
    i = tone_of_samples(tr.samples["bb_i"], tr.dt, f_out).amplitude
    q = tone_of_samples(tr.samples["bb_q"], tr.dt, f_out).amplitude
    return i, q


def _job_rf(args):
    spec, clocks, f_in, solver = args
    tr = _steady(spec, clocks, f_in, solver)
    return tone_of_samples(tr.samples["v_rf"], tr.dt, f_in).amplitude


def _job_s11(args):
    spec, clocks, f_in, solver = args
    tr = _steady(spec, clocks, f_in, solver)
    v = tone_of_samples(tr.samples["v_port"], tr.dt, f_in).phasor
    i = tone_of_samples(tr.samples["i_src"], tr.dt, f_in).phasor
    return reflection(v, i, spec.r_source)


def reflection(v: complex, i: complex, r_ref: float) -> complex:
    """``B/A`` from port voltage and current phasors (current into the port)."""
    root = 2.0 * math.sqrt(r_ref)
    a = (v + r_ref * i) / root
    b = (v - r_ref * i) / root
    if a == 0:
        raise MetricsError("incident wave is zero")
    return complex(b / a)


# ------------------------------------------------------------ operations ----

def harmonic_response(spec: CircuitSpec, clocks: ClockSet, k: int, offsets: Sequence[float],
                      solver: Optional[dict] = None, jobs: Optional[int] = None
                      ) -> HarmonicResponseReport:
    """Conversion gain (dB, RSS of the I and Q tones over source amplitude)."""
    if k < 1:
        raise MetricsError("k must be >= 1")
    solver = _solver(solver)
    f_lo = clocks.f_lo
    for off in offsets:
        if abs(off) > f_lo / 2:
            raise MetricsError(f"offset {off} outside +-f_lo/2")
    args = [(spec, clocks, k * f_lo + off, abs(off), solver) for off in offsets]
    res = run_parallel(_job_baseband, args, jobs)
    V = spec.v_source_amp
    gains = [db20(math.hypot(i, q) / V) for i, q in res]
    return HarmonicResponseReport(
        k, [float(o) for o in offsets], gains, [r[0] for r in res], [r[1] for r in res],
        metadata(spec, clocks, solver, k=k))


def local_peaks(values: Sequence[float], db: Sequence[float],
                prominence: float = PEAK_PROMINENCE_DB) -> List[float]:
    """Swept values at local maxima of ``db`` with at least ``prominence`` dB."""
    y = np.asarray(db, dtype=float)
    idx, _ = find_peaks(y, prominence=prominence)
    return [float(values[i]) for i in idx]


def rf_transfer(spec: CircuitSpec, clocks: ClockSet, freqs: Sequence[float],
                solver: Optional[dict] = None, jobs: Optional[int] = None,
                floor_exclusion: Optional[float] = None) -> SweepResult:
    """``|v_rf| / V_source`` in dB at each source frequency.

    The out-of-band floor is the median response over frequencies farther
    than ``floor_exclusion`` (default ``f_lo/2``) from ``f_lo``.
    """
    solver = _solver(solver)
    freqs = [float(f) for f in freqs]
    res = run_parallel(_job_rf, [(spec, clocks, f, solver) for f in freqs], jobs)
    V = spec.v_source_amp
    rows = [{"amplitude": a, "gain_db": db20(a / V)} for a in res]
    out = SweepResult("rf_transfer", "freq_hz", freqs, ["amplitude", "gain_db"], rows,
                      metadata(spec, clocks, solver))
    db = out.column("gain_db")
    excl = clocks.f_lo / 2 if floor_exclusion is None else floor_exclusion
    oob = [g for f, g in zip(freqs, db) if abs(f - clocks.f_lo) > excl]
    out.summary = {
        "peaks_hz": local_peaks(freqs, db),
        "max_db": float(np.max(db)),
        "argmax_hz": freqs[int(np.argmax(db))],
        "oob_floor_db": float(np.median(oob)) if oob else math.nan,
    }
    return out


def s11(spec: CircuitSpec, clocks: ClockSet, freqs: Sequence[float],
        solver: Optional[dict] = None, jobs: Optional[int] = None) -> SweepResult:
    """Input reflection relative to ``r_source`` at the source terminals."""
    solver = _solver(solver)
    freqs = [float(f) for f in freqs]
    res = run_parallel(_job_s11, [(spec, clocks, f, solver) for f in freqs], jobs)
    rows = [{"s11_re": g.real, "s11_im": g.imag, "s11_db": db20(abs(g))} for g in res]
    out = SweepResult("s11", "freq_hz", freqs, ["s11_re", "s11_im", "s11_db"], rows,
                      metadata(spec, clocks, solver))
    db = out.column("s11_db")
    out.summary = {"min_db": float(np.min(db)), "argmin_hz": freqs[int(np.argmin(db))]}
    return out


def _pwm_clocks(f_lo, f_pwm, a_lo, alternating):
    return build_iq_clockset(LoSpec(f_lo, a_lo), f_pwm, alternating=alternating)


def _job_alo(args):
    spec, f_lo, f_pwm, a_lo, alternating, offset, measure, solver = args
    clocks = _pwm_clocks(f_lo, f_pwm, a_lo, alternating)
    f_in = f_lo + offset
    tr = _steady(spec, clocks, f_in, solver)
    out = {"rf_amp": tone_of_samples(tr.samples["v_rf"], tr.dt, f_in).amplitude,
           "bb_i": tone_of_samples(tr.samples["bb_i"], tr.dt, abs(offset)).amplitude,
           "bb_q": tone_of_samples(tr.samples["bb_q"], tr.dt, abs(offset)).amplitude}
    if "s11" in measure:
        v = tone_of_samples(tr.samples["v_port"], tr.dt, f_in).phasor
        i = tone_of_samples(tr.samples["i_src"], tr.dt, f_in).phasor
        out["s11"] = reflection(v, i, spec.r_source)
    return out


def gain_vs_alo(spec: CircuitSpec, alos: Sequence[float], f_lo: float = 100e6,
                f_pwm: float = 1.6e9, offset: float = 1e6, alternating: bool = True,
                solver: Optional[dict] = None, jobs: Optional[int] = None,
                with_s11: bool = True) -> SweepResult:
    """RF-node and baseband amplitude at ``f_lo + offset`` per LO amplitude."""
    solver = _solver(solver)
    alos = sorted(float(a) for a in alos)
    for a in alos:
        LoSpec(f_lo, a)  # validates
    measure = ("s11",) if with_s11 else ()
    args = [(spec, f_lo, f_pwm, a, alternating, offset, measure, solver) for a in alos]
    res = run_parallel(_job_alo, args, jobs)
    V = spec.v_source_amp
    rows = []
    for r in res:
        bb = math.hypot(r["bb_i"], r["bb_q"])
        row = {"rf_amp": r["rf_amp"], "rf_db": db20(r["rf_amp"] / V),
               "bb_amp": bb, "bb_db": db20(bb / V)}
        if with_s11:
            row["s11_db"] = db20(abs(r["s11"]))
        rows.append(row)
    cols = list(rows[0]) if rows else []
    clocks = _pwm_clocks(f_lo, f_pwm, alos[0], alternating) if alos else None
    out = SweepResult("gain_vs_alo", "a_lo", alos, cols, rows,
                      metadata(spec, clocks, solver, offset_hz=offset))
    out.summary = alo_summary(alos, rows)
    return out


def linear_fit_r2(x: Sequence[float], y: Sequence[float]) -> tuple:
    """Least-squares line ``y = m x + c``; returns ``(m, c, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m, c = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (m * x + c)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(m), float(c), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def alo_summary(alos, rows, linear_max: float = 0.1) -> dict:
    x = np.asarray(alos)
    bb = np.array([r["bb_amp"] for r in rows])
    rf = np.array([r["rf_amp"] for r in rows])
    out = {}
    lin = x <= linear_max + 1e-12
    if lin.sum() >= 3:
        m, c, r2 = linear_fit_r2(x[lin], bb[lin])
        out.update(linear_slope=m, linear_r2=r2)
        # local slope beyond the linear region, relative to the small-signal slope
        if (~lin).sum() >= 2:
            d = np.diff(bb) / np.diff(x)
            out["final_slope_ratio"] = float(d[-1] / m) if m != 0 else math.nan
    i_rf = int(np.argmax(rf))
    out["rf_argmax_a_lo"] = float(x[i_rf])
    out["rf_argmax_interior"] = bool(0 < i_rf < len(x) - 1)
    if rows and "s11_db" in rows[0]:
        s = np.array([r["s11_db"] for r in rows])
        out["s11_argmin_a_lo"] = float(x[int(np.argmin(s))])
    return out


# --------------------------------------------------------------- folding ----

def _job_fold(args):
    spec, clocks, f_in, nus, solver = args
    tr = _steady(spec, clocks, f_in, solver)
    z = tr.samples["bb_i"] + 1j * tr.samples["bb_q"]
    out = []
    for nu in nus:
        c = complex_tone_of_samples(z, tr.dt, nu)
        i = tone_of_samples(tr.samples["bb_i"], tr.dt, abs(nu)).amplitude
        q = tone_of_samples(tr.samples["bb_q"], tr.dt, abs(nu)).amplitude
        out.append((abs(c), math.hypot(i, q)))
    return out


def channel_products(f_in: float, f_lo: float, channel: float, tol: float = 1e-3) -> List[float]:
    """Signed baseband frequencies ``+-f_in - m f_lo`` with ``0 < |nu| <= channel``."""
    r = math.fmod(f_in, f_lo)
    cands = set()
    for nu in (r, r - f_lo, -r, f_lo - r):
        if tol < abs(nu) <= channel + tol:
            cands.add(round(nu, 3))
    return sorted(cands)


def harmonic_folding(spec: CircuitSpec, clocks: ClockSet, band_max: float,
                     step: float = 1e6, channel: float = 25e6,
                     solver: Optional[dict] = None, jobs: Optional[int] = None) -> SweepResult:
    """Worst in-channel product over a source sweep, relative to the desired peak.

    The source steps over ``(0, band_max]``. Every product of a source tone
    that lands at ``0 < |nu| <= channel`` is measured twice: as the complex
    I/Q output ``I + jQ`` at signed ``nu`` (the image-rejecting channel is
    ``nu > 0``) and as the RSS of the real I and Q tones at ``|nu|``. A
    product is wanted if it is the first-harmonic conversion of the source
    (``f_in - f_lo = nu`` for the complex metric, ``|f_in - f_lo| = |nu|``
    for the raw metric); all others count as folding.
    """
    solver = _solver(solver)
    f_lo = clocks.f_lo
    n = int(round(band_max / step))
    if n < 1 or abs(n * step - band_max) > 1e-6 * step:
        raise MetricsError("band_max must be a positive multiple of step")
    freqs = [step * j for j in range(1, n + 1)]
    nus = [channel_products(f, f_lo, channel) for f in freqs]
    res = run_parallel(_job_fold, [(spec, clocks, f, nu, solver) for f, nu in zip(freqs, nus)],
                       jobs)
    V = spec.v_source_amp
    tol = 1e-3
    want_c = want_r = 0.0
    rows = []
    for f, nu_list, meas in zip(freqs, nus, res):
        wc = wr = 0.0  # worst unwanted products at this source frequency
        nwc = nwr = 0.0
        for nu, (c, r) in zip(nu_list, meas):
            if nu > 0:
                if abs(f - f_lo - nu) < tol:
                    want_c = max(want_c, c)
                else:
                    wc = max(wc, c)
            if abs(abs(f - f_lo) - abs(nu)) < tol:
                want_r = max(want_r, r)
            else:
                wr = max(wr, r)
        rows.append({"worst_iq": wc / V, "worst_raw": wr / V,
                     "n_products": float(len(nu_list))})
    if want_c == 0 or want_r == 0:
        raise MetricsError("the sweep never hits the desired channel")
    for r in rows:
        r["worst_iq_rel_db"] = db20(r["worst_iq"] * V / want_c)
        r["worst_raw_rel_db"] = db20(r["worst_raw"] * V / want_r)
    cols = ["worst_iq", "worst_raw", "worst_iq_rel_db", "worst_raw_rel_db", "n_products"]
    out = SweepResult("harmonic_folding", "freq_hz", freqs, cols, rows,
                      metadata(spec, clocks, solver, band_max_hz=band_max, step_hz=step,
                               channel_hz=channel))
    iq = out.column("worst_iq_rel_db")
    raw = out.column("worst_raw_rel_db")
    out.summary = {
        "peak_iq": want_c / V, "peak_raw": want_r / V,
        "worst_iq_rel_db": float(np.max(iq)), "worst_iq_freq_hz": freqs[int(np.argmax(iq))],
        "worst_raw_rel_db": float(np.max(raw)), "worst_raw_freq_hz": freqs[int(np.argmax(raw))],
    }
    return out
