"""Event-driven exact transient simulation of the switched filter.

Inside each interval between clock edges the filter is LTI, so the state is
carried across the interval by the matrix exponential. The clock repeats
every LO period, which makes the one-period map ``M`` identical for every LO
period of a run; the common period of clock and source is ``q`` LO periods,
where ``f_in / f_lo = p / q``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .circuit import (CircuitSpec, LinearSystem, assemble, dissipation_form,
                      source_power_form)
from .pwm_clocks import EDGE_MERGE_TOL, ClockSet
from .spectral import rational_ratio

log = logging.getLogger(__name__)

# step lengths are cached on this grid (s)
H_QUANTUM = 1e-18
SAMPLES_PER_PWM = 32
MIN_SAMPLES_PER_PERIOD = 512


class EngineError(RuntimeError):
    pass


class ConvergenceError(EngineError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class EventTimeline:
    """Switch configuration changes over one clock period.

    ``events[i] = (t_i, config_i)``: ``config_i`` conducts on
    ``[t_i, t_{i+1})``. The common period of clock and source is
    ``repeats`` clock periods and holds ``input_cycles`` source periods.
    """

    clock_period: float
    events: Tuple[Tuple[float, tuple], ...]
    repeats: int = 1
    input_cycles: int = 0

    @property
    def period(self) -> float:
        return self.repeats * self.clock_period

    def intervals(self) -> List[Tuple[tuple, float]]:
        out = []
        for i, (t, cfg) in enumerate(self.events):
            t_next = self.events[i + 1][0] if i + 1 < len(self.events) else self.clock_period
            out.append((cfg, t_next - t))
        return out

    def config_at(self, t: float) -> tuple:
        times = [e[0] for e in self.events]
        i = int(np.searchsorted(times, t, side="right")) - 1
        return self.events[max(i, 0)][1]


def _bank_config_at(clocks: ClockSet, bank: int, t: float):
    on = [p for p in clocks.paths(bank) if clocks.train(bank, p).value(t) > 0]
    if clocks.scheme == "all_off":
        return None
    if len(on) != 1:
        raise EngineError(f"bank {bank}: {len(on)} switches conduct at t={t!r}")
    return on[0]


def build_timeline(clocks: ClockSet, f_in: float, max_den: int = 100000) -> EventTimeline:
    """Merged, de-duplicated edge schedule of all switches."""
    T = clocks.period
    ratio = rational_ratio(f_in, clocks.f_lo, max_den) if f_in > 0 else Fraction(0)
    q = ratio.denominator
    p = ratio.numerator
    if clocks.scheme != "all_off":
        clocks.validate()
    edges = [0.0]
    for train in clocks.trains.values():
        for s, e in train.edges:
            edges += [s, e]
    edges = sorted(t for t in edges if t < T - EDGE_MERGE_TOL)
    merged = []
    for t in edges:
        if not merged or t - merged[-1] > EDGE_MERGE_TOL:
            merged.append(t)
    merged[0] = 0.0
    events = []
    for i, t in enumerate(merged):
        t_next = merged[i + 1] if i + 1 < len(merged) else T
        mid = 0.5 * (t + t_next)
        cfg = tuple(_bank_config_at(clocks, b, mid) for b in clocks.bank_ids())
        if events and events[-1][1] == cfg:
            continue
        events.append((t, cfg))
    return EventTimeline(T, tuple(events), q, p)


class Propagator:
    """Matrix exponentials for one circuit, cached by (config, step)."""

    def __init__(self, spec: CircuitSpec):
        self.spec = spec
        self._systems: Dict[tuple, LinearSystem] = {}
        self._expm: Dict[Tuple[tuple, int], np.ndarray] = {}

    def system(self, config: tuple) -> LinearSystem:
        sys_ = self._systems.get(config)
        if sys_ is None:
            sys_ = assemble(self.spec, config)
            self._systems[config] = sys_
        return sys_

    def step_matrix(self, config: tuple, h: float) -> np.ndarray:
        key = (config, int(round(h / H_QUANTUM)))
        m = self._expm.get(key)
        if m is None:
            m = expm(self.system(config).a * h)
            if not np.all(np.isfinite(m)):
                raise EngineError(f"non-finite matrix exponential for {config}, h={h}")
            self._expm[key] = m
        return m


def propagate(system: LinearSystem, x: np.ndarray, h: float) -> np.ndarray:
    """``x(t + h) = expm(A h) x(t)``."""
    if not h > 0:
        raise EngineError("step must be positive")
    y = expm(system.a * h) @ x
    if not np.all(np.isfinite(y)):
        raise EngineError(f"non-finite state after step h={h}")
    return y


def _van_loan(a: np.ndarray, q: np.ndarray, h: float) -> np.ndarray:
    """``int_0^h expm(A t)^T Q expm(A t) dt``.

    Van Loan's block exponential on a step short enough that ``expm(-A^T d)``
    stays representable, then interval doubling
    ``W(2d) = W(d) + Phi(d)^T W(d) Phi(d)`` back up to ``h``.
    """
    n = a.shape[0]
    norm = np.linalg.norm(a, 1) * h
    m = max(0, int(math.ceil(math.log2(norm)))) if norm > 1 else 0
    d = h / 2 ** m
    c = np.zeros((2 * n, 2 * n))
    c[:n, :n] = -a.T
    c[:n, n:] = q
    c[n:, n:] = a
    f = expm(c * d)
    phi = f[n:, n:]
    w = phi.T @ f[:n, n:]
    for _ in range(m):
        w = w + phi.T @ w @ phi
        phi = phi @ phi
    return 0.5 * (w + w.T)


@dataclass
class PeriodMaps:
    """One-clock-period map plus maps to each sample instant."""

    period_map: np.ndarray
    sample_maps: np.ndarray  # (S, n, n)
    sample_configs: List[tuple]
    segment_maps: List[Tuple[tuple, float, np.ndarray]]  # (config, h, map from period start)


def period_maps(prop: Propagator, timeline: EventTimeline, n_samples: int) -> PeriodMaps:
    T = timeline.clock_period
    dt = T / n_samples
    n = len(prop.system(timeline.events[0][1]).labels)
    ev_times = [t for t, _ in timeline.events] + [T]
    cfgs = [c for _, c in timeline.events]
    points = sorted({*ev_times, *(j * dt for j in range(n_samples))})
    # merge sample instants that coincide with an edge
    pts = []
    for t in points:
        if pts and t - pts[-1] <= EDGE_MERGE_TOL:
            continue
        pts.append(t)
    if pts[-1] < T - EDGE_MERGE_TOL:
        pts.append(T)
    pts[-1] = T
    cur = np.eye(n)
    smaps = np.empty((n_samples, n, n))
    scfg = []
    segs = []
    j = 0
    ei = 0
    for a, b in zip(pts[:-1], pts[1:]):
        while ei + 1 < len(cfgs) and timeline.events[ei + 1][0] <= a + EDGE_MERGE_TOL:
            ei += 1
        cfg = cfgs[ei]
        while j < n_samples and j * dt <= a + EDGE_MERGE_TOL:
            smaps[j] = cur
            scfg.append(cfg)
            j += 1
        h = b - a
        if h <= 0:
            continue
        segs.append((cfg, h, cur))
        cur = prop.step_matrix(cfg, h) @ cur
    while j < n_samples:
        smaps[j] = cur
        scfg.append(cfgs[-1])
        j += 1
    return PeriodMaps(cur, smaps, scfg, segs)


@dataclass
class SimTrace:
    """Uniformly sampled probes over ``span`` common periods."""

    dt: float
    samples: Dict[str, np.ndarray]
    span: int
    period: float
    clock_period: float
    x0: np.ndarray
    labels: Tuple[str, ...]
    residuals: List[float] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return next(iter(self.samples.values())).size

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = sorted(self.samples)
        w.writerow(["time_s"] + names)
        t = self.time
        for i in range(t.size):
            w.writerow([f"{t[i]:.17g}"] + [f"{self.samples[k][i]:.17g}" for k in names])
        return buf.getvalue()


def baseband_weights(spec: CircuitSpec) -> Dict[str, Dict[str, float]]:
    """Weights of the load-capacitor voltages in the differential I/Q outputs.

    Dual bank with shared capacitors: ``I = v[I+] - v[I-]``. With separate
    capacitors the matched paths of the two banks are averaged, e.g.
    ``I = (v[1,I+] + v[2,I-])/2 - (v[1,I-] + v[2,I+])/2``.
    Single bank: the paths whose clock centre lies within a quarter period of
    path 0 form ``I+``, the opposite half ``I-``; ``Q+``/``Q-`` are the same
    split shifted a quarter period earlier (Q leads I).
    """
    w: Dict[str, Dict[str, float]] = {"bb_i": {}, "bb_q": {}}
    if spec.has_balun and spec.shared_load:
        for x, key in (("I", "bb_i"), ("Q", "bb_q")):
            w[key] = {f"v_bb[{x}+]": 1.0, f"v_bb[{x}-]": -1.0}
        return w
    if spec.has_balun:
        for x, key in (("I", "bb_i"), ("Q", "bb_q")):
            w[key] = {f"v_bb[1,{x}+]": 0.5, f"v_bb[2,{x}-]": 0.5,
                      f"v_bb[1,{x}-]": -0.5, f"v_bb[2,{x}+]": -0.5}
        return w
    N = spec.n_paths_per_bank
    for k in range(N):
        u = (k / N) % 1.0  # clock-centre lag of path k in periods
        i_pos = u < 0.25 or u >= 0.75
        q_pos = u >= 0.5
        # Fraction-free equal weights: every half holds N/2 paths
        w["bb_i"][f"v_bb[1,{k}]"] = (2.0 if i_pos else -2.0) / N
        w["bb_q"][f"v_bb[1,{k}]"] = (2.0 if q_pos else -2.0) / N
    return w


def probe_rows(spec: CircuitSpec, system: LinearSystem, all_states: bool = False) -> Dict[str, np.ndarray]:
    rows = {
        "v_rf": system.v_rf_row,
        "i_src": system.i_src_row,
        "emf": system.emf_row,
        "v_port": system.emf_row - spec.r_source * system.i_src_row,
    }
    idx = {lab: k for k, lab in enumerate(system.labels)}
    for name, ws in baseband_weights(spec).items():
        r = np.zeros(system.dimension)
        for lab, wt in ws.items():
            r[idx[lab]] += wt
        rows[name] = r
    if all_states:
        for lab, k in idx.items():
            r = np.zeros(system.dimension)
            r[k] = 1.0
            rows[lab] = r
    return rows


def samples_per_period(clocks: ClockSet) -> int:
    return max(SAMPLES_PER_PWM * clocks.ratio, MIN_SAMPLES_PER_PERIOD)


def initial_state(prop: Propagator, config: tuple) -> np.ndarray:
    sys_ = prop.system(config)
    x = np.zeros(sys_.dimension)
    x[sys_.dimension - 2] = 1.0
    return x


def _residual(x_new, x_old) -> float:
    den = np.linalg.norm(x_new)
    return float(np.linalg.norm(x_new - x_old) / den) if den > 0 else 0.0


def run_to_steady_state(spec: CircuitSpec, clocks: ClockSet, f_in: Optional[float] = None,
                        tol: float = 1e-9, max_periods: int = 400, span: int = 1,
                        method: str = "shooting", all_states: bool = False) -> SimTrace:
    """Periodic steady state, then ``span`` recorded common periods.

    ``method='shooting'`` solves for the periodic state directly from the
    common-period map and then confirms it by one more period of
    propagation; ``method='iterate'`` starts from rest and propagates whole
    common periods until the relative state change drops below ``tol``.
    Either way the run fails if the residual stays above ``tol``.
    """
    if f_in is not None:
        spec = spec.with_(f_in=f_in)
    if not tol > 0:
        raise EngineError("tol must be positive")
    timeline = build_timeline(clocks, spec.f_in)
    prop = Propagator(spec)
    S = samples_per_period(clocks)
    maps = period_maps(prop, timeline, S)
    M = maps.period_map
    q = timeline.repeats
    phi = np.linalg.matrix_power(M, q)
    x = initial_state(prop, timeline.events[0][1])
    n = x.size
    ny = n - 2
    residuals = []
    if method == "shooting":
        a_mat = np.eye(ny) - phi[:ny, :ny]
        rhs = phi[:ny, ny:] @ x[ny:]
        try:
            y = np.linalg.solve(a_mat, rhs)
        except np.linalg.LinAlgError:
            y = np.linalg.lstsq(a_mat, rhs, rcond=None)[0]
        if not np.all(np.isfinite(y)):
            y = np.linalg.lstsq(a_mat, rhs, rcond=None)[0]
        x[:ny] = y
        x_next = phi @ x
        residuals.append(_residual(x_next, x))
        if residuals[-1] >= tol:
            log.info("shooting residual %.3g above tol, iterating", residuals[-1])
            method = "iterate"
    if method == "iterate":
        for _ in range(max_periods):
            x_next = phi @ x
            residuals.append(_residual(x_next, x))
            x = x_next
            if residuals[-1] < tol:
                break
        else:
            raise ConvergenceError(
                f"no periodic steady state after {max_periods} periods "
                f"(last residual {residuals[-1]:.3g})", residuals)
    elif method != "shooting":
        raise EngineError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise EngineError("non-finite steady state")

    # record
    J = q * span
    xs = np.empty((J, n))
    cur = x.copy()
    for j in range(J):
        xs[j] = cur
        cur = M @ cur
    rows_by_cfg = {}
    crow = np.empty((S, 0, n))
    names = None
    per_sample = []
    for cfg in maps.sample_configs:
        if cfg not in rows_by_cfg:
            rows_by_cfg[cfg] = probe_rows(spec, prop.system(cfg), all_states)
        r = rows_by_cfg[cfg]
        if names is None:
            names = list(r)
        per_sample.append(np.stack([r[k] for k in names]))
    crow = np.einsum("spn,snm->spm", np.stack(per_sample), maps.sample_maps)
    vals = np.einsum("spm,jm->jsp", crow, xs)
    samples = {k: vals[:, :, i].reshape(-1).copy() for i, k in enumerate(names)}
    return SimTrace(
        dt=clocks.period / S, samples=samples, span=span, period=timeline.period,
        clock_period=clocks.period, x0=x, labels=prop.system(timeline.events[0][1]).labels,
        residuals=residuals,
        settings={"tol": tol, "max_periods": max_periods, "span": span, "method": method,
                  "samples_per_clock_period": S, "repeats": q,
                  "input_cycles": timeline.input_cycles},
    )


def period_energy(spec: CircuitSpec, clocks: ClockSet, x0: np.ndarray,
                  f_in: Optional[float] = None) -> Tuple[float, float]:
    """Energy delivered by the source and burnt in resistors over one common period.

    Both integrals are exact (Van Loan block exponential per interval).
    """
    if f_in is not None:
        spec = spec.with_(f_in=f_in)
    timeline = build_timeline(clocks, spec.f_in)
    prop = Propagator(spec)
    # second moment of the LO-period start states
    M = np.eye(x0.size)
    seg = []
    for cfg, h in timeline.intervals():
        if h <= 0:
            continue
        seg.append((cfg, h, M.copy()))
        M = prop.step_matrix(cfg, h) @ M
    sxx = np.zeros((x0.size, x0.size))
    x = x0.copy()
    for _ in range(timeline.repeats):
        sxx += np.outer(x, x)
        x = M @ x
    e_src = e_diss = 0.0
    for cfg, h, psi in seg:
        sys_ = prop.system(cfg)
        w_src = _van_loan(sys_.a, source_power_form(sys_), h)
        w_diss = _van_loan(sys_.a, dissipation_form(spec, sys_), h)
        e_src += float(np.sum((psi.T @ w_src @ psi) * sxx))
        e_diss += float(np.sum((psi.T @ w_diss @ psi) * sxx))
    return e_src, e_diss


def rk4_step_matrix(a: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``dx/dt = A x`` applied to every basis vector."""
    x = np.eye(a.shape[0])
    k1 = a @ x
    k2 = a @ (x + 0.5 * h * k1)
    k3 = a @ (x + 0.5 * h * k2)
    k4 = a @ (x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_rk4(spec: CircuitSpec, clocks: ClockSet, x0: np.ndarray, n_clock_periods: int,
                 dt_max: float) -> np.ndarray:
    """Fixed-step RK4 reference, stepping to every clock edge exactly."""
    timeline = build_timeline(clocks, spec.f_in)
    prop = Propagator(spec)
    M = np.eye(x0.size)
    for cfg, h in timeline.intervals():
        if h <= 0:
            continue
        m = max(1, int(math.ceil(h / dt_max - 1e-9)))
        step = rk4_step_matrix(prop.system(cfg).a, h / m)
        M = np.linalg.matrix_power(step, m) @ M
    x = x0.copy()
    for _ in range(n_clock_periods):
        x = M @ x
    return x


def simulate_exact(spec: CircuitSpec, clocks: ClockSet, x0: np.ndarray,
                   n_clock_periods: int) -> np.ndarray:
    timeline = build_timeline(clocks, spec.f_in)
    prop = Propagator(spec)
    x = x0.copy()
    for _ in range(n_clock_periods):
        for cfg, h in timeline.intervals():
            if h > 0:
                x = prop.step_matrix(cfg, h) @ x
    return x
