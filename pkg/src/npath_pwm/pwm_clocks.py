"""Clock synthesis for N-path filters.

Every clock is held as an exact schedule of on-intervals over one LO period.
Natural-sampling PWM edges are the crossing times of a sinusoidal message
with a ramp carrier; all amplitudes are normalized to a ramp peak of 1.

Path names for the dual-bank PWM schemes are ``"I+", "I-", "Q+", "Q-"`` and
banks are numbered 1 and 2. The fixed-duty baseline uses one bank and paths
``"0" .. "N-1"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

IQ_PATHS = ("I+", "I-", "Q+", "Q-")
SCHEMES = ("iq_fixed_ramp", "iq_alternating", "fixed_duty", "fig2_single", "all_off")

# absolute tolerance on crossing times (s)
CROSSING_TOL = 1e-18
# edges closer than this are the same instant (s)
EDGE_MERGE_TOL = 1e-15


class ClockConfigError(ValueError):
    """Invalid clock configuration."""


@dataclass(frozen=True)
class LoSpec:
    """Sinusoidal message compared against the ramps.

    ``a_lo`` and ``dc`` are fractions of the ramp peak: a physical LO of
    amplitude A volts on a 1.2 V ramp is ``a_lo = A / 1.2``.
    """

    f_lo: float
    a_lo: float
    phase: float = 0.0
    dc: float = 0.5

    def __post_init__(self):
        if not self.f_lo > 0:
            raise ClockConfigError(f"f_lo must be positive, got {self.f_lo}")
        if not 0.0 <= self.a_lo < min(self.dc, 1.0 - self.dc):
            raise ClockConfigError(
                f"a_lo={self.a_lo} must satisfy 0 <= a_lo < {min(self.dc, 1.0 - self.dc)}")

    @property
    def period(self) -> float:
        return 1.0 / self.f_lo

    def message(self, t):
        return self.dc + self.a_lo * np.sin(2 * np.pi * self.f_lo * t + self.phase)

    def message_slope(self, t):
        w = 2 * np.pi * self.f_lo
        return self.a_lo * w * np.cos(w * t + self.phase)

    def with_phase(self, phase: float) -> "LoSpec":
        return LoSpec(self.f_lo, self.a_lo, phase, self.dc)


@dataclass(frozen=True)
class RampSpec:
    """One ramp window inside a PWM period.

    A ``trailing`` carrier rises 0 -> 1 over the window, so the pulse starts
    at the window start and its end is modulated. A ``leading`` carrier falls
    1 -> 0, so the pulse ends at the window end and its start is modulated.
    """

    edge_kind: str
    window_start: float
    window_len: float

    def __post_init__(self):
        if self.edge_kind not in ("trailing", "leading"):
            raise ClockConfigError(f"unknown edge kind {self.edge_kind!r}")
        if not self.window_len > 0:
            raise ClockConfigError("ramp window length must be positive")
        if self.window_start < 0:
            raise ClockConfigError("ramp window start must be non-negative")

    def carrier(self, tau):
        """Carrier level at offset ``tau`` into the window."""
        x = np.asarray(tau) / self.window_len
        return x if self.edge_kind == "trailing" else 1.0 - x


@dataclass(frozen=True)
class PulseTrain:
    """On-intervals ``[start, end)`` of one switch over one period."""

    period: float
    edges: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        prev_end = -math.inf
        for s, e in self.edges:
            if not (0.0 <= s <= e <= self.period * (1 + 1e-12)):
                raise ClockConfigError(f"interval ({s}, {e}) outside [0, {self.period})")
            if s < prev_end - EDGE_MERGE_TOL:
                raise ClockConfigError("pulse intervals must be sorted and disjoint")
            prev_end = e

    @property
    def on_time(self) -> float:
        return sum(e - s for s, e in self.edges)

    @property
    def widths(self) -> np.ndarray:
        return np.array([e - s for s, e in self.edges])

    def value(self, t) -> np.ndarray:
        """Indicator (0/1) of the train at times ``t`` (wrapped to one period)."""
        tt = np.mod(np.asarray(t, dtype=float), self.period)
        out = np.zeros(tt.shape)
        if not self.edges:
            return out
        starts = np.array([s for s, _ in self.edges])
        ends = np.array([e for _, e in self.edges])
        idx = np.searchsorted(starts, tt, side="right") - 1
        ok = idx >= 0
        out[ok] = (tt[ok] < ends[idx[ok]]).astype(float)
        return out


def _normalize_path(path) -> str:
    return str(path)


@dataclass
class ClockSet:
    """Per-switch schedules for every path of every bank."""

    f_lo: float
    f_pwm: float
    scheme: str
    banks: int
    trains: Dict[Tuple[int, str], PulseTrain] = field(default_factory=dict)
    lo: dict = field(default_factory=dict)

    @property
    def period(self) -> float:
        return 1.0 / self.f_lo

    @property
    def ratio(self) -> int:
        return int(round(self.f_pwm / self.f_lo))

    def paths(self, bank: int) -> List[str]:
        return [p for (b, p) in self.trains if b == bank]

    def bank_ids(self) -> List[int]:
        return sorted({b for b, _ in self.trains})

    def train(self, bank: int, path) -> PulseTrain:
        return self.trains[(bank, _normalize_path(path))]

    def indicator_sum(self, bank: int, t) -> np.ndarray:
        return sum(self.train(bank, p).value(t) for p in self.paths(bank))

    def validate(self) -> None:
        """Check that in every bank exactly one switch conducts at every instant."""
        if self.scheme == "all_off":
            return
        T = self.period
        for b in self.bank_ids():
            ivs = sorted(iv for p in self.paths(b) for iv in self.train(b, p).edges
                         if iv[1] - iv[0] > 0)
            t = 0.0
            for s, e in ivs:
                if abs(s - t) > EDGE_MERGE_TOL:
                    kind = "gap" if s > t else "overlap"
                    raise ClockConfigError(f"bank {b}: {kind} at t={t!r} (next edge {s!r})")
                t = e
            if abs(t - T) > EDGE_MERGE_TOL:
                raise ClockConfigError(f"bank {b}: schedule ends at {t!r}, period {T!r}")

    def to_dict(self) -> dict:
        banks = []
        for b in self.bank_ids():
            banks.append({
                "bank": b,
                "paths": [{"path": p,
                           "intervals": [[s, e] for s, e in self.train(b, p).edges]}
                          for p in self.paths(b)],
            })
        doc = {"f_lo": self.f_lo, "f_pwm": self.f_pwm, "scheme": self.scheme,
               "banks": banks}
        if self.lo:
            doc["lo"] = dict(self.lo)
        return doc

    def descriptor(self) -> dict:
        """Everything except the edge lists."""
        return {"f_lo": self.f_lo, "f_pwm": self.f_pwm, "scheme": self.scheme,
                "banks": self.banks, "n_paths": len(self.paths(self.bank_ids()[0])),
                **({"lo": dict(self.lo)} if self.lo else {})}

    @classmethod
    def from_dict(cls, doc: dict) -> "ClockSet":
        f_lo = float(doc["f_lo"])
        trains = {}
        for bank in doc["banks"]:
            for entry in bank["paths"]:
                edges = tuple((float(s), float(e)) for s, e in entry["intervals"])
                trains[(int(bank["bank"]), str(entry["path"]))] = PulseTrain(1.0 / f_lo, edges)
        cs = cls(f_lo, float(doc["f_pwm"]), doc["scheme"], len(doc["banks"]), trains,
                 dict(doc.get("lo", {})))
        cs.validate()
        return cs



def _check_ratio(f_lo: float, f_pwm: float, even: bool = True) -> int:
    r = f_pwm / f_lo
    R = int(round(r))
    if R < 1 or abs(r - R) > 1e-9 * R:
        raise ClockConfigError(f"f_pwm/f_lo = {r} is not a positive integer")
    if even and R % 2:
        raise ClockConfigError(f"f_pwm/f_lo = {R} must be even")
    return R


def solve_crossing(ramp: RampSpec, lo: LoSpec, slot_index: int, t_pwm: float = None) -> float:
    """Absolute time where the ramp carrier meets the message in one window.

    The window starts at ``slot_index * t_pwm + ramp.window_start``. The
    carrier is monotone and steeper than the message for every valid
    configuration, so the root is bracketed and unique. Bisection narrows the
    bracket, two Newton steps polish the root.
    """
    if t_pwm is None:
        t_pwm = ramp.window_start + ramp.window_len
    if ramp.window_start + ramp.window_len > t_pwm * (1 + 1e-12):
        raise ClockConfigError("ramp window does not fit in one PWM period")
    t0 = slot_index * t_pwm + ramp.window_start
    W = ramp.window_len
    sign = 1.0 if ramp.edge_kind == "trailing" else -1.0

    # g is increasing in tau for both edge kinds
    def g(tau):
        return sign * (ramp.carrier(tau) - lo.message(t0 + tau))

    def dg(tau):
        return sign * (sign / W - lo.message_slope(t0 + tau))

    lo_tau, hi_tau = 0.0, W
    g_lo, g_hi = g(lo_tau), g(hi_tau)
    if g_lo == 0.0:
        return t0
    if g_hi == 0.0:
        return t0 + W
    if g_lo > 0 or g_hi < 0:
        raise ClockConfigError(
            f"no sign change of carrier - message in window {slot_index} "
            f"(tangency or out-of-range message)")
    if dg(0.0) <= 0 or dg(W) <= 0:
        # carrier not steeper than the message: crossing may not be unique
        if np.min(dg(np.linspace(0, W, 65))) <= 0:
            raise ClockConfigError("message slope reaches carrier slope: degenerate crossing")
    while hi_tau - lo_tau > max(CROSSING_TOL, 4 * np.spacing(t0 + W)):
        mid = 0.5 * (lo_tau + hi_tau)
        gm = g(mid)
        if gm == 0.0:
            lo_tau = hi_tau = mid
            break
        if gm < 0:
            lo_tau = mid
        else:
            hi_tau = mid
    tau = 0.5 * (lo_tau + hi_tau)
    for _ in range(2):
        step = g(tau) / dg(tau)
        cand = tau - step
        if lo_tau - CROSSING_TOL <= cand <= hi_tau + CROSSING_TOL:
            tau = cand
    return t0 + float(tau)


def _pulse(ramp: RampSpec, lo: LoSpec, slot: int, t_pwm: float) -> Tuple[float, float]:
    c = solve_crossing(ramp, lo, slot, t_pwm)
    start = slot * t_pwm + ramp.window_start
    end = start + ramp.window_len
    return (start, c) if ramp.edge_kind == "trailing" else (c, end)


def build_single_train(lo: LoSpec, f_pwm: float) -> PulseTrain:
    """Trailing-edge PWM train: one ramp of half a PWM period per slot."""
    R = _check_ratio(lo.f_lo, f_pwm, even=False)
    t_pwm = 1.0 / f_pwm
    ramp = RampSpec("trailing", 0.0, t_pwm / 2)
    return PulseTrain(lo.period, tuple(_pulse(ramp, lo, k, t_pwm) for k in range(R)))


def build_iq_clockset(lo: LoSpec, f_pwm: float, alternating: bool = False) -> ClockSet:
    """Dual-bank I/Q PWM clocks.

    I paths use the first half of each PWM period and Q paths the second.
    Within a half-window a leading ramp and a trailing ramp share the same
    crossing instant, so the two pulses tile the window. Bank 2 reuses the
    ramp of its matched bank-1 path (I+(1) with I-(2), and so on) with the
    opposite-polarity sinusoid. With ``alternating`` the ramp assigned to
    each path swaps every PWM period.
    """
    R = _check_ratio(lo.f_lo, f_pwm, even=True)
    t_pwm = 1.0 / f_pwm
    W = t_pwm / 2
    phases = {"I+": 0.0, "I-": math.pi, "Q+": math.pi / 2, "Q-": 3 * math.pi / 2}
    window = {"I": 0.0, "Q": W}
    edges = {(b, p): [] for b in (1, 2) for p in IQ_PATHS}
    for k in range(R):
        flip = alternating and (k % 2 == 1)
        for x in ("I", "Q"):
            # bank 1: the "+" path takes the leading ramp (trailing when flipped)
            plus_kind = "trailing" if flip else "leading"
            minus_kind = "leading" if flip else "trailing"
            kinds = {
                (1, x + "+"): plus_kind, (1, x + "-"): minus_kind,
                (2, x + "-"): plus_kind, (2, x + "+"): minus_kind,
            }
            for (b, p), kind in kinds.items():
                ramp = RampSpec(kind, window[x], W)
                edges[(b, p)].append(_pulse(ramp, lo.with_phase(lo.phase + phases[p]), k, t_pwm))
    trains = {key: PulseTrain(lo.period, tuple(v)) for key, v in edges.items()}
    scheme = "iq_alternating" if alternating else "iq_fixed_ramp"
    cs = ClockSet(lo.f_lo, f_pwm, scheme, 2, trains,
                  {"a_lo": lo.a_lo, "phase": lo.phase, "dc": lo.dc})
    _snap_shared_edges(cs)
    cs.validate()
    return cs


def _snap_shared_edges(cs: ClockSet) -> None:
    """Make edges that solve the same crossing bit-identical across trains."""
    for b in cs.bank_ids():
        ivs = sorted(((s, e, p, i) for p in cs.paths(b)
                      for i, (s, e) in enumerate(cs.train(b, p).edges)))
        new = {p: list(cs.train(b, p).edges) for p in cs.paths(b)}
        for (s0, e0, p0, i0), (s1, e1, p1, i1) in zip(ivs, ivs[1:]):
            if abs(s1 - e0) <= EDGE_MERGE_TOL and s1 != e0:
                s, e = new[p1][i1]
                new[p1][i1] = (e0, e)
        for p in cs.paths(b):
            cs.trains[(b, p)] = PulseTrain(cs.period, tuple(new[p]))


def build_fixed_duty_clockset(f_lo: float, n_paths: int) -> ClockSet:
    """Classical N-path clocks: path k is on during [k T/N, (k+1) T/N)."""
    if n_paths < 2:
        raise ClockConfigError("fixed-duty clocks need at least two paths")
    T = 1.0 / f_lo
    bounds = [k * T / n_paths for k in range(n_paths)] + [T]
    trains = {(1, str(k)): PulseTrain(T, ((bounds[k], bounds[k + 1]),))
              for k in range(n_paths)}
    cs = ClockSet(f_lo, f_lo * n_paths, "fixed_duty", 1, trains)
    cs.validate()
    return cs


def build_all_off_clockset(f_lo: float, paths: Sequence[str] = IQ_PATHS, banks: int = 2) -> ClockSet:
    """Test fixture: every switch open for the whole period."""
    T = 1.0 / f_lo
    trains = {(b, p): PulseTrain(T, ()) for b in range(1, banks + 1) for p in paths}
    return ClockSet(f_lo, f_lo, "all_off", banks, trains)


@dataclass(frozen=True)
class DllBank:
    """Reference duty cycles of the time-interleaved DLL pulse generators."""

    n_slots: int
    v_refs: Tuple[float, ...]
    input_pulse_width: float

    def __post_init__(self):
        if len(self.v_refs) != self.n_slots:
            raise ClockConfigError(f"expected {self.n_slots} references, got {len(self.v_refs)}")
        for v in self.v_refs:
            if not 0.0 <= v < 1.0:
                raise ClockConfigError(f"v_ref {v} outside [0, 1)")


def dll_pulse_widths(bank: DllBank, f_lo: float) -> List[float]:
    """Locked pulse widths of a DLL bank.

    Each generator emits one pulse per LO period, and the loop settles where
    the pulse train's average equals its reference, i.e. width = v_ref * T_LO.
    The width has to fit in the generator's half-PWM-period slot.
    """
    T = 1.0 / f_lo
    slot = bank.input_pulse_width
    widths = [v * T for v in bank.v_refs]
    for k, w in enumerate(widths):
        if w > slot * (1 + 1e-12):
            raise ClockConfigError(f"slot {k}: width {w} exceeds slot window {slot}")
    return widths


def dll_bank_for_train(train: PulseTrain, f_pwm: float) -> DllBank:
    """References that make a DLL bank reproduce ``train`` (one pulse per slot)."""
    return DllBank(len(train.edges), tuple(w / train.period for w in train.widths),
                   1.0 / (2 * f_pwm))


def dll_train(bank: DllBank, f_lo: float, edge_kind: str = "trailing",
              window_start: float = 0.0) -> PulseTrain:
    """Interleave the DLL outputs into one PWM train, one pulse per PWM period."""
    T = 1.0 / f_lo
    t_pwm = T / bank.n_slots
    W = bank.input_pulse_width
    edges = []
    for k, w in enumerate(dll_pulse_widths(bank, f_lo)):
        s = k * t_pwm + window_start
        edges.append((s, s + w) if edge_kind == "trailing" else (s + W - w, s + W))
    return PulseTrain(T, tuple(edges))
