"""Electrical model of the switched-capacitor N-path filter.

Between two clock edges the filter is a linear time-invariant network, so it
is assembled as an autonomous system ``dx/dt = A x``. The source tone is part
of the state as a rotating (cos, sin) pair, which keeps every interval
homogeneous and lets the engine propagate it exactly.

State layout: ``[i_l]`` (only with the series inductor), ``v_rf`` (only when
``c_par > 0``), one voltage per load capacitor, then ``osc_c``, ``osc_s``. The
source EMF is ``v_source_amp * osc_c``.

In the dual-bank filter, path ``P+`` of bank 1 and path ``P-`` of bank 2 see
opposite winding polarities and drive one shared capacitor ``v_bb[P+]``, so
that capacitor is charged through the 3-level difference of the two clocks.
With ``shared_load=False`` each (bank, path) keeps its own capacitor
``v_bb[b,p]`` and the banks are only combined in the read-out.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .pwm_clocks import IQ_PATHS


class CircuitConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CircuitSpec:
    """Element values (SI units) and topology flags.

    ``r_load`` adds a resistor from the RF node to ground; it exists for
    calibration fixtures and defaults to none. ``c_par = 0`` makes the RF node
    algebraic.
    """

    r_source: float = 50.0
    has_inductor: bool = True
    l_series: float = 35e-9
    c_par: float = 100e-15
    has_balun: bool = True
    r_sw: float = 5.0
    c_load: float = 50e-12
    n_paths_per_bank: int = 4
    v_source_amp: float = 1.0
    f_in: float = 101e6
    r_load: Optional[float] = None
    shared_load: bool = True

    def __post_init__(self):
        if not self.r_source > 0:
            raise CircuitConfigError("r_source must be positive")
        if self.has_inductor and not self.l_series > 0:
            raise CircuitConfigError("l_series must be positive when has_inductor is set")
        if self.c_par < 0:
            raise CircuitConfigError("c_par must be non-negative")
        if not self.r_sw > 0 or not self.c_load > 0:
            raise CircuitConfigError("r_sw and c_load must be positive")
        if self.n_paths_per_bank < 1:
            raise CircuitConfigError("need at least one path per bank")
        if self.r_load is not None and not self.r_load > 0:
            raise CircuitConfigError("r_load must be positive when given")
        if self.f_in < 0:
            raise CircuitConfigError("f_in must be non-negative")

    @property
    def n_banks(self) -> int:
        return 2 if self.has_balun else 1

    def path_names(self) -> List[str]:
        if self.has_balun:
            if self.n_paths_per_bank != 4:
                raise CircuitConfigError("the dual-bank filter has four paths per bank")
            return list(IQ_PATHS)
        return [str(k) for k in range(self.n_paths_per_bank)]

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "CircuitSpec":
        return replace(self, **kw)


# The PWM clocks spread each load capacitor's charge over a 1/(4R) duty, so
# matching the baseline's few-MHz baseband bandwidth needs a larger C_L.
PWM_C_LOAD = 4e-9
# LO amplitude of the PWM design, as a fraction of the ramp peak
PWM_A_LO = 160.0 / 1200.0


def pwm_filter_spec(**kw) -> CircuitSpec:
    """Dual-bank PWM-LO filter with the default element values."""
    kw.setdefault("c_load", PWM_C_LOAD)
    return CircuitSpec(**kw)


def fixed_duty_spec(n_paths: int = 16, **kw) -> CircuitSpec:
    """Single-bank baseline: no balun and no input inductor."""
    kw.setdefault("has_inductor", False)
    return CircuitSpec(has_balun=False, n_paths_per_bank=n_paths, **kw)


# per-bank conducting path, None for "all open" (test fixture only)
SwitchConfig = Tuple[Optional[str], ...]


@dataclass(frozen=True)
class LinearSystem:
    """``dx/dt = a @ x`` plus linear read-outs of derived quantities.

    ``v_rf_row``, ``i_src_row`` and ``emf_row`` give the RF-node voltage, the
    source current and the source EMF as ``row @ x``. ``sw_rows`` holds the
    current of each conducting switch.
    """

    a: np.ndarray
    labels: Tuple[str, ...]
    config: SwitchConfig
    v_rf_row: np.ndarray
    i_src_row: np.ndarray
    emf_row: np.ndarray
    sw_rows: Tuple[np.ndarray, ...] = ()
    load_row: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return self.a.shape[0]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def osc_slice(self) -> slice:
        return slice(self.dimension - 2, self.dimension)

    def circuit_eigenvalues(self) -> np.ndarray:
        n = self.dimension - 2
        return np.linalg.eigvals(self.a[:n, :n])


def partner_path(path: str) -> str:
    """Bank-1 path whose capacitor a bank-2 path shares: ``I-`` -> ``I+``."""
    return path[:-1] + ("-" if path.endswith("+") else "+")


def load_label(spec: CircuitSpec, bank: int, path: str) -> str:
    """State label of the capacitor that switch (bank, path) connects to."""
    if spec.has_balun and spec.shared_load:
        return f"v_bb[{path if bank == 1 else partner_path(path)}]"
    return f"v_bb[{bank},{path}]"


def load_labels(spec: CircuitSpec) -> List[str]:
    if spec.has_balun and spec.shared_load:
        return [f"v_bb[{p}]" for p in spec.path_names()]
    return [f"v_bb[{b},{p}]" for b in range(1, spec.n_banks + 1) for p in spec.path_names()]


def state_labels(spec: CircuitSpec) -> List[str]:
    labels = []
    if spec.has_inductor:
        labels.append("i_l")
    if spec.c_par > 0:
        labels.append("v_rf")
    return labels + load_labels(spec) + ["osc_c", "osc_s"]


def reflect_balun_current(i_secondary: Sequence[float]) -> float:
    """Primary current of an ideal 1:1:1 balun with an inverting second winding.

    ``i_secondary[b]`` flows out of winding ``b`` into its filter bank.
    """
    if len(i_secondary) == 1:
        return float(i_secondary[0])
    i1, i2 = i_secondary
    return float(i1 - i2)


def winding_sign(bank: int) -> float:
    return 1.0 if bank == 1 else -1.0


def assemble(spec: CircuitSpec, config: SwitchConfig) -> LinearSystem:
    """State matrix for one switch configuration.

    The RF node collects the source branch (through ``r_source`` and, when
    present, ``l_series``), ``c_par``, optional ``r_load`` and the balun
    primary. Winding ``b`` presents ``s_b * v_rf`` to bank ``b`` with
    ``s_1 = +1, s_2 = -1``; the conducting switch of each bank connects that
    voltage through ``r_sw`` to its load capacitor. Open paths hold charge.
    """
    if len(config) != spec.n_banks:
        raise CircuitConfigError(f"config {config} does not match {spec.n_banks} bank(s)")
    names = spec.path_names()
    for p in config:
        if p is not None and p not in names:
            raise CircuitConfigError(f"unknown path {p!r}")
    labels = state_labels(spec)
    n = len(labels)
    idx = {lab: k for k, lab in enumerate(labels)}
    oc, os_ = idx["osc_c"], idx["osc_s"]
    w_in = 2 * np.pi * spec.f_in
    V = spec.v_source_amp
    g_sw = 1.0 / spec.r_sw

    def unit(k):
        r = np.zeros(n)
        r[k] = 1.0
        return r

    emf = V * unit(oc)

    # RF-node KCL written as c_par * dv_rf/dt = inj @ x - G * v_rf, with
    # switch currents and source current affine in (x, v_rf).
    inj = np.zeros(n)
    G = 0.0
    if spec.has_inductor:
        inj += unit(idx["i_l"])
    else:
        inj += emf / spec.r_source
        G += 1.0 / spec.r_source
    if spec.r_load is not None:
        G += 1.0 / spec.r_load
    on = []
    for b, p in enumerate(config, start=1):
        if p is None:
            continue
        s = winding_sign(b)
        k = idx[load_label(spec, b, p)]
        on.append((s, k))
        # primary current s*i_sw with i_sw = (s*v_rf - v_bb)/r_sw
        G += g_sw
        inj += s * g_sw * unit(k)

    if spec.c_par > 0:
        v_rf_row = unit(idx["v_rf"])
    else:
        if G == 0:
            raise CircuitConfigError("RF node has no conductance and no capacitance")
        v_rf_row = inj / G

    a = np.zeros((n, n))
    if spec.c_par > 0:
        r = idx["v_rf"]
        a[r] += (inj - G * v_rf_row) / spec.c_par
    if spec.has_inductor:
        r = idx["i_l"]
        a[r] += (emf - spec.r_source * unit(r) - v_rf_row) / spec.l_series
        i_src_row = unit(r)
    else:
        i_src_row = (emf - v_rf_row) / spec.r_source
    sw_rows = []
    for s, k in on:
        i_sw = g_sw * (s * v_rf_row - unit(k))
        a[k] += i_sw / spec.c_load
        sw_rows.append(i_sw)
    a[oc, os_] = -w_in
    a[os_, oc] = w_in
    load_row = v_rf_row / spec.r_load if spec.r_load is not None else None
    return LinearSystem(a, tuple(labels), tuple(config), v_rf_row, i_src_row, emf,
                        tuple(sw_rows), load_row)


def dissipation_form(spec: CircuitSpec, system: LinearSystem) -> np.ndarray:
    """Symmetric Q with ``x @ Q @ x`` = power burnt in all resistors."""
    q = spec.r_source * np.outer(system.i_src_row, system.i_src_row)
    for row in system.sw_rows:
        q += spec.r_sw * np.outer(row, row)
    if system.load_row is not None:
        q += spec.r_load * np.outer(system.load_row, system.load_row)
    return q


def source_power_form(system: LinearSystem) -> np.ndarray:
    """Symmetric Q with ``x @ Q @ x`` = EMF times source current."""
    q = np.outer(system.emf_row, system.i_src_row)
    return 0.5 * (q + q.T)
