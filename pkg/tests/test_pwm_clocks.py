import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npath_pwm.pwm_clocks import (IQ_PATHS, ClockConfigError, ClockSet, DllBank, LoSpec,
                                  PulseTrain, RampSpec, build_all_off_clockset,
                                  build_fixed_duty_clockset, build_iq_clockset,
                                  build_single_train, dll_bank_for_train, dll_pulse_widths,
                                  dll_train, solve_crossing)

F_LO, F_PWM = 100e6, 1.6e9
T_PWM = 1 / F_PWM


def bisect_root(f, a, b, n=200):
    fa = f(a)
    for _ in range(n):
        m = 0.5 * (a + b)
        if (f(m) < 0) == (fa < 0):
            a, fa = m, f(m)
        else:
            b = m
    return 0.5 * (a + b)


def test_lospec_validation():
    with pytest.raises(ClockConfigError):
        LoSpec(0.0, 0.1)
    with pytest.raises(ClockConfigError):
        LoSpec(1e6, 0.5)
    with pytest.raises(ClockConfigError):
        LoSpec(1e6, 0.3, dc=0.75)
    assert LoSpec(1e6, 0.0).message(0.3) == 0.5


def test_ramp_validation():
    with pytest.raises(ClockConfigError):
        RampSpec("sideways", 0.0, 1.0)
    with pytest.raises(ClockConfigError):
        RampSpec("trailing", 0.0, 0.0)


def test_zero_amplitude_crossing_is_window_midpoint():
    lo = LoSpec(F_LO, 0.0)
    for kind in ("trailing", "leading"):
        t = solve_crossing(RampSpec(kind, 0.0, T_PWM / 2), lo, 3, T_PWM)
        assert t == pytest.approx(3 * T_PWM + T_PWM / 4, abs=1e-18)


@pytest.mark.parametrize("kind", ["trailing", "leading"])
@pytest.mark.parametrize("slot", [0, 5, 15])
def test_crossing_matches_plain_bisection(kind, slot):
    lo = LoSpec(F_LO, 0.3, phase=0.7)
    ramp = RampSpec(kind, T_PWM / 2, T_PWM / 2)
    t0 = slot * T_PWM + T_PWM / 2
    ref = bisect_root(lambda t: float(ramp.carrier(t - t0) - lo.message(t)), t0, t0 + T_PWM / 2)
    assert solve_crossing(ramp, lo, slot, T_PWM) == pytest.approx(ref, abs=1e-18)


def test_crossing_rejects_too_slow_ramp():
    # a ramp as slow as the LO: carrier slope below the message slope
    lo = LoSpec(F_LO, 0.45)
    with pytest.raises(ClockConfigError):
        solve_crossing(RampSpec("trailing", 0.0, 1 / F_LO), lo, 0, 1 / F_LO)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.0, 0.45), phase=st.floats(0, 2 * math.pi), slot=st.integers(0, 15),
       kind=st.sampled_from(["trailing", "leading"]))
def test_crossing_is_the_only_sign_change(a, phase, slot, kind):
    lo = LoSpec(F_LO, a, phase)
    ramp = RampSpec(kind, 0.0, T_PWM / 2)
    t = solve_crossing(ramp, lo, slot, T_PWM)
    t0 = slot * T_PWM
    tau = np.linspace(0, T_PWM / 2, 2001)
    g = ramp.carrier(tau) - lo.message(t0 + tau)
    s = np.sign(g[g != 0])
    changes = np.count_nonzero(np.diff(s) != 0)
    assert changes == 1
    assert abs(float(ramp.carrier(t - t0) - lo.message(t))) < 1e-9


def test_single_train_fourier_by_quadrature():
    for a in (0.1, 0.2, 0.4):
        lo = LoSpec(F_LO, a)
        tr = build_single_train(lo, F_PWM)
        t = np.linspace(0, 1 / F_LO, 2_000_001)
        p = tr.value(t)
        w = 2 * np.pi * F_LO
        dc = np.trapezoid(p, t) * F_LO
        a1 = 2 * F_LO * np.trapezoid(p * np.cos(w * t), t)
        b1 = 2 * F_LO * np.trapezoid(p * np.sin(w * t), t)
        assert dc == pytest.approx(0.25, abs=1e-5)
        assert math.hypot(a1, b1) == pytest.approx(0.5 * a, abs=2e-4)


def test_single_train_zero_amplitude_is_quarter_duty():
    tr = build_single_train(LoSpec(F_LO, 0.0), F_PWM)
    assert len(tr.edges) == 16
    np.testing.assert_allclose(tr.widths, T_PWM / 4, rtol=1e-12)


def test_iq_clockset_structure(fixed_ramp_clocks):
    cs = fixed_ramp_clocks
    assert cs.bank_ids() == [1, 2]
    assert sorted(cs.paths(1)) == sorted(IQ_PATHS)
    for key, tr in cs.trains.items():
        assert len(tr.edges) == 16
    # I lives in the first half of each PWM period, Q in the second
    def phase(t):
        x = t / T_PWM
        return x - math.floor(x + 1e-9)

    for b in (1, 2):
        for p in ("I+", "I-"):
            for s, e in cs.train(b, p).edges:
                assert phase(s) <= 0.5 + 1e-9 and phase(e - 1e-15) <= 0.5 + 1e-9
        for p in ("Q+", "Q-"):
            for s, e in cs.train(b, p).edges:
                assert phase(s) >= 0.5 - 1e-9


@pytest.mark.parametrize("alternating", [False, True])
def test_contiguity_million_instants(alternating, rng):
    cs = build_iq_clockset(LoSpec(F_LO, 0.2, 0.3), F_PWM, alternating)
    t = rng.uniform(0, 1 / F_LO, 1_000_000)
    for b in cs.bank_ids():
        assert np.all(cs.indicator_sum(b, t) == 1.0)


def test_fixed_duty_contiguity_and_widths(rng):
    for n in (2, 4, 16):
        cs = build_fixed_duty_clockset(F_LO, n)
        t = rng.uniform(0, 1 / F_LO, 100_000)
        assert np.all(cs.indicator_sum(1, t) == 1.0)
        total = sum(cs.train(1, p).on_time for p in cs.paths(1))
        assert total == pytest.approx(1 / F_LO, rel=1e-12)
    two = build_fixed_duty_clockset(F_LO, 2)
    assert two.train(1, "0").edges == ((0.0, 0.5 / F_LO),)


def test_minimum_pulse_width_above_20_percent():
    for a in (0.05, 0.15, 0.25):
        for alt in (False, True):
            cs = build_iq_clockset(LoSpec(F_LO, a, 0.1), F_PWM, alt)
            w = np.concatenate([tr.widths for tr in cs.trains.values()])
            assert w.min() >= 0.20 * T_PWM / 2


@pytest.mark.parametrize("alternating", [False, True])
def test_differential_is_three_level(alternating, rng):
    cs = build_iq_clockset(LoSpec(F_LO, 0.3), F_PWM, alternating)
    t = rng.uniform(0, 1 / F_LO, 200_000)
    for x in ("I", "Q"):
        d = cs.train(1, x + "+").value(t) - cs.train(2, x + "-").value(t)
        assert set(np.unique(d)) <= {-1.0, 0.0, 1.0}
        assert set(np.unique(d)) == {-1.0, 0.0, 1.0}


def test_alternating_flips_ramp_every_other_slot():
    cs = build_iq_clockset(LoSpec(F_LO, 0.2), F_PWM, True)
    ip = cs.train(1, "I+").edges
    # even slots: leading ramp, pulse ends at the window end
    assert ip[0][1] == pytest.approx(T_PWM / 2, abs=1e-18)
    # odd slots: trailing ramp, pulse starts at the window start
    assert ip[1][0] == pytest.approx(T_PWM, abs=1e-18)


def test_odd_ratio_rejected():
    with pytest.raises(ClockConfigError):
        build_iq_clockset(LoSpec(F_LO, 0.1), 15 * F_LO)
    with pytest.raises(ClockConfigError):
        build_iq_clockset(LoSpec(F_LO, 0.1), 16.5 * F_LO)


def test_validate_detects_gap_and_overlap():
    T = 1 / F_LO
    gap = ClockSet(F_LO, 2 * F_LO, "fixed_duty", 1,
                   {(1, "0"): PulseTrain(T, ((0.0, 0.4 * T),)),
                    (1, "1"): PulseTrain(T, ((0.5 * T, T),))})
    with pytest.raises(ClockConfigError, match="gap"):
        gap.validate()
    over = ClockSet(F_LO, 2 * F_LO, "fixed_duty", 1,
                    {(1, "0"): PulseTrain(T, ((0.0, 0.6 * T),)),
                     (1, "1"): PulseTrain(T, ((0.5 * T, T),))})
    with pytest.raises(ClockConfigError, match="overlap"):
        over.validate()


def test_pulse_train_rejects_bad_intervals():
    with pytest.raises(ClockConfigError):
        PulseTrain(1.0, ((0.5, 0.4),))
    with pytest.raises(ClockConfigError):
        PulseTrain(1.0, ((0.2, 0.5), (0.4, 0.6)))


def test_json_round_trip_is_exact(pwm_clocks):
    import json
    doc = json.loads(json.dumps(pwm_clocks.to_dict()))
    back = ClockSet.from_dict(doc)
    assert back.trains == pwm_clocks.trains
    assert back.scheme == pwm_clocks.scheme and back.lo == pwm_clocks.lo


def test_all_off_fixture():
    cs = build_all_off_clockset(F_LO)
    cs.validate()
    assert cs.indicator_sum(1, np.array([0.0, 1e-9])).tolist() == [0.0, 0.0]


def test_dll_widths_basic():
    bank = DllBank(16, (1 / 32,) * 16, T_PWM / 2)
    w = dll_pulse_widths(bank, F_LO)
    assert w[0] == pytest.approx(312.5e-12, rel=1e-12)
    tr = dll_train(bank, F_LO)
    t = np.linspace(0, 1 / F_LO, 1_600_001)[:-1]
    assert tr.value(t).mean() == pytest.approx(16 / 32, abs=1e-5)
    assert dll_pulse_widths(DllBank(2, (0.0, 0.0), T_PWM / 2), F_LO) == [0.0, 0.0]


def test_dll_rejects_width_beyond_slot():
    with pytest.raises(ClockConfigError):
        dll_pulse_widths(DllBank(1, (0.5,), T_PWM / 2), F_LO)
    with pytest.raises(ClockConfigError):
        DllBank(2, (0.1,), T_PWM / 2)


def test_dll_reproduces_ramp_train():
    tr = build_single_train(LoSpec(F_LO, 0.3, 0.4), F_PWM)
    bank = dll_bank_for_train(tr, F_PWM)
    rebuilt = dll_train(bank, F_LO, "trailing")
    np.testing.assert_allclose(np.array(rebuilt.edges), np.array(tr.edges), atol=1e-9 * T_PWM)
