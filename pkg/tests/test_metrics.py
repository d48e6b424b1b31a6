import json
import math

import numpy as np
import pytest

from npath_pwm.circuit import CircuitSpec, PWM_A_LO, fixed_duty_spec, pwm_filter_spec
from npath_pwm.metrics import (MetricsError, SweepResult, _job_fold, channel_products,
                               config_hash, db20, dumps_json, gain_vs_alo, harmonic_folding,
                               harmonic_response, linear_fit_r2, local_peaks, merge_reports,
                               reflection, rf_transfer, run_parallel, s11)
from npath_pwm.pwm_clocks import build_all_off_clockset, build_iq_clockset, LoSpec

F_LO = 100e6


def test_dumps_json_fixed_precision():
    text = dumps_json({"a": 0.1, "b": [1, 2.5], "c": {"d": None, "e": True}, "f": -math.inf})
    assert '"a": 0.10000000000000001' in text
    assert '"f": "-inf"' in text
    assert json.loads(text)["b"] == [1, 2.5]
    assert dumps_json({"x": 1}) == dumps_json({"x": 1})
    assert config_hash({"x": 1.0}) != config_hash({"x": 1.0000000000000002})


def test_sweep_result_csv():
    r = SweepResult("t", "f", [1.0, 2.0], ["g"], [{"g": 0.5}, {"g": -math.inf}])
    assert r.to_csv() == "f,g\n1,0.5\n2,-inf\n"
    assert json.loads(r.to_json())["points"][0] == {"f": 1.0, "g": 0.5}


def test_reflection_formula():
    assert reflection(1.0, 1 / 50, 50.0) == pytest.approx(0.0)
    assert reflection(1.0, 0.0, 50.0) == pytest.approx(1.0)
    assert reflection(0.0, 1.0, 50.0) == pytest.approx(-1.0)
    # 100 ohm load on 50 ohm: (100-50)/(100+50)
    assert reflection(1.0, 1 / 100, 50.0) == pytest.approx(1 / 3)


def test_s11_open_fixture():
    spec = CircuitSpec(has_inductor=False, c_par=0.0)
    res = s11(spec, build_all_off_clockset(F_LO), [101e6, 150e6], jobs=1)
    np.testing.assert_allclose(res.column("s11_db"), 0.0, atol=1e-9)


def test_s11_matched_fixture():
    spec = CircuitSpec(has_inductor=False, c_par=0.0, r_load=50.0)
    res = s11(spec, build_all_off_clockset(F_LO), [101e6, 150e6], jobs=1)
    assert np.all(res.column("s11_db") <= -80)


def test_baseline_third_harmonic_law(baseline_clocks):
    k1 = harmonic_response(fixed_duty_spec(), baseline_clocks, 1, [2e6], jobs=1)
    k3 = harmonic_response(fixed_duty_spec(), baseline_clocks, 3, [2e6], jobs=1)
    assert k3.peak - k1.peak == pytest.approx(-9.54, abs=1.5)


def test_pwm_passband_and_normalization(pwm_clocks):
    r1 = harmonic_response(pwm_filter_spec(), pwm_clocks, 1, [2e6, 5e6], jobs=1)
    r2 = harmonic_response(pwm_filter_spec(v_source_amp=2.0), pwm_clocks, 1, [2e6, 5e6], jobs=1)
    assert all(math.isfinite(g) for g in r1.conv_gain)
    np.testing.assert_allclose(r1.conv_gain, r2.conv_gain, atol=1e-6)


def test_offset_sign_symmetry(pwm_clocks):
    offs = [-7e6, -2e6, 2e6, 7e6]
    r = harmonic_response(pwm_filter_spec(), pwm_clocks, 1, offs, jobs=1)
    g = dict(zip(offs, r.conv_gain))
    for o in (2e6, 7e6):
        assert abs(g[o] - g[-o]) < 0.5


def test_harmonic_response_validation(pwm_clocks):
    with pytest.raises(MetricsError):
        harmonic_response(pwm_filter_spec(), pwm_clocks, 0, [1e6])
    with pytest.raises(MetricsError):
        harmonic_response(pwm_filter_spec(), pwm_clocks, 1, [60e6])


def test_merge_reports_reference(pwm_clocks):
    reps = [harmonic_response(pwm_filter_spec(), pwm_clocks, k, [2e6, 4e6], jobs=1)
            for k in (1, 3)]
    m = merge_reports("x", reps)
    assert m.summary["k1_rel_db"] == 0.0
    assert m.summary["k3_rel_db"] < -40
    assert len(m.rows) == 4 and m.rows[2]["k"] == 3.0


def test_local_peaks():
    y = [0, 1, 0, 0.05, 0, 2, 1]
    assert local_peaks(list(range(7)), y) == [1.0, 5.0]
    assert local_peaks(list(range(7)), y, prominence=0.01) == [1.0, 3.0, 5.0]


def test_rf_transfer_baseline_has_harmonic_peaks(baseline_clocks):
    freqs = [f * 1e6 for f in range(60, 341, 20)]
    res = rf_transfer(fixed_duty_spec(), baseline_clocks, freqs, jobs=1)
    assert {100e6, 300e6} <= set(res.summary["peaks_hz"])
    assert res.summary["argmax_hz"] == 100e6


def test_gain_vs_alo_zero_amplitude_and_linearity():
    res = gain_vs_alo(pwm_filter_spec(), [0.0, 0.025, 0.05, 0.075, 0.1], jobs=1)
    bb = res.column("bb_amp")
    assert bb[0] == 0.0
    assert res.summary["linear_r2"] >= 0.99
    with pytest.raises(Exception):
        gain_vs_alo(pwm_filter_spec(), [0.6], jobs=1)


def test_linear_fit():
    m, c, r2 = linear_fit_r2([0, 1, 2], [1, 3, 5])
    assert (m, c, r2) == pytest.approx((2, 1, 1))


def test_channel_products():
    assert channel_products(103e6, F_LO, 25e6) == [-3e6, 3e6]
    assert channel_products(297e6, F_LO, 25e6) == [-3e6, 3e6]
    assert channel_products(150e6, F_LO, 25e6) == []
    assert channel_products(200e6, F_LO, 25e6) == []


def test_folding_zero_source_gives_zero_products(pwm_clocks):
    spec = pwm_filter_spec(v_source_amp=0.0)
    out = _job_fold((spec, pwm_clocks, 1599e6, channel_products(1599e6, F_LO, 25e6),
                     {"tol": 1e-9, "max_periods": 400, "span": 1}))
    assert out and all(c == 0 and r == 0 for c, r in out)


def test_folding_small_band(pwm_clocks):
    res = harmonic_folding(pwm_filter_spec(), pwm_clocks, 120e6, step=4e6, channel=12e6, jobs=1)
    s = res.summary
    assert s["peak_raw"] == pytest.approx(math.sqrt(2) * s["peak_iq"], rel=0.05)
    assert s["worst_iq_rel_db"] < -40
    with pytest.raises(MetricsError):
        harmonic_folding(pwm_filter_spec(), pwm_clocks, 121.5e6, step=4e6)


def test_parallel_matches_serial(pwm_clocks):
    freqs = [99e6, 101e6, 103e6]
    a = rf_transfer(pwm_filter_spec(), pwm_clocks, freqs, jobs=1)
    b = rf_transfer(pwm_filter_spec(), pwm_clocks, freqs, jobs=2)
    assert a.to_csv() == b.to_csv()
    assert run_parallel(abs, [-1, -2, 3], jobs=2) == [1, 2, 3]


def test_db20():
    assert db20(10) == 20.0 and db20(0) == -math.inf
