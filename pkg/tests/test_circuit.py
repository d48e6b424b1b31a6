import numpy as np
import pytest
from scipy.linalg import expm

from npath_pwm.circuit import (PWM_C_LOAD, CircuitConfigError, CircuitSpec, assemble,
                               dissipation_form, fixed_duty_spec, load_label, partner_path,
                               pwm_filter_spec, reflect_balun_current, source_power_form,
                               state_labels)


def test_defaults():
    s = pwm_filter_spec()
    assert (s.r_source, s.l_series, s.c_par, s.r_sw) == (50.0, 35e-9, 100e-15, 5.0)
    assert s.c_load == PWM_C_LOAD and s.n_banks == 2
    b = fixed_duty_spec()
    assert b.n_banks == 1 and not b.has_inductor and b.c_load == 50e-12
    assert b.path_names() == [str(k) for k in range(16)]


def test_validation():
    with pytest.raises(CircuitConfigError):
        CircuitSpec(r_sw=0)
    with pytest.raises(CircuitConfigError):
        CircuitSpec(c_par=-1)
    with pytest.raises(CircuitConfigError):
        CircuitSpec(n_paths_per_bank=8).path_names()
    with pytest.raises(CircuitConfigError):
        assemble(pwm_filter_spec(), ("I+",))
    with pytest.raises(CircuitConfigError):
        assemble(pwm_filter_spec(), ("I+", "X"))


def test_state_layout():
    assert state_labels(pwm_filter_spec()) == [
        "i_l", "v_rf", "v_bb[I+]", "v_bb[I-]", "v_bb[Q+]", "v_bb[Q-]", "osc_c", "osc_s"]
    sep = pwm_filter_spec(shared_load=False)
    assert len(state_labels(sep)) == 2 + 8 + 2
    assert state_labels(fixed_duty_spec(4, c_par=0.0)) == [
        "v_bb[1,0]", "v_bb[1,1]", "v_bb[1,2]", "v_bb[1,3]", "osc_c", "osc_s"]


def test_matched_paths_share_a_capacitor():
    spec = pwm_filter_spec()
    assert partner_path("I-") == "I+" and partner_path("Q+") == "Q-"
    assert load_label(spec, 1, "I+") == load_label(spec, 2, "I-") == "v_bb[I+]"
    assert load_label(spec, 2, "Q+") == "v_bb[Q-]"


def test_balun_reflection():
    assert reflect_balun_current([2.0, -1.0]) == 3.0
    assert reflect_balun_current([0.5]) == 0.5


def _node_voltage(spec, sys_, x):
    return float(sys_.v_rf_row @ x)


def test_algebraic_rf_node_by_hand():
    # no inductor, no c_par: v_rf from nodal analysis with the balun
    spec = pwm_filter_spec(has_inductor=False, c_par=0.0)
    sys_ = assemble(spec, ("I+", "Q+"))
    x = np.zeros(sys_.dimension)
    x[sys_.index("osc_c")] = 1.0
    x[sys_.index("v_bb[I+]")] = 0.3
    x[sys_.index("v_bb[Q-]")] = -0.2
    r, rs = spec.r_sw, spec.r_source
    # KCL: (1 - v)/rs = (v - 0.3)/r - (-v - (-0.2))/r
    v = (1 / rs + 0.3 / r + 0.2 / r) / (1 / rs + 2 / r)
    assert _node_voltage(spec, sys_, x) == pytest.approx(v, rel=1e-14)


def test_shared_capacitor_through_both_windings_settles_to_zero():
    # I+ of bank 1 and I- of bank 2 load the same capacitor from +v and -v
    spec = pwm_filter_spec(has_inductor=False, c_par=0.0, f_in=0.0)
    sys_ = assemble(spec, ("I+", "I-"))
    x = np.zeros(sys_.dimension)
    x[sys_.index("osc_c")] = 1.0
    x[sys_.index("v_bb[I+]")] = 0.7
    y = expm(sys_.a * 1e-5) @ x
    assert abs(y[sys_.index("v_bb[I+]")]) < 1e-12
    r, rs = spec.r_sw, spec.r_source
    assert _node_voltage(spec, sys_, y) == pytest.approx((r / 2) / (rs + r / 2), rel=1e-12)


def test_dc_steady_state_single_path():
    spec = fixed_duty_spec(4, has_inductor=False, c_par=0.0, f_in=0.0)
    sys_ = assemble(spec, ("2",))
    x = np.zeros(sys_.dimension)
    x[sys_.index("osc_c")] = 1.0
    y = expm(sys_.a * 1e-6) @ x
    # the capacitor charges to the full EMF and the source current stops
    assert y[sys_.index("v_bb[1,2]")] == pytest.approx(1.0, rel=1e-12)
    assert abs(sys_.i_src_row @ y) < 1e-12


def test_inductor_branch():
    spec = pwm_filter_spec()
    sys_ = assemble(spec, ("I+", "Q+"))
    il = sys_.index("i_l")
    # d i_l/dt = (emf - rs*i_l - v_rf)/L
    assert sys_.a[il, sys_.index("osc_c")] == pytest.approx(1 / spec.l_series)
    assert sys_.a[il, il] == pytest.approx(-spec.r_source / spec.l_series)
    assert sys_.a[il, sys_.index("v_rf")] == pytest.approx(-1 / spec.l_series)
    np.testing.assert_array_equal(sys_.i_src_row, np.eye(sys_.dimension)[il])


def test_circuit_part_is_stable():
    for spec in (pwm_filter_spec(), fixed_duty_spec(), pwm_filter_spec(shared_load=False)):
        names = spec.path_names()
        cfg = tuple(names[0] for _ in range(spec.n_banks))
        ev = assemble(spec, cfg).circuit_eigenvalues()
        assert np.all(ev.real <= 1e-6 * np.abs(ev).max())


def test_power_forms_balance_instantaneously():
    # without reactive storage in the source branch, emf*i = dissipation + d/dt(stored)
    spec = pwm_filter_spec(has_inductor=False, c_par=0.0)
    sys_ = assemble(spec, ("I+", "Q-"))
    rng = np.random.default_rng(1)
    x = rng.normal(size=sys_.dimension)
    p_src = x @ source_power_form(sys_) @ x
    p_diss = x @ dissipation_form(spec, sys_) @ x
    dx = sys_.a @ x
    stored = sum(spec.c_load * x[k] * dx[k] for k in range(sys_.dimension - 2))
    assert p_src == pytest.approx(p_diss + stored, rel=1e-12)


def test_r_load_fixture():
    spec = CircuitSpec(has_inductor=False, c_par=0.0, r_load=50.0, has_balun=True)
    sys_ = assemble(spec, (None, None))
    x = np.zeros(sys_.dimension)
    x[-2] = 1.0
    assert sys_.v_rf_row @ x == pytest.approx(0.5)
    assert sys_.i_src_row @ x == pytest.approx(0.01)
