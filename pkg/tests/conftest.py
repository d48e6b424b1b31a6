import numpy as np
import pytest

from npath_pwm.circuit import PWM_A_LO, fixed_duty_spec, pwm_filter_spec
from npath_pwm.pwm_clocks import LoSpec, build_fixed_duty_clockset, build_iq_clockset

F_LO = 100e6
F_PWM = 1.6e9


@pytest.fixture(scope="session")
def pwm_clocks():
    return build_iq_clockset(LoSpec(F_LO, PWM_A_LO), F_PWM, alternating=True)


@pytest.fixture(scope="session")
def fixed_ramp_clocks():
    return build_iq_clockset(LoSpec(F_LO, PWM_A_LO), F_PWM, alternating=False)


@pytest.fixture(scope="session")
def baseline_clocks():
    return build_fixed_duty_clockset(F_LO, 16)


@pytest.fixture
def pwm_spec():
    return pwm_filter_spec()


@pytest.fixture
def baseline_spec():
    return fixed_duty_spec()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed", "xfailed", "xpassed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines, key=lambda s: (int(s.split()[1].rstrip("ab:")), s)):
            terminalreporter.write_line(ln)
