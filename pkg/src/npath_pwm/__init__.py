"""Simulation and measurement of N-path filters driven by multiphase PWM clocks."""

__version__ = "0.1.0"

from .pwm_clocks import (ClockConfigError, ClockSet, LoSpec, PulseTrain, build_fixed_duty_clockset,
                         build_iq_clockset, build_single_train)
from .circuit import CircuitSpec, fixed_duty_spec, pwm_filter_spec
from .engine import run_to_steady_state

__all__ = [
    "ClockConfigError", "ClockSet", "LoSpec", "PulseTrain", "build_fixed_duty_clockset",
    "build_iq_clockset", "build_single_train", "CircuitSpec", "fixed_duty_spec",
    "pwm_filter_spec", "run_to_steady_state",
]
