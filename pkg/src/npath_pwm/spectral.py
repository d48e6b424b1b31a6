"""Fourier analysis of pulse trains and coherent tone measurement.

Amplitudes are one-sided everywhere: a signal ``A*cos(2*pi*f*t + phi)`` is
reported as amplitude ``A`` and phase ``phi``; DC is reported separately.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Tuple

import numpy as np

from .pwm_clocks import ClockSet, PulseTrain

# frequency * window must be this close to an integer to count as coherent
COHERENCE_TOL = 1e-6


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class FourierCoeffs:
    """``P(t) = dc + sum_n a_n cos(n w t) + b_n sin(n w t)``."""

    period: float
    dc: float
    a: np.ndarray  # a[n-1] for n = 1..n_max
    b: np.ndarray

    @property
    def n_max(self) -> int:
        return len(self.a)

    def amplitude(self, n: int) -> float:
        """One-sided amplitude of harmonic ``n`` (``dc`` for n = 0)."""
        if n == 0:
            return abs(self.dc)
        return float(math.hypot(self.a[n - 1], self.b[n - 1]))

    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.a, self.b)

    def power(self) -> float:
        """Mean-square value carried by the retained terms."""
        return float(self.dc ** 2 + 0.5 * np.sum(self.a ** 2 + self.b ** 2))

    def __sub__(self, other: "FourierCoeffs") -> "FourierCoeffs":
        return FourierCoeffs(self.period, self.dc - other.dc, self.a - other.a, self.b - other.b)

    def __add__(self, other: "FourierCoeffs") -> "FourierCoeffs":
        return FourierCoeffs(self.period, self.dc + other.dc, self.a + other.a, self.b + other.b)


def fourier_of_train(train: PulseTrain, n_max: int) -> FourierCoeffs:
    """Closed-form Fourier series of a 0/1 pulse train from its edge times."""
    if n_max < 1:
        raise SpectralError("n_max must be >= 1")
    T = train.period
    w = 2 * np.pi / T
    n = np.arange(1, n_max + 1)
    if not train.edges:
        z = np.zeros(n_max)
        return FourierCoeffs(T, 0.0, z, z.copy())
    s = np.array([iv[0] for iv in train.edges])
    e = np.array([iv[1] for iv in train.edges])
    dc = float(np.sum(e - s) / T)
    # a_n = (2/T) int cos(n w t), b_n = (2/T) int sin(n w t) over the on-intervals
    ns = np.outer(n, s) * w
    ne = np.outer(n, e) * w
    a = (np.sin(ne) - np.sin(ns)).sum(axis=1) / (n * np.pi)
    b = (np.cos(ns) - np.cos(ne)).sum(axis=1) / (n * np.pi)
    return FourierCoeffs(T, dc, a, b)


def spectrum_of_differential_lo(clocks: ClockSet, pair, n_max: int,
                                combine: str = "difference") -> FourierCoeffs:
    """Fourier series of ``P_x(bank_x) -/+ P_y(bank_y)``.

    ``pair`` is ``((bank, path), (bank, path))``. With ``combine='sum'`` the
    common-mode train is returned instead of the 3-level difference.
    """
    (b1, p1), (b2, p2) = pair
    banks = clocks.bank_ids()
    if b1 not in banks or b2 not in banks:
        raise SpectralError(f"bank not present in clock set: {pair}")
    if b1 == b2 and clocks.banks == 2:
        raise SpectralError("differential LO pairs span the two banks")
    f1 = fourier_of_train(clocks.train(b1, p1), n_max)
    f2 = fourier_of_train(clocks.train(b2, p2), n_max)
    if combine == "difference":
        return f1 - f2
    if combine == "sum":
        return f1 + f2
    raise SpectralError(f"unknown combine mode {combine!r}")


@dataclass(frozen=True)
class SpectrumLine:
    freq: float
    amplitude: float
    phase: float

    @property
    def phasor(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase)


def _check_coherent(freq: float, n: int, dt: float) -> int:
    cycles = freq * n * dt
    k = int(round(cycles))
    if abs(cycles - k) > COHERENCE_TOL:
        raise SpectralError(f"{freq} Hz is not coherent with a {n * dt} s window "
                            f"({cycles} cycles)")
    if freq < 0 or k >= n / 2:
        raise SpectralError(f"{freq} Hz is outside (0, Nyquist) for dt={dt}")
    return k


def tone_of_samples(x: np.ndarray, dt: float, freq: float) -> SpectrumLine:
    """Single-bin correlation of uniformly sampled ``x`` at an on-grid ``freq``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    k = _check_coherent(freq, n, dt)
    if k == 0:
        m = float(np.mean(x))
        return SpectrumLine(freq, abs(m), 0.0 if m >= 0 else math.pi)
    # exact-integer bin index keeps the basis orthogonal on the sample grid
    ph = 2 * np.pi * k * np.arange(n) / n
    c = 2.0 / n * np.dot(x, np.exp(-1j * ph))
    return SpectrumLine(freq, float(abs(c)), float(np.angle(c)))


def complex_tone_of_samples(z: np.ndarray, dt: float, freq: float) -> complex:
    """Coefficient of ``exp(+j 2 pi freq t)`` in complex samples ``z``.

    ``freq`` may be negative; it must sit on the coherent grid.
    """
    z = np.asarray(z, dtype=complex)
    n = z.size
    cycles = freq * n * dt
    k = int(round(cycles))
    if abs(cycles - k) > COHERENCE_TOL:
        raise SpectralError(f"{freq} Hz is not coherent with a {n * dt} s window")
    if abs(k) >= n / 2:
        raise SpectralError(f"{freq} Hz is beyond Nyquist for dt={dt}")
    ph = 2 * np.pi * k * np.arange(n) / n
    return complex(np.dot(z, np.exp(-1j * ph)) / n)


def measure_tone(trace, probe: str, freq: float) -> SpectrumLine:
    """Tone at ``freq`` in one probe of a :class:`~npath_pwm.engine.SimTrace`."""
    if probe not in trace.samples:
        raise SpectralError(f"unknown probe {probe!r}; have {sorted(trace.samples)}")
    return tone_of_samples(trace.samples[probe], trace.dt, freq)


def lines_to_csv(lines: Iterable[SpectrumLine]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz", "amplitude", "phase_rad"])
    for ln in lines:
        w.writerow([repr(float(ln.freq)), f"{ln.amplitude:.17g}", f"{ln.phase:.17g}"])
    return buf.getvalue()


def rational_ratio(f: float, f_ref: float, max_den: int = 100000, rtol: float = 1e-12) -> Fraction:
    """``f / f_ref`` as a small fraction, or raise if none is close enough."""
    r = Fraction(f / f_ref).limit_denominator(max_den)
    if abs(float(r) * f_ref - f) > rtol * max(abs(f), abs(f_ref)):
        raise SpectralError(f"{f} / {f_ref} is not a rational with denominator <= {max_den}")
    return r
