"""Reusable numerical primitives: angle wrapping, discrete PI blocks and
fundamental-component phasor estimation from uniformly sampled waveforms."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle to (-pi, pi]; the boundary maps to +pi."""
    if not math.isfinite(theta):
        raise ValueError("wrap_angle: non-finite input")
    return _kernels.wrap_angle(float(theta))


@dataclass
class Phasor:
    """Amplitude (peak) and phase of a fundamental-frequency sinusoid,
    a*sin(w*t + phase). Amplitude is kept non-negative and the phase
    wrapped to (-pi, pi]."""
    amplitude: float
    phase: float

    def __post_init__(self):
        if self.amplitude < 0.0:
            self.amplitude = -self.amplitude
            self.phase = self.phase + math.pi
        self.phase = wrap_angle(self.phase)


@dataclass
class PiBlock:
    """Discrete PI controller with output saturation and clamping
    anti-windup; forward-Euler integration at the caller's step size."""
    kp: float
    ki: float
    out_min: float = -math.inf
    out_max: float = math.inf
    bias: float = 0.0
    integral: float = 0.0

    def step(self, error, dt):
        if dt <= 0.0:
            raise ValueError("PiBlock.step: dt must be > 0")
        if not math.isfinite(error):
            raise ValueError("PiBlock.step: non-finite error")
        out, self.integral = _kernels.pi_step(
            self.integral, self.kp, self.ki, self.bias,
            self.out_min, self.out_max, float(error), float(dt))
        return out

    def reset(self, integral=0.0):
        self.integral = integral


class FundamentalEstimator:
    """Single-bin sliding correlation over exactly one nominal fundamental
    period. Phase is referenced to sin(omega0*t) on the global clock, so
    estimates from different estimators are directly comparable."""

    def __init__(self, omega0, dt):
        if omega0 <= 0.0 or dt <= 0.0:
            raise ValueError("omega0 and dt must be > 0")
        n = round(TWO_PI / (omega0 * dt))
        if n < 16:
            raise ValueError(
                "window of %d samples is too short (need >= 16); "
                "reduce dt or omega0" % n)
        self.omega0 = float(omega0)
        self.dt = float(dt)
        self.window = n
        self._buf = np.zeros(n)
        self._wc = np.zeros(n)
        self._ws = np.zeros(n)
        self._acc = np.zeros(2)
        self._meta = np.zeros(2, dtype=np.int64)

    @property
    def warmed(self):
        return int(self._meta[1]) >= self.window

    def push(self, sample, t):
        """Add one sample taken at time t; returns the current Phasor
        estimate (best effort while still warming up, see `warmed`)."""
        if not math.isfinite(sample):
            raise ValueError("FundamentalEstimator.push: non-finite sample")
        amp, ph = _kernels.est_push(
            self._buf, self._wc, self._ws, self._acc, self._meta,
            float(sample), float(t), self.omega0)
        return Phasor(amp, ph)

    def preload(self, phasor, t_next=0.0):
        """Fill the window as if a*sin(omega0*t + phase) had been pushed for
        one full period ending just before t_next."""
        n = self.window
        for m in range(n):
            tm = t_next + (m - n) * self.dt
            self._buf[m] = phasor.amplitude * math.sin(
                self.omega0 * tm + phasor.phase)
            self._ws[m] = math.sin(self.omega0 * tm)
            self._wc[m] = math.cos(self.omega0 * tm)
        self._acc[0] = float(np.dot(self._buf, self._ws))
        self._acc[1] = float(np.dot(self._buf, self._wc))
        self._meta[0] = 0
        self._meta[1] = n
