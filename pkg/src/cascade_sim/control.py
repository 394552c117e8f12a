"""The two local controller types: inverter-1's current-reference generator
(power PI + PCC-phase PLL) and inverter-i's amplitude/frequency controller.
Each consumes only locally available signals."""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .signal import FundamentalEstimator, Phasor, PiBlock, wrap_angle

OMEGA_BAND = 0.1  # frequency command saturated at +/-10% of nominal


@dataclass
class Gains:
    """Controller gain set. Power errors are expressed in kW inside the PI
    blocks. Tuned values live in data/defaults.json, not here."""
    current_kp: float    # A/kW
    current_ki: float    # A/(kW*s)
    amplitude_kp: float  # V/kW
    amplitude_ki: float  # V/(kW*s)
    freq_kp: float       # (rad/s)/rad
    freq_ki: float       # (rad/s)/(rad*s)
    pll_k: float         # quadrature generator damping
    pll_kp: float
    pll_ki: float
    sync_current_min: float  # A peak below which the phi-omega loop holds


def sogi_coeffs(omega0, k_sogi, dt):
    """Trapezoidal update coefficients for the quadrature generator
    x' = k*w*(u - x) - w*y, y' = w*x. Returns (m11, m12, m21, m22, b1, b2)
    for [x, y] <- M [x, y] + [b1, b2]*(u + u_prev). The design frequency is
    prewarped so the discrete resonance lands exactly on omega0."""
    ww = 2.0 / dt * math.tan(0.5 * omega0 * dt)
    a = np.array([[-k_sogi * ww, -ww], [ww, 0.0]])
    h = 0.5 * dt
    pinv = np.linalg.inv(np.eye(2) - h * a)
    m = pinv @ (np.eye(2) + h * a)
    bd = pinv @ np.array([h * k_sogi * ww, 0.0])
    return m[0, 0], m[0, 1], m[1, 0], m[1, 1], bd[0], bd[1]


def lag_feedforward(omega0, tau_i, dt):
    """Feedforward pair (c_sin, c_cos): commanding
    I*(c_sin*sin(th) + c_cos*cos(th)) through the sampled first-order
    tracking lag puts the actual current exactly on I*sin(th)."""
    a = dt / tau_i
    return (1.0 + (math.cos(omega0 * dt) - 1.0) / a,
            math.sin(omega0 * dt) / a)


def measure_pq(v, i):
    """Average P (W) and Q (var) from peak-amplitude phasors:
    P = 0.5*V*I*cos(dphi), Q = 0.5*V*I*sin(dphi), dphi = v.phase - i.phase."""
    d = v.phase - i.phase
    s = 0.5 * v.amplitude * i.amplitude
    return s * math.cos(d), s * math.sin(d)


class Pll:
    """Single-phase PLL: fixed-frequency quadrature generator plus an
    amplitude-normalized phase detector driving a PI with bias omega0."""

    def __init__(self, omega0, gains, dt):
        self.omega0 = float(omega0)
        self.kp = gains.pll_kp
        self.ki = gains.pll_ki
        self.coeffs = sogi_coeffs(omega0, gains.pll_k, dt)
        self.x = 0.0
        self.y = 0.0
        self.u_prev = 0.0
        self.integ = 0.0
        self.theta = 0.0
        self.omega = float(omega0)

    def step(self, u_sample, dt):
        """Advance one sample; returns the phase estimate aligned with the
        instant of u_sample (the state is then advanced for the next one)."""
        theta_now = self.theta
        self.x, self.y, self.integ, self.theta, self.omega = \
            _kernels.sogi_pll_step(
                self.x, self.y, self.u_prev, self.integ, self.theta,
                float(u_sample), self.omega0, self.kp, self.ki, float(dt),
                *self.coeffs)
        self.u_prev = float(u_sample)
        return theta_now

    def lock_to(self, amplitude, theta, dt):
        """Preset the loop to a locked state on a clean sinusoid whose
        current instantaneous phase is theta (i.e. the phase of the next
        sample passed to step). The filter state sits one sample back, as
        step propagates it before the phase detector reads it."""
        prev = theta - self.omega0 * dt
        self.x = amplitude * math.sin(prev)
        self.y = -amplitude * math.cos(prev)
        self.u_prev = amplitude * math.sin(prev)
        self.integ = 0.0
        self.theta = wrap_angle(theta)
        self.omega = self.omega0


class CurrentController:
    """Inverter-1: tracks the PCC phase, measures its own output power from
    local phasors and commands the string current amplitude."""

    def __init__(self, p_ref, pf_angle, gains, omega0, dt, i_max,
                 lag_comp=(1.0, 0.0)):
        self.p_ref = float(p_ref)
        self.pf_angle = float(pf_angle)
        self.omega0 = float(omega0)
        self.lag_comp = tuple(lag_comp)  # (c_sin, c_cos), see lag_feedforward
        self.pll = Pll(omega0, gains, dt)
        self.power_pi = PiBlock(gains.current_kp, gains.current_ki,
                                out_min=0.0, out_max=i_max)
        self.est_i = FundamentalEstimator(omega0, dt)
        self.est_u = FundamentalEstimator(omega0, dt)
        self.p_meas = 0.0
        self.q_meas = 0.0
        self.i_amp = 0.0
        self.theta_p = 0.0
        self.t = 0.0  # local sample clock, advanced by dt per step
        self._ramp_steps = 0

    def step(self, u_pcc, i_g, u_1, dt):
        """One control step; u_1 is the terminal voltage of the previous
        step (it is only known after the string closes KVL). Returns the
        instantaneous current-reference sample."""
        t = self.t
        self.t = t + dt
        self.theta_p = self.pll.step(u_pcc, dt)
        ph_i = self.est_i.push(i_g, t)
        ph_u = self.est_u.push(u_1, t - dt)
        if not (self.est_i.warmed and self.est_u.warmed):
            self.i_amp = 0.0
            return 0.0
        self.p_meas, self.q_meas = measure_pq(ph_u, ph_i)
        self.i_amp = self.power_pi.step((self.p_ref - self.p_meas) * 1e-3, dt)
        self._ramp_steps += 1
        ramp = min(self._ramp_steps / self.est_i.window, 1.0)
        th = self.theta_p - self.pf_angle
        return ramp * self.i_amp * (self.lag_comp[0] * math.sin(th)
                                    + self.lag_comp[1] * math.cos(th))


class VoltageController:
    """Inverter-i (i >= 2): P-V amplitude loop biased at V_g*/n plus a
    PF-angle frequency loop biased at nominal; reads only the shared grid
    current and its own references."""

    def __init__(self, index, p_ref, pf_angle, v_nom, n, gains, omega0, dt,
                 v_max):
        self.index = index
        self.p_ref = float(p_ref)
        self.pf_angle = float(pf_angle)
        self.omega0 = float(omega0)
        self.sync_min = gains.sync_current_min
        self.amp_pi = PiBlock(gains.amplitude_kp, gains.amplitude_ki,
                              out_min=0.0, out_max=v_max, bias=v_nom / n)
        self.freq_pi = PiBlock(gains.freq_kp, gains.freq_ki,
                               out_min=omega0 * (1.0 - OMEGA_BAND),
                               out_max=omega0 * (1.0 + OMEGA_BAND),
                               bias=omega0)
        self.est_i = FundamentalEstimator(omega0, dt)
        self.theta = 0.0
        self.v_amp = self.amp_pi.bias
        self.omega = float(omega0)
        self.phi = float(pf_angle)
        self.p_meas = 0.0
        self.q_meas = 0.0
        self.t = 0.0  # local sample clock, advanced by dt per step

    def step(self, i_g, dt):
        """One control step on the shared current sample; returns the
        instantaneous terminal-voltage sample."""
        t = self.t
        self.t = t + dt
        ph_i = self.est_i.push(i_g, t)
        theta_now = self.theta
        if self.est_i.warmed and ph_i.amplitude >= self.sync_min:
            # ph_i.phase is the offset of sin(w*t + .); the instantaneous
            # current phase is w*t + offset
            self.phi = wrap_angle(theta_now - self.omega0 * t - ph_i.phase)
            self.p_meas = 0.5 * self.v_amp * ph_i.amplitude * math.cos(self.phi)
            self.q_meas = 0.5 * self.v_amp * ph_i.amplitude * math.sin(self.phi)
            self.v_amp = self.amp_pi.step((self.p_ref - self.p_meas) * 1e-3, dt)
            self.omega = self.freq_pi.step(self.pf_angle - self.phi, dt)
        else:
            self.phi = self.pf_angle
            self.p_meas = 0.0
            self.q_meas = 0.0
            self.v_amp = self.amp_pi.bias
            self.omega = self.omega0
        out = self.v_amp * math.sin(theta_now)
        self.theta = wrap_angle(theta_now + self.omega * dt)
        return out
