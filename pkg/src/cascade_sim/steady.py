"""Analytic phasor-domain steady-state solver for the cascaded string.

Phase reference: the PCC voltage phase is 0, so the grid current sits at
-pf_angle and every voltage-controlled inverter at exactly the PF setpoint
from it. Inverter-1's phasor absorbs the line-impedance residual through
KVL; its phase is solved, not assumed."""
import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .signal import wrap_angle


class SteadyStateError(Exception):
    pass


class InfeasibleError(SteadyStateError):
    pass


@dataclass
class SteadySolution:
    i_g: float                 # A peak
    theta_ig: float            # rad
    v: np.ndarray              # per-inverter V peak
    theta: np.ndarray          # per-inverter rad
    p: np.ndarray              # W
    q: np.ndarray              # var
    p_pcc: float
    q_pcc: float
    pf_pcc: float
    violations: list = field(default_factory=list)

    @property
    def feasible(self):
        return not self.violations

    def phi(self):
        """Per-inverter PF angles (voltage phase minus current phase)."""
        return np.array([wrap_angle(th - self.theta_ig) for th in self.theta])

    def to_dict(self):
        return {
            "i_g_A": self.i_g,
            "theta_ig_rad": self.theta_ig,
            "v_V": list(self.v),
            "theta_rad": list(self.theta),
            "p_W": list(self.p),
            "q_var": list(self.q),
            "phi_rad": list(self.phi()),
            "p_pcc_W": self.p_pcc,
            "q_pcc_var": self.q_pcc,
            "pf_pcc": self.pf_pcc,
            "feasible": self.feasible,
            "violations": list(self.violations),
        }


def solve_steady(p_ref, pf_angle, v_g, omega, l_line, r_line,
                 i_max=None, v_max=None, tol=1e-10, max_iter=100):
    """Solve the steady operating point for per-inverter power commands.

    p_ref: per-inverter active power commands, W (index 0 = inverter-1).
    Returns a SteadySolution; raises on non-convergence or when the string
    voltage cannot close KVL.
    """
    p_ref = np.asarray(p_ref, dtype=float)
    n = p_ref.size
    if n < 2:
        raise ValueError("need at least 2 inverters")
    if np.any(p_ref < 0.0):
        raise ValueError("power commands must be >= 0")
    p_total = float(p_ref.sum())
    if p_total <= 0.0:
        raise ValueError("no power commanded")
    cphi = math.cos(pf_angle)
    if cphi <= 0.0:
        raise ValueError("cos(pf_angle) must be > 0")
    if v_g <= 0.0:
        raise ValueError("grid voltage must be > 0")

    # total power balance: sum(P) = 0.5*V_g*I*cos(phi*) + 0.5*R*I^2
    i_g = 2.0 * p_total / (v_g * cphi)
    for _ in range(max_iter):
        nxt = 2.0 * p_total / (v_g * cphi + r_line * i_g)
        if abs(nxt - i_g) <= tol * max(1.0, abs(i_g)):
            i_g = nxt
            break
        i_g = nxt
    else:
        raise SteadyStateError(
            "current fixed point did not converge; residual %g"
            % abs(2.0 * p_total / (v_g * cphi + r_line * i_g) - i_g))

    theta_ig = wrap_angle(-pf_angle)
    i_ph = i_g * cmath.exp(1j * theta_ig)

    v = np.zeros(n)
    theta = np.zeros(n)
    # voltage-controlled inverters sit exactly at the PF setpoint
    v[1:] = 2.0 * p_ref[1:] / (i_g * cphi)
    theta[1:] = 0.0
    # inverter-1 absorbs the KVL residual
    u1 = v_g + (r_line + 1j * omega * l_line) * i_ph - float(v[1:].sum())
    if u1.real <= 0.0:
        raise InfeasibleError(
            "string voltage insufficient: inverter-1 phasor real part "
            "%.3f V" % u1.real)
    v[0] = abs(u1)
    theta[0] = wrap_angle(cmath.phase(u1))

    s = 0.5 * v * np.exp(1j * theta) * np.conj(i_ph)  # per-inverter complex power
    p = s.real.copy()
    q = s.imag.copy()
    s_pcc = 0.5 * v_g * np.conj(i_ph)
    p_pcc = s_pcc.real
    q_pcc = s_pcc.imag
    pf_pcc = p_pcc / abs(s_pcc)

    sol = SteadySolution(i_g=i_g, theta_ig=theta_ig, v=v, theta=theta,
                         p=p, q=q, p_pcc=p_pcc, q_pcc=q_pcc, pf_pcc=pf_pcc)
    if i_max is not None or v_max is not None:
        sol.violations = check_feasibility(
            sol, i_max=i_max, v_max=v_max)
    return sol


def check_feasibility(sol, i_max=None, v_max=None):
    """List every limit breach with its margin; empty list means operable."""
    out = []
    if i_max is not None and sol.i_g > i_max:
        out.append({"quantity": "i_g", "value": sol.i_g, "limit": i_max,
                    "margin": sol.i_g - i_max})
    if v_max is not None:
        for k, vk in enumerate(sol.v):
            if vk > v_max:
                out.append({"quantity": "v_%d" % (k + 1), "value": float(vk),
                            "limit": v_max, "margin": float(vk - v_max)})
    return out
