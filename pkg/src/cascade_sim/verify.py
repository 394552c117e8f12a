"""Cross-check a time-domain run against the analytic steady-state solver:
the final trace window must land on the post-event operating point."""
import math
from dataclasses import dataclass

import numpy as np

from . import sim
from .sim import GridSagFactor, SetPowerRef
from .signal import wrap_angle
from .steady import solve_steady

TOL_P = 0.01       # relative, per-inverter active power
TOL_V = 0.02       # relative, per-inverter voltage amplitude
TOL_PF = 0.01      # absolute, PCC power factor
TOL_PHI = 0.02     # rad, PF-angle alignment


@dataclass
class VerifyResult:
    ok: bool
    checks: list      # dicts: quantity, value, reference, error, tol, ok

    def worst(self):
        bad = [c for c in self.checks if not c["ok"]]
        if not bad:
            return None
        return max(bad, key=lambda c: c["error"] / c["tol"])


def post_event_reference(config):
    """Steady solution for the reference set in force at the end of the
    scenario (after all SetPowerRef / GridSagFactor events)."""
    sc = config.scenario
    p_ref = list(sc.p_ref)
    sag = 1.0
    for _, ev in sc.events:
        if isinstance(ev, SetPowerRef):
            p_ref[ev.inverter - 1] = ev.watts
        elif isinstance(ev, GridSagFactor):
            sag = ev.factor
    return solve_steady(p_ref, sc.pf_angle, sc.grid_amplitude * sag,
                        sc.omega, config.plant.l_line, config.plant.r_line,
                        i_max=config.plant.i_max, v_max=config.plant.v_max)


def verify(config):
    """Run the scenario and compare final-window means with solve_steady.

    Returns (VerifyResult, Summary, SteadySolution)."""
    sol = post_event_reference(config)
    trace = sim.run(config.scenario, config.plant, config.gains,
                    seed=config.noise_seed,
                    noise_amplitude=config.noise_amplitude,
                    decimation=config.decimation)
    summary = sim.metrics(trace, config.scenario)

    checks = []

    def add(name, value, ref, err, tol):
        checks.append({"quantity": name, "value": float(value),
                       "reference": float(ref), "error": float(err),
                       "tol": float(tol), "ok": bool(err <= tol)})

    for i in range(config.plant.n):
        ref = sol.p[i]
        err = abs(summary.final_p[i] - ref) / max(abs(ref), 1e-9)
        add("P_%d" % (i + 1), summary.final_p[i], ref, err, TOL_P)
        refv = sol.v[i]
        errv = abs(summary.final_v[i] - refv) / max(abs(refv), 1e-9)
        add("V_%d" % (i + 1), summary.final_v[i], refv, errv, TOL_V)
    add("pf_pcc", summary.pf_pcc, sol.pf_pcc,
        abs(summary.pf_pcc - sol.pf_pcc), TOL_PF)
    phi_ref = sol.phi()
    trace_phi_mean = _final_phi_means(trace, config)
    for i in range(config.plant.n):
        err = abs(wrap_angle(trace_phi_mean[i] - phi_ref[i]))
        add("phi_%d" % (i + 1), trace_phi_mean[i], phi_ref[i], err, TOL_PHI)

    ok = all(c["ok"] for c in checks)
    return VerifyResult(ok=ok, checks=checks), summary, sol


def _final_phi_means(trace, config, window_periods=10):
    period = 1.0 / config.scenario.grid_freq
    m_win = int(round(window_periods * period / trace.dt))
    sl = slice(trace.t.size - m_win, trace.t.size)
    # mean on the circle, robust to wrap
    z = np.exp(1j * trace.phi[sl])
    return np.angle(z.mean(axis=0))
