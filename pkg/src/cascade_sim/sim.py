"""Fixed-step simulation engine: binds the plant and the controllers,
executes timed scenario events, records decimated traces and computes
summary metrics."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .control import CurrentController, VoltageController, lag_feedforward, \
    sogi_coeffs
from .plant import PlantParams, PlantState, SimulationFault, grid_voltage, \
    inverter1_terminal_voltage, track_current
from .signal import wrap_angle
from .steady import solve_steady

TWO_PI = 2.0 * math.pi


@dataclass
class SetPowerRef:
    inverter: int   # 1-based
    watts: float


@dataclass
class GridSagFactor:
    factor: float   # fraction of nominal amplitude


@dataclass
class PhasePerturb:
    inverter: int   # 1-based, must be >= 2
    radians: float


@dataclass
class Scenario:
    duration: float = 2.0
    dt: float = 1e-4                       # the 10 kHz control/sample rate
    p_ref: list = field(default_factory=lambda: [1500.0, 1500.0, 1500.0])
    pf_angle: float = 0.0
    grid_amplitude: float = 311.0          # V peak
    grid_freq: float = 50.0                # Hz
    grid_phase0: float = 0.0
    events: list = field(default_factory=list)  # (time, event) pairs
    init: str = "cold"                     # "cold" or "steady"

    @property
    def omega(self):
        return TWO_PI * self.grid_freq

    def validate(self, n):
        if self.duration <= 0.0 or self.dt <= 0.0:
            raise ValueError("scenario.duration/dt: must be > 0")
        if len(self.p_ref) != n:
            raise ValueError("scenario.p_ref: need %d entries, got %d"
                             % (n, len(self.p_ref)))
        period = 1.0 / self.grid_freq
        ratio = period / self.dt
        if abs(ratio - round(ratio)) > 1e-4 * ratio:
            raise ValueError(
                "scenario.dt: %g s does not divide the fundamental period "
                "%g s within 0.01%%" % (self.dt, period))
        if self.init not in ("cold", "steady"):
            raise ValueError("scenario.init: must be 'cold' or 'steady'")
        last = -math.inf
        for t_ev, ev in self.events:
            if not 0.0 <= t_ev <= self.duration:
                raise ValueError("scenario.events: time %g outside run" % t_ev)
            if t_ev < last:
                raise ValueError("scenario.events: not sorted by time")
            last = t_ev
            if isinstance(ev, (SetPowerRef, PhasePerturb)):
                lo = 1 if isinstance(ev, SetPowerRef) else 2
                if not lo <= ev.inverter <= n:
                    raise ValueError(
                        "scenario.events: inverter index %d out of range"
                        % ev.inverter)
            elif not isinstance(ev, GridSagFactor):
                raise ValueError("scenario.events: unknown event %r" % (ev,))


# trace channel layout: globals first, then per-inverter blocks
GLOBAL_CHANNELS = ["t_s", "i_g_A", "u_pcc_V", "I_g_cmd_A", "theta_p_rad"]
PER_INVERTER_CHANNELS = ["u_{i}_V", "V_{i}_V", "theta_{i}_rad",
                         "omega_{i}_rads", "P_{i}_W", "Q_{i}_var",
                         "phi_{i}_rad"]


def trace_header(n):
    cols = list(GLOBAL_CHANNELS)
    for i in range(1, n + 1):
        cols += [c.format(i=i) for c in PER_INVERTER_CHANNELS]
    return cols


@dataclass
class Trace:
    """Uniformly sampled run record (decimated) plus run diagnostics."""
    n: int
    dt: float                 # sample period of the stored series
    t: np.ndarray
    i_g: np.ndarray
    u_pcc: np.ndarray
    i_g_cmd: np.ndarray
    theta_p: np.ndarray
    u: np.ndarray             # (m, n) instantaneous terminal voltages
    v: np.ndarray             # (m, n) amplitude commands / estimates
    theta: np.ndarray
    omega: np.ndarray
    p: np.ndarray
    q: np.ndarray
    phi: np.ndarray
    max_kvl_residual: float = 0.0
    current_violations: int = 0
    voltage_violations: int = 0
    first_violation_step: int = -1

    def to_rows(self):
        m = self.t.size
        cols = [self.t, self.i_g, self.u_pcc, self.i_g_cmd, self.theta_p]
        for i in range(self.n):
            cols += [self.u[:, i], self.v[:, i], self.theta[:, i],
                     self.omega[:, i], self.p[:, i], self.q[:, i],
                     self.phi[:, i]]
        return np.column_stack(cols)

    def write_csv(self, fh):
        fh.write(",".join(trace_header(self.n)) + "\n")
        for row in self.to_rows():
            fh.write(",".join("%.9g" % x for x in row) + "\n")


def _event_arrays(scenario, n):
    steps, types, idxs, vals = [], [], [], []
    for t_ev, ev in scenario.events:
        steps.append(int(math.ceil(t_ev / scenario.dt - 1e-9)))
        if isinstance(ev, SetPowerRef):
            types.append(_kernels.EV_SET_POWER)
            idxs.append(ev.inverter - 1)
            vals.append(ev.watts)
        elif isinstance(ev, GridSagFactor):
            types.append(_kernels.EV_GRID_SAG)
            idxs.append(0)
            vals.append(ev.factor)
        else:
            types.append(_kernels.EV_PHASE_PERTURB)
            idxs.append(ev.inverter - 1)
            vals.append(ev.radians)
    return (np.asarray(steps, dtype=np.int64),
            np.asarray(types, dtype=np.int64),
            np.asarray(idxs, dtype=np.int64),
            np.asarray(vals, dtype=float))


def _prefill_estimator(buf, wc, ws, acc, meta, amp, phase, omega, dt,
                       t_next):
    n = buf.shape[0]
    m = np.arange(n)
    tm = t_next + (m - n) * dt
    buf[:] = amp * np.sin(omega * tm + phase)
    ws[:] = np.sin(omega * tm)
    wc[:] = np.cos(omega * tm)
    acc[0] = float(np.dot(buf, ws))
    acc[1] = float(np.dot(buf, wc))
    meta[0] = 0
    meta[1] = n


def run(scenario, params, gains, seed=0, noise_amplitude=0.0, decimation=10):
    """Execute a scenario; deterministic given identical inputs. The seed
    only drives optional measurement-noise injection (off by default).
    Raises SimulationFault (with the step index) if any state goes NaN."""
    params.validate(scenario.dt)
    scenario.validate(params.n)
    n = params.n
    omega = scenario.omega
    dt = scenario.dt
    n_steps = int(round(scenario.duration / dt))
    n_win = round(TWO_PI / (omega * dt))
    if n_win < 16:
        raise ValueError("estimator window too short; reduce dt")
    m_rec = (n_steps + decimation - 1) // decimation

    n_est = n + 1
    est_buf = np.zeros((n_est, n_win))
    est_wc = np.zeros((n_est, n_win))
    est_ws = np.zeros((n_est, n_win))
    est_acc = np.zeros((n_est, 2))
    est_meta = np.zeros((n_est, 2), dtype=np.int64)
    pll_state = np.zeros(5)
    cur_state = np.zeros(6)
    cur_state[3] = 1.0  # sag factor
    vc_state = np.zeros((n - 1, 4))
    vc_state[:, 3] = scenario.grid_amplitude / n
    vbias_ref = scenario.grid_amplitude  # V_g* reference for the amplitude bias

    if scenario.init == "steady":
        _init_steady(scenario, params, est_buf, est_wc, est_ws, est_acc,
                     est_meta, pll_state, cur_state, vc_state)

    if noise_amplitude > 0.0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(size=(n_steps, 3))
        i_nom = 2.0 * sum(scenario.p_ref) / scenario.grid_amplitude
        noise[:, 0] *= noise_amplitude * scenario.grid_amplitude
        noise[:, 1] *= noise_amplitude * scenario.grid_amplitude
        noise[:, 2] *= noise_amplitude * i_nom
    else:
        noise = np.zeros((0, 3))

    ev_step, ev_type, ev_idx, ev_val = _event_arrays(scenario, n)
    p_ref = np.asarray(scenario.p_ref, dtype=float).copy()

    out_t = np.zeros(m_rec)
    out_ig = np.zeros(m_rec)
    out_upcc = np.zeros(m_rec)
    out_igcmd = np.zeros(m_rec)
    out_thp = np.zeros(m_rec)
    out_u = np.zeros((m_rec, n))
    out_v = np.zeros((m_rec, n))
    out_th = np.zeros((m_rec, n))
    out_w = np.zeros((m_rec, n))
    out_p = np.zeros((m_rec, n))
    out_q = np.zeros((m_rec, n))
    out_phi = np.zeros((m_rec, n))
    diag = np.zeros(4)
    diag[3] = -1.0

    status = _kernels.run_loop(
        n_steps, dt, n, omega, scenario.grid_amplitude, scenario.grid_phase0,
        params.l_line, params.r_line, params.tau_i, params.i_max,
        params.v_max,
        vbias_ref, scenario.pf_angle, p_ref,
        gains.current_kp, gains.current_ki, gains.amplitude_kp,
        gains.amplitude_ki, gains.freq_kp, gains.freq_ki,
        gains.pll_kp, gains.pll_ki,
        *sogi_coeffs(omega, gains.pll_k, dt),
        omega * 0.9, omega * 1.1, gains.sync_current_min,
        ev_step, ev_type, ev_idx, ev_val, noise,
        est_buf, est_wc, est_ws, est_acc, est_meta,
        pll_state, cur_state, vc_state,
        decimation,
        out_t, out_ig, out_upcc, out_igcmd, out_thp,
        out_u, out_v, out_th, out_w, out_p, out_q, out_phi,
        diag)
    if status >= 0:
        raise SimulationFault(
            "non-finite state at step %d (t=%.6f s)" % (status, status * dt),
            step=int(status))

    return Trace(
        n=n, dt=dt * decimation, t=out_t, i_g=out_ig, u_pcc=out_upcc,
        i_g_cmd=out_igcmd, theta_p=out_thp, u=out_u, v=out_v, theta=out_th,
        omega=out_w, p=out_p, q=out_q, phi=out_phi,
        max_kvl_residual=float(diag[0]),
        current_violations=int(diag[1]),
        voltage_violations=int(diag[2]),
        first_violation_step=int(diag[3]))


def _init_steady(scenario, params, est_buf, est_wc, est_ws, est_acc,
                 est_meta, pll_state, cur_state, vc_state):
    """Preset every state to the analytic operating point so a zero-event
    run is a pure hold."""
    sol = solve_steady(scenario.p_ref, scenario.pf_angle,
                       scenario.grid_amplitude, scenario.omega,
                       params.l_line, params.r_line)
    omega = scenario.omega
    dt = scenario.dt
    ph0 = scenario.grid_phase0
    th_ig = sol.theta_ig + ph0
    # estimators: 0 = i_g, 1 = u_1 (one sample stale), 2+j = vc i_g copies
    _prefill_estimator(est_buf[0], est_wc[0], est_ws[0], est_acc[0],
                       est_meta[0], sol.i_g, th_ig, omega, dt, 0.0)
    _prefill_estimator(est_buf[1], est_wc[1], est_ws[1], est_acc[1],
                       est_meta[1], sol.v[0], sol.theta[0] + ph0, omega, dt,
                       -dt)
    for j in range(params.n - 1):
        _prefill_estimator(est_buf[2 + j], est_wc[2 + j], est_ws[2 + j],
                           est_acc[2 + j], est_meta[2 + j], sol.i_g, th_ig,
                           omega, dt, 0.0)
    # PLL locked at the grid phase; filter state one sample back (the
    # kernel propagates it before the phase detector reads it)
    amp = scenario.grid_amplitude
    pll_state[0] = amp * math.sin(ph0 - omega * dt)
    pll_state[1] = -amp * math.cos(ph0 - omega * dt)
    pll_state[2] = 0.0
    pll_state[3] = ph0
    pll_state[4] = amp * math.sin(ph0 - omega * dt)
    # inverter 1
    cur_state[0] = sol.i_g                      # power-PI integral (bias 0)
    cur_state[1] = sol.i_g * math.sin(th_ig)    # instantaneous current
    cur_state[2] = sol.v[0] * math.sin(sol.theta[0] + ph0 - omega * dt)
    cur_state[3] = 1.0
    cur_state[4] = float(est_buf.shape[1])      # ramp already complete
    cur_state[5] = sol.i_g
    # voltage controllers
    for j in range(params.n - 1):
        vc_state[j, 0] = sol.v[1 + j] - amp / params.n
        vc_state[j, 1] = 0.0
        vc_state[j, 2] = wrap_angle(ph0)        # theta_i = theta_p at steady
        vc_state[j, 3] = sol.v[1 + j]


def run_reference(scenario, params, gains, decimation=10):
    """Object-based reference loop mirroring the fused kernel step for
    step; slow, used to cross-check the kernel (cold start only)."""
    params.validate(scenario.dt)
    scenario.validate(params.n)
    if scenario.init != "cold":
        raise ValueError("run_reference supports cold start only")
    n = params.n
    omega = scenario.omega
    dt = scenario.dt
    n_steps = int(round(scenario.duration / dt))

    ctrl1 = CurrentController(scenario.p_ref[0], scenario.pf_angle, gains,
                              omega, dt, params.i_max,
                              lag_comp=lag_feedforward(omega, params.tau_i,
                                                       dt))
    vctrls = [VoltageController(i + 2, scenario.p_ref[i + 1],
                                scenario.pf_angle, scenario.grid_amplitude,
                                n, gains, omega, dt, params.v_max)
              for i in range(n - 1)]
    state = PlantState()
    u1_prev = 0.0
    sag = 1.0
    events = sorted(scenario.events, key=lambda p: p[0])
    ev_steps = [int(math.ceil(t_ev / dt - 1e-9)) for t_ev, _ in events]
    ev_ptr = 0

    rows = {k: [] for k in ("t", "i_g", "u_pcc", "i_g_cmd", "theta_p")}
    per = {k: [] for k in ("u", "v", "theta", "omega", "p", "q", "phi")}
    max_kvl = 0.0

    for k in range(n_steps):
        t = k * dt
        while ev_ptr < len(events) and ev_steps[ev_ptr] == k:
            ev = events[ev_ptr][1]
            if isinstance(ev, SetPowerRef):
                if ev.inverter == 1:
                    ctrl1.p_ref = ev.watts
                else:
                    vctrls[ev.inverter - 2].p_ref = ev.watts
            elif isinstance(ev, GridSagFactor):
                sag = ev.factor
            else:
                c = vctrls[ev.inverter - 2]
                c.theta = wrap_angle(c.theta + ev.radians)
            ev_ptr += 1

        u_pcc = grid_voltage(t, scenario.grid_amplitude * sag, omega,
                             scenario.grid_phase0)
        i_ref = ctrl1.step(u_pcc, state.i_g, u1_prev, dt)
        u_samples = [c.step(state.i_g, dt) for c in vctrls]
        sum_u = sum(u_samples)

        i_old = state.i_g
        di_dt = (i_ref - i_old) / params.tau_i
        u1 = inverter1_terminal_voltage(state, u_pcc, sum_u, di_dt, params)
        track_current(state, i_ref, dt, params)
        resid = abs(u1 + sum_u - u_pcc - params.l_line * di_dt
                    - params.r_line * i_old)
        max_kvl = max(max_kvl, resid)

        if k % decimation == 0:
            rows["t"].append(t)
            rows["i_g"].append(i_old)
            rows["u_pcc"].append(u_pcc)
            rows["i_g_cmd"].append(ctrl1.i_amp)
            rows["theta_p"].append(ctrl1.theta_p)
            # inverter-1 channels come from its own estimators
            va, vph = _estimate(ctrl1.est_u)
            ia, iph = _estimate(ctrl1.est_i)
            row_u = [u1] + u_samples
            row_v = [va] + [c.v_amp for c in vctrls]
            row_th = [wrap_angle(omega * t + vph)] \
                + [wrap_angle(c.theta - c.omega * dt) for c in vctrls]
            row_w = [ctrl1.pll.omega] + [c.omega for c in vctrls]
            row_p = [ctrl1.p_meas] + [c.p_meas for c in vctrls]
            row_q = [ctrl1.q_meas] + [c.q_meas for c in vctrls]
            row_phi = [wrap_angle(vph - iph)] + [c.phi for c in vctrls]
            per["u"].append(row_u)
            per["v"].append(row_v)
            per["theta"].append(row_th)
            per["omega"].append(row_w)
            per["p"].append(row_p)
            per["q"].append(row_q)
            per["phi"].append(row_phi)

        u1_prev = u1

    return Trace(
        n=n, dt=dt * decimation,
        t=np.array(rows["t"]), i_g=np.array(rows["i_g"]),
        u_pcc=np.array(rows["u_pcc"]), i_g_cmd=np.array(rows["i_g_cmd"]),
        theta_p=np.array(rows["theta_p"]),
        u=np.array(per["u"]), v=np.array(per["v"]),
        theta=np.array(per["theta"]), omega=np.array(per["omega"]),
        p=np.array(per["p"]), q=np.array(per["q"]),
        phi=np.array(per["phi"]),
        max_kvl_residual=max_kvl)


def _estimate(est):
    re = 2.0 * est._acc[0] / max(int(est._meta[1]), 1)
    im = 2.0 * est._acc[1] / max(int(est._meta[1]), 1)
    amp = math.hypot(re, im)
    ph = math.atan2(im, re) if amp >= 1e-12 else 0.0
    if ph <= -math.pi:
        ph = math.pi
    return amp, ph


def fundamental_phasor(x, t, omega):
    """Phasor of x over its whole (assumed integer-period) span: returns
    (amplitude, phase) of a*sin(omega*t + phase)."""
    s = np.sin(omega * t)
    c = np.cos(omega * t)
    re = 2.0 * np.dot(x, s) / x.size
    im = 2.0 * np.dot(x, c) / x.size
    return math.hypot(re, im), math.atan2(im, re)


@dataclass
class Summary:
    final_p: np.ndarray
    final_q: np.ndarray
    final_v: np.ndarray
    pf_pcc: float
    i_g_amplitude: float
    amplitude_ratios: np.ndarray
    phi_max_dev: float
    settling_p: list        # per event, seconds (None if never settles)
    settling_v: list
    current_violations: int
    voltage_violations: int
    window: tuple           # (t_start, t_end) of the final window

    def to_dict(self):
        return {
            "final_window_s": list(self.window),
            "P_W": list(self.final_p),
            "Q_var": list(self.final_q),
            "V_V": list(self.final_v),
            "pf_pcc": self.pf_pcc,
            "i_g_amplitude_A": self.i_g_amplitude,
            "amplitude_ratios": list(self.amplitude_ratios),
            "phi_max_dev_rad": self.phi_max_dev,
            "settling_p_s": self.settling_p,
            "settling_v_s": self.settling_v,
            "current_violations": self.current_violations,
            "voltage_violations": self.voltage_violations,
        }


def _settling_time(t, series, t_event, finals, band=0.02):
    """Last time any channel leaves the 2% band around its final mean,
    measured from the event; 0 if it never leaves after the event."""
    mask = t >= t_event
    ts = t[mask]
    worst = 0.0
    for col, ref in zip(series.T, finals):
        tol = band * max(abs(ref), 1e-9)
        out = np.abs(col[mask] - ref) > tol
        if out.any():
            idx = np.nonzero(out)[0][-1]
            if idx + 1 >= ts.size:
                return None  # never settles inside the trace
            worst = max(worst, ts[idx + 1] - t_event)
    return worst


def metrics(trace, scenario, window_periods=10):
    """Steady-window statistics and per-event settling times."""
    period = 1.0 / scenario.grid_freq
    m_win = int(round(window_periods * period / trace.dt))
    if m_win < int(round(2 * period / trace.dt)):
        raise ValueError("final window shorter than 2 fundamental periods")
    if m_win > trace.t.size:
        raise ValueError("trace shorter than the requested final window")
    sl = slice(trace.t.size - m_win, trace.t.size)
    omega = scenario.omega

    final_p = trace.p[sl].mean(axis=0)
    final_q = trace.q[sl].mean(axis=0)
    final_v = trace.v[sl].mean(axis=0)
    ua, uph = fundamental_phasor(trace.u_pcc[sl], trace.t[sl], omega)
    ia, iph = fundamental_phasor(trace.i_g[sl], trace.t[sl], omega)
    pf = math.cos(wrap_angle(uph - iph))
    # per-inverter circular mean of phi over the window, compared to the
    # commanded PF angle (ripple averages out; a bias does not)
    phi_mean = np.arctan2(np.sin(trace.phi[sl]).mean(axis=0),
                          np.cos(trace.phi[sl]).mean(axis=0))
    phi_dev = np.max(np.abs(_wrap_arr(phi_mean - scenario.pf_angle)))

    settling_p = []
    settling_v = []
    for t_ev, _ in scenario.events:
        settling_p.append(_settling_time(trace.t, trace.p, t_ev, final_p))
        settling_v.append(_settling_time(trace.t, trace.v, t_ev, final_v))

    ratios = final_v / final_v[0] if final_v[0] > 0 else final_v * 0.0
    return Summary(
        final_p=final_p, final_q=final_q, final_v=final_v, pf_pcc=pf,
        i_g_amplitude=ia, amplitude_ratios=ratios,
        phi_max_dev=float(phi_dev),
        settling_p=settling_p, settling_v=settling_v,
        current_violations=trace.current_violations,
        voltage_violations=trace.voltage_violations,
        window=(float(trace.t[sl][0]), float(trace.t[sl][-1])))


def _wrap_arr(a):
    r = np.mod(a, TWO_PI)
    r[r > math.pi] -= TWO_PI
    return r
