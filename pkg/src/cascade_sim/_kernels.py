"""Hot numerical inner functions.

Everything here is written in scalar/array style so numba can compile it.
Set CASCADE_SIM_BACKEND=numpy to skip JIT compilation and run the very same
functions as plain Python/numpy (debugging aid and benchmark baseline).
"""
import math
import os

import numpy as np

TWO_PI = 2.0 * math.pi

BACKEND = os.environ.get("CASCADE_SIM_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise RuntimeError(
        "CASCADE_SIM_BACKEND must be 'numba' or 'numpy', got %r" % BACKEND
    )

if BACKEND == "numba":
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"


def jit(fn):
    if BACKEND == "numba":
        return njit(cache=True)(fn)
    return fn


@jit
def wrap_angle(theta):
    # map to (-pi, pi], boundary assigned to +pi
    r = theta % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


@jit
def pi_step(integral, kp, ki, bias, lo, hi, err, dt):
    """One forward-Euler PI update with clamping anti-windup.

    Returns (output, new_integral). The integral is frozen whenever the
    candidate output is saturated and the increment would push it further
    out of range.
    """
    du = ki * err * dt
    integral = integral + du
    out = bias + kp * err + integral
    if out > hi:
        if du > 0.0:
            # absorb only the overflow so the integral parks at the rail
            back = out - hi
            if back > du:
                back = du
            integral -= back
        out = hi
    elif out < lo:
        if du < 0.0:
            back = out - lo
            if back < du:
                back = du
            integral -= back
        out = lo
    return out, integral


@jit
def sogi_pll_step(x, y, u_prev, integ, theta, u, omega0, kp, ki, dt,
                  m11, m12, m21, m22, b1, b2):
    """One step of the quadrature-generator PLL.

    The resonant filter tuned at omega0 produces x (in phase with the
    fundamental of u) and y (lagging x by 90 deg); it is advanced with the
    trapezoidal update (m**, b*) so x carries no phase bias at resonance.
    The phase detector is amplitude-normalized so voltage sags do not
    disturb the loop. Returns (x, y, integ, theta, omega_pll).
    """
    xn = m11 * x + m12 * y + b1 * (u + u_prev)
    yn = m21 * x + m22 * y + b2 * (u + u_prev)
    x = xn
    y = yn
    amp = math.hypot(x, y)
    if amp < 1e-9:
        e = 0.0
    else:
        # x = A sin(th_in), y = -A cos(th_in)  ->  e = sin(th_in - theta)
        e = (x * math.cos(theta) + y * math.sin(theta)) / amp
    integ = integ + ki * e * dt
    omega = omega0 + kp * e + integ
    theta = wrap_angle(theta + omega * dt)
    return x, y, integ, theta, omega


@jit
def est_push(buf, wc, ws, acc, meta, x, t, omega):
    """Push one sample into a one-period sliding correlation estimator.

    buf/wc/ws are ring buffers of samples and their sin/cos weights at the
    insertion instant; acc = [sum(x*sin), sum(x*cos)]; meta = [head, count].
    Returns (amplitude, phase) of the trailing-window fundamental, phase
    referenced to sin(omega*t) on the global clock.
    """
    n = buf.shape[0]
    head = meta[0]
    count = meta[1]
    s = math.sin(omega * t)
    c = math.cos(omega * t)
    if count >= n:
        acc[0] -= buf[head] * ws[head]
        acc[1] -= buf[head] * wc[head]
    else:
        count += 1
        meta[1] = count
    buf[head] = x
    ws[head] = s
    wc[head] = c
    acc[0] += x * s
    acc[1] += x * c
    meta[0] = (head + 1) % n
    re = 2.0 * acc[0] / count  # a*cos(psi)
    im = 2.0 * acc[1] / count  # a*sin(psi)
    amp = math.hypot(re, im)
    if amp < 1e-12:
        ph = 0.0
    else:
        ph = math.atan2(im, re)
        if ph <= -math.pi:
            ph = math.pi
    return amp, ph


# event type codes shared with sim.py
EV_SET_POWER = 0
EV_GRID_SAG = 1
EV_PHASE_PERTURB = 2


@jit
def run_loop(
    n_steps, dt, n_inv, omega, vg_amp0, grid_phase0,
    l_line, r_line, tau_i, i_max, v_max,
    vg_ref, pf_ref, p_ref,
    kp_cur, ki_cur, kp_amp, ki_amp, kp_frq, ki_frq,
    pll_kp, pll_ki, sg11, sg12, sg21, sg22, sgb1, sgb2,
    w_lo, w_hi, i_sync_min,
    ev_step, ev_type, ev_idx, ev_val,
    noise,
    est_buf, est_wc, est_ws, est_acc, est_meta,
    pll_state, cur_state, vc_state,
    decim,
    out_t, out_ig, out_upcc, out_igcmd, out_thp,
    out_u, out_v, out_th, out_w, out_p, out_q, out_phi,
    diag,
):
    """Fused fixed-step simulation loop.

    Estimator rows: 0 = inverter-1 grid current, 1 = inverter-1 terminal
    voltage, 2+j = voltage controller j's grid current.
    pll_state = [x, y, PI integral, theta, previous input sample];
    cur_state = [power-PI integral, i_g, u1_prev, sag factor, warm step
    counter, last I_g command]; vc_state rows = [amp integral, freq
    integral, theta_i, V_i].
    diag = [max KVL residual, i_g violations, u_1 violations, first
    violation step (-1 if none)].
    Returns -1 on success, else the step index where a NaN appeared.
    """
    n_win = est_buf.shape[1]
    vbias = vg_ref / n_inv
    # discrete-exact feedforward for the first-order tracking lag:
    # commanding ff_s*sin + ff_c*cos puts the sampled current on sin exactly
    a_lag = dt / tau_i
    ff_s = 1.0 + (math.cos(omega * dt) - 1.0) / a_lag
    ff_c = math.sin(omega * dt) / a_lag
    have_noise = noise.shape[0] > 0
    n_vc = n_inv - 1

    integ_cur = cur_state[0]
    i_g = cur_state[1]
    u1_prev = cur_state[2]
    sag = cur_state[3]
    warm_steps = cur_state[4]
    ig_cmd = cur_state[5]

    tmp_u = np.zeros(n_vc)
    tmp_v = np.zeros(n_vc)
    tmp_th = np.zeros(n_vc)
    tmp_w = np.zeros(n_vc)
    tmp_p = np.zeros(n_vc)
    tmp_q = np.zeros(n_vc)
    tmp_phi = np.zeros(n_vc)

    ev_ptr = 0
    n_ev = ev_step.shape[0]
    max_kvl = diag[0]
    viol_i = diag[1]
    viol_v = diag[2]
    first_viol = diag[3]

    for k in range(n_steps):
        t = k * dt
        while ev_ptr < n_ev and ev_step[ev_ptr] == k:
            typ = ev_type[ev_ptr]
            if typ == EV_SET_POWER:
                p_ref[ev_idx[ev_ptr]] = ev_val[ev_ptr]
            elif typ == EV_GRID_SAG:
                sag = ev_val[ev_ptr]
            else:
                j = ev_idx[ev_ptr] - 1
                vc_state[j, 2] = wrap_angle(vc_state[j, 2] + ev_val[ev_ptr])
            ev_ptr += 1

        upcc = vg_amp0 * sag * math.sin(omega * t + grid_phase0)
        if have_noise:
            upcc_m = upcc + noise[k, 0]
            u1_m = u1_prev + noise[k, 1]
            ig_m = i_g + noise[k, 2]
        else:
            upcc_m = upcc
            u1_m = u1_prev
            ig_m = i_g

        # inverter 1: PLL + power loop -> current reference
        thp = pll_state[3]  # phase state aligned with the current sample
        px, py, pinteg, thp_next, wpll = sogi_pll_step(
            pll_state[0], pll_state[1], pll_state[4], pll_state[2],
            pll_state[3], upcc_m, omega, pll_kp, pll_ki, dt,
            sg11, sg12, sg21, sg22, sgb1, sgb2)
        pll_state[0] = px
        pll_state[1] = py
        pll_state[2] = pinteg
        pll_state[3] = thp_next
        pll_state[4] = upcc_m

        ia, iph = est_push(est_buf[0], est_wc[0], est_ws[0],
                           est_acc[0], est_meta[0], ig_m, t, omega)
        va, vph = est_push(est_buf[1], est_wc[1], est_ws[1],
                           est_acc[1], est_meta[1], u1_m, t - dt, omega)
        if est_meta[0, 1] >= n_win and est_meta[1, 1] >= n_win:
            p1 = 0.5 * va * ia * math.cos(vph - iph)
            q1 = 0.5 * va * ia * math.sin(vph - iph)
            ig_cmd, integ_cur = pi_step(
                integ_cur, kp_cur, ki_cur, 0.0, 0.0, i_max,
                (p_ref[0] - p1) * 1e-3, dt)
            warm_steps += 1.0
            ramp = warm_steps / n_win
            if ramp > 1.0:
                ramp = 1.0
            th_cmd = thp - pf_ref
            i_ref = ramp * ig_cmd * (ff_s * math.sin(th_cmd)
                                     + ff_c * math.cos(th_cmd))
        else:
            p1 = 0.0
            q1 = 0.0
            ig_cmd = 0.0
            i_ref = 0.0

        # voltage controllers
        sum_u = 0.0
        for j in range(n_vc):
            ja, jph = est_push(est_buf[2 + j], est_wc[2 + j], est_ws[2 + j],
                               est_acc[2 + j], est_meta[2 + j], ig_m, t, omega)
            th_j = vc_state[j, 2]
            if est_meta[2 + j, 1] >= n_win and ja >= i_sync_min:
                # jph is the offset of sin(omega*t + .); the instantaneous
                # current phase is omega*t + jph
                phi = wrap_angle(th_j - omega * t - jph)
                pj = 0.5 * vc_state[j, 3] * ja * math.cos(phi)
                qj = 0.5 * vc_state[j, 3] * ja * math.sin(phi)
                vj, vc_state[j, 0] = pi_step(
                    vc_state[j, 0], kp_amp, ki_amp, vbias, 0.0, v_max,
                    (p_ref[1 + j] - pj) * 1e-3, dt)
                wj, vc_state[j, 1] = pi_step(
                    vc_state[j, 1], kp_frq, ki_frq, omega, w_lo, w_hi,
                    pf_ref - phi, dt)
            else:
                phi = pf_ref
                pj = 0.0
                qj = 0.0
                vj = vbias
                wj = omega
            vc_state[j, 3] = vj
            uj = vj * math.sin(th_j)
            sum_u += uj
            vc_state[j, 2] = wrap_angle(th_j + wj * dt)
            tmp_u[j] = uj
            tmp_v[j] = vj
            tmp_th[j] = th_j
            tmp_w[j] = wj
            tmp_p[j] = pj
            tmp_q[j] = qj
            tmp_phi[j] = phi

        # plant: prescribed current with tracking lag; inverter 1 closes KVL
        di = (i_ref - i_g) / tau_i
        i_g_new = i_g + di * dt
        u1 = upcc + l_line * di + r_line * i_g - sum_u
        resid = abs(u1 + sum_u - upcc - l_line * di - r_line * i_g)
        if resid > max_kvl:
            max_kvl = resid
        breach = False
        if abs(i_g_new) > i_max:
            viol_i += 1.0
            breach = True
        if abs(u1) > v_max:
            viol_v += 1.0
            breach = True
        if breach and first_viol < 0.0:
            first_viol = float(k)
        if not (math.isfinite(i_g_new) and math.isfinite(u1)
                and math.isfinite(thp)):
            diag[0] = max_kvl
            diag[1] = viol_i
            diag[2] = viol_v
            diag[3] = first_viol
            return k

        if k % decim == 0:
            r = k // decim
            out_t[r] = t
            out_ig[r] = i_g
            out_upcc[r] = upcc
            out_igcmd[r] = ig_cmd
            out_thp[r] = thp
            out_u[r, 0] = u1
            out_v[r, 0] = va
            out_th[r, 0] = wrap_angle(omega * t + vph)
            out_w[r, 0] = wpll
            out_p[r, 0] = p1
            out_q[r, 0] = q1
            out_phi[r, 0] = wrap_angle(vph - iph)
            for j in range(n_vc):
                out_u[r, 1 + j] = tmp_u[j]
                out_v[r, 1 + j] = tmp_v[j]
                out_th[r, 1 + j] = tmp_th[j]
                out_w[r, 1 + j] = tmp_w[j]
                out_p[r, 1 + j] = tmp_p[j]
                out_q[r, 1 + j] = tmp_q[j]
                out_phi[r, 1 + j] = tmp_phi[j]

        i_g = i_g_new
        u1_prev = u1

    cur_state[0] = integ_cur
    cur_state[1] = i_g
    cur_state[2] = u1_prev
    cur_state[3] = sag
    cur_state[4] = warm_steps
    cur_state[5] = ig_cmd
    diag[0] = max_kvl
    diag[1] = viol_i
    diag[2] = viol_v
    diag[3] = first_viol
    return -1
