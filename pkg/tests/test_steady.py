"""Analytic solver invariants, including the brute-force phasor-sweep
oracle."""
import cmath
import math

import numpy as np
import pytest

from cascade_sim import InfeasibleError, solve_steady, wrap_angle

OMEGA = 100.0 * math.pi


def test_power_identities():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        p = rng.uniform(200.0, 2000.0, n)
        phi = float(rng.uniform(0.0, 0.4))
        sol = solve_steady(p, phi, 311.0, OMEGA, 0.3e-3, 0.01)
        # P_i = 0.5 * V_i * I_g * cos(theta_i - theta_ig)
        for i in range(n):
            expect = 0.5 * sol.v[i] * sol.i_g * math.cos(
                sol.theta[i] - sol.theta_ig)
            assert sol.p[i] == pytest.approx(expect, rel=1e-9)
            assert sol.p[i] == pytest.approx(float(p[i]), rel=1e-9)
        # P ratios equal V*cos(phi) ratios
        w = sol.v * np.cos(sol.phi())
        np.testing.assert_allclose(sol.p / sol.p[0], w / w[0], rtol=1e-9)
        # conservation: sum P = P_pcc + 0.5*R*I^2
        assert sol.p.sum() == pytest.approx(
            sol.p_pcc + 0.5 * 0.01 * sol.i_g ** 2, rel=1e-9)


def test_scaling_at_zero_impedance():
    p = np.array([900.0, 700.0, 400.0])
    base = solve_steady(p, 0.1, 311.0, OMEGA, 1e-9, 0.0)
    for alpha in (0.5, 2.0, 3.7):
        scaled = solve_steady(alpha * p, 0.1, 311.0, OMEGA, 1e-9, 0.0)
        assert scaled.i_g == pytest.approx(alpha * base.i_g, rel=1e-9)
        np.testing.assert_allclose(scaled.v, base.v, rtol=1e-6)


def test_permutation_equivariance():
    p = [1500.0, 1300.0, 1100.0, 700.0]
    a = solve_steady(p, 0.0, 311.0, OMEGA, 1e-9, 0.0)
    p2 = [p[0], p[3], p[1], p[2]]
    b = solve_steady(p2, 0.0, 311.0, OMEGA, 1e-9, 0.0)
    assert b.i_g == pytest.approx(a.i_g, rel=1e-12)
    assert b.v[0] == pytest.approx(a.v[0], rel=1e-9)
    np.testing.assert_allclose(b.v[1:], [a.v[3], a.v[1], a.v[2]],
                               rtol=1e-12)


def _brute_force(p, phi, v_g, omega, l, r):
    """Dense grid search over (I_g, theta_1) minimizing the KVL residual."""
    cphi = math.cos(phi)
    i0 = 2.0 * sum(p) / (v_g * cphi)
    best = (math.inf, None, None)
    i_grid = np.linspace(0.9 * i0, 1.1 * i0, 241)
    th_grid = np.linspace(-0.3, 0.3, 241)
    for _ in range(4):   # progressive refinement
        ii, tt = np.meshgrid(i_grid, th_grid, indexing="ij")
        v_others = 2.0 * np.array(p[1:])[:, None, None] / (ii * cphi)
        # inverter-1 amplitude from its own power at its trial angle
        v1 = 2.0 * p[0] / (ii * np.cos(tt + phi))
        lhs = v1 * np.exp(1j * tt) + v_others.sum(axis=0)
        rhs = v_g + (r + 1j * omega * l) * ii * cmath.exp(-1j * phi)
        resid = np.abs(lhs - rhs)
        k = np.unravel_index(np.argmin(resid), resid.shape)
        best = (resid[k], ii[k], tt[k])
        di = i_grid[1] - i_grid[0]
        dth = th_grid[1] - th_grid[0]
        i_grid = np.linspace(ii[k] - 2 * di, ii[k] + 2 * di, 41)
        th_grid = np.linspace(tt[k] - 2 * dth, tt[k] + 2 * dth, 41)
    return best[1], best[2]


def test_brute_force_oracle():
    rng = np.random.default_rng(12)
    for _ in range(5):
        p = rng.uniform(400.0, 2000.0, 3)
        phi = float(rng.uniform(0.0, 0.35))
        sol = solve_steady(p, phi, 311.0, OMEGA, 0.3e-3, 0.01)
        i_bf, th1_bf = _brute_force(list(p), phi, 311.0, OMEGA, 0.3e-3, 0.01)
        assert sol.i_g == pytest.approx(i_bf, rel=1e-3)
        # theta_1 relative to the current phase
        assert wrap_angle(sol.theta[0] - sol.theta_ig) == pytest.approx(
            th1_bf + phi, abs=2e-3)


def test_preconditions():
    with pytest.raises(ValueError):
        solve_steady([1000.0], 0.0, 311.0, OMEGA, 1e-4, 0.0)
    with pytest.raises(ValueError):
        solve_steady([-1.0, 500.0], 0.0, 311.0, OMEGA, 1e-4, 0.0)
    with pytest.raises(ValueError):
        solve_steady([500.0, 500.0], 1.6, 311.0, OMEGA, 1e-4, 0.0)
    with pytest.raises(ValueError):
        solve_steady([500.0, 500.0], 0.0, 0.0, OMEGA, 1e-4, 0.0)


def test_infeasible_string_voltage():
    # with a strongly resistive line and a large PF angle the companions'
    # voltage demand exceeds what KVL leaves for inverter-1: its real part
    # goes negative and the operating point does not exist
    with pytest.raises(InfeasibleError, match="string voltage"):
        solve_steady([1.0, 5000.0, 5000.0], 1.0, 311.0, OMEGA,
                     0.3e-3, 1.0)


def test_feasibility_flags_attached():
    sol = solve_steady([1500.0, 1300.0, 1100.0], 0.0, 311.0, OMEGA,
                       0.3e-3, 0.01, i_max=20.0, v_max=200.0)
    assert not sol.feasible
    assert sol.violations[0]["quantity"] == "i_g"
