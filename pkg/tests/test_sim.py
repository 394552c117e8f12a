"""Engine-level invariants: determinism, step-size convergence, agreement
between the fused kernel and the object-based reference loop, and the
selectable numerics backend."""
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from cascade_sim import (
    GridSagFactor, Scenario, SetPowerRef, SimulationFault, metrics, run,
)
from cascade_sim.config import case1_config, default_gains, default_plant
from cascade_sim.sim import run_reference


def _scenario(**kw):
    sc = Scenario(duration=0.6, p_ref=[1200.0, 900.0, 600.0])
    for k, v in kw.items():
        setattr(sc, k, v)
    return sc


def test_determinism_bit_identical():
    sc = _scenario(duration=0.4)
    kw = dict(seed=7, noise_amplitude=0.005, decimation=5)
    a = run(sc, default_plant(), default_gains(), **kw)
    b = run(sc, default_plant(), default_gains(), **kw)
    for name in ("t", "i_g", "u_pcc", "u", "v", "theta", "omega", "p", "q",
                 "phi"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.max_kvl_residual == b.max_kvl_residual


def test_seed_changes_noisy_run():
    sc = _scenario(duration=0.3)
    a = run(sc, default_plant(), default_gains(), seed=1,
            noise_amplitude=0.005)
    b = run(sc, default_plant(), default_gains(), seed=2,
            noise_amplitude=0.005)
    assert not np.array_equal(a.i_g, b.i_g)


def test_dt_halving_convergence():
    plant = default_plant()
    gains = default_gains()
    coarse = _scenario(duration=1.0)
    fine = _scenario(duration=1.0, dt=5e-5)
    ma = metrics(run(coarse, plant, gains, decimation=10), coarse)
    mb = metrics(run(fine, plant, gains, decimation=20), fine)
    np.testing.assert_allclose(ma.final_p, mb.final_p, rtol=0.002)
    np.testing.assert_allclose(ma.final_v, mb.final_v, rtol=0.002)
    assert ma.pf_pcc == pytest.approx(mb.pf_pcc, abs=0.002)


def test_kernel_matches_reference_loop():
    sc = _scenario(duration=0.6,
                   events=[(0.3, SetPowerRef(2, 700.0)),
                           (0.4, GridSagFactor(0.9))])
    plant = default_plant()
    gains = default_gains()
    fast = run(sc, plant, gains, decimation=10)
    slow = run_reference(sc, plant, gains, decimation=10)
    for name in ("i_g", "u_pcc", "i_g_cmd", "u", "v", "theta", "omega",
                 "p", "q", "phi"):
        np.testing.assert_allclose(getattr(fast, name),
                                   getattr(slow, name),
                                   rtol=1e-6, atol=1e-6, err_msg=name)


def test_trace_timestamps_uniform():
    sc = _scenario(duration=0.3)
    trace = run(sc, default_plant(), default_gains(), decimation=10)
    assert trace.dt == pytest.approx(1e-3)
    np.testing.assert_allclose(np.diff(trace.t), trace.dt, rtol=1e-9)
    assert trace.t[0] == 0.0


def test_amplitude_tracks_power_share():
    # the voltage-controlled modules' amplitudes settle in proportion to
    # their active-power commands
    cfg = case1_config()
    trace = run(cfg.scenario, cfg.plant, cfg.gains)
    m = metrics(trace, cfg.scenario)
    p = cfg.scenario.p_ref[:]
    for _, ev in cfg.scenario.events:
        p[ev.inverter - 1] = ev.watts
    assert m.final_v[1] / m.final_v[2] == pytest.approx(p[1] / p[2],
                                                        rel=0.02)
    np.testing.assert_allclose(m.final_p, p, rtol=0.01)


def test_nan_abort_reports_step():
    sc = _scenario(duration=0.2)
    with pytest.raises(SimulationFault) as exc:
        run(sc, default_plant(), default_gains(), seed=0,
            noise_amplitude=1e154)
    assert exc.value.step >= 0
    assert "step" in str(exc.value)


def test_scenario_validation():
    plant = default_plant()
    with pytest.raises(ValueError, match="p_ref"):
        _scenario(p_ref=[1.0, 2.0]).validate(plant.n)
    with pytest.raises(ValueError, match="dt"):
        _scenario(dt=3e-4).validate(plant.n)
    with pytest.raises(ValueError, match="init"):
        _scenario(init="warm").validate(plant.n)
    with pytest.raises(ValueError, match="outside run"):
        _scenario(events=[(1.5, SetPowerRef(2, 1.0))]).validate(plant.n)
    with pytest.raises(ValueError, match="not sorted"):
        _scenario(events=[(0.4, SetPowerRef(2, 1.0)),
                          (0.2, SetPowerRef(3, 1.0))]).validate(plant.n)
    with pytest.raises(ValueError, match="out of range"):
        _scenario(events=[(0.2, SetPowerRef(4, 1.0))]).validate(plant.n)
    with pytest.raises(ValueError, match="unknown event"):
        _scenario(events=[(0.2, "bump")]).validate(plant.n)


def _run_under_backend(backend):
    code = (
        "import json, numpy as np\n"
        "from cascade_sim import Scenario, run\n"
        "from cascade_sim.config import default_gains, default_plant\n"
        "sc = Scenario(duration=0.3, p_ref=[1200.0, 900.0, 600.0])\n"
        "tr = run(sc, default_plant(), default_gains(), decimation=10)\n"
        "print(json.dumps({'i_g': tr.i_g[-50:].tolist(),\n"
        "                  'v': tr.v[-1].tolist(),\n"
        "                  'kvl': tr.max_kvl_residual}))\n"
    )
    env = dict(os.environ, CASCADE_SIM_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_numpy_backend_matches_numba():
    a = _run_under_backend("numpy")
    b = _run_under_backend("numba")
    np.testing.assert_allclose(a["i_g"], b["i_g"], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a["v"], b["v"], rtol=1e-9)
    assert a["kvl"] < 1e-9 and b["kvl"] < 1e-9


def test_metrics_requires_long_enough_trace():
    sc = _scenario(duration=0.05)
    trace = run(sc, default_plant(), default_gains(), decimation=10)
    with pytest.raises(ValueError, match="final window"):
        metrics(trace, sc)
