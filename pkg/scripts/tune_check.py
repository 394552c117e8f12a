#!/usr/bin/env python3
"""Quick look at Case-1/Case-2 behavior while tuning gains."""
import math
import time

import numpy as np

from cascade_sim import config as cfgmod
from cascade_sim import sim
from cascade_sim.verify import verify


def report(name, cfg):
    t0 = time.time()
    trace = sim.run(cfg.scenario, cfg.plant, cfg.gains,
                    decimation=cfg.decimation)
    wall = time.time() - t0
    s = sim.metrics(trace, cfg.scenario)
    print("== %s  (wall %.2f s) ==" % (name, wall))
    print("P final:", np.round(s.final_p, 1), " V final:",
          np.round(s.final_v, 2))
    print("Q final:", np.round(s.final_q, 1))
    print("PF_pcc=%.5f  I_g=%.3f  phi_max_dev=%.5f rad"
          % (s.pf_pcc, s.i_g_amplitude, s.phi_max_dev))
    print("settling P:", s.settling_p, " settling V:", s.settling_v)
    print("KVL max %.3g  viol i=%d v=%d"
          % (trace.max_kvl_residual, trace.current_violations,
             trace.voltage_violations))
    return trace, s


if __name__ == "__main__":
    c1 = cfgmod.case1_config()
    report("case1", c1)
    c2 = cfgmod.case2_config()
    report("case2", c2)
    for name, cfg in (("case1", c1), ("case2", c2)):
        res, summ, sol = verify(cfg)
        print(name, "verify:", "OK" if res.ok else "FAIL")
        if not res.ok:
            for c in res.checks:
                if not c["ok"]:
                    print("  ", c)
