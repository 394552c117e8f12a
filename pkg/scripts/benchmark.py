#!/usr/bin/env python3
"""Compare the numba and pure-numpy backends on the bundled scenarios.

The backend is chosen once at import time via CASCADE_SIM_BACKEND, so each
measurement runs in a fresh subprocess. The first jitted call pays the
compilation cost; it is timed separately from the steady-state throughput.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from cascade_sim import run, Scenario
from cascade_sim.config import Config

cfg = Config.load(sys.argv[1])
warm = Scenario(duration=0.05, p_ref=cfg.scenario.p_ref)
t0 = time.perf_counter()
run(warm, cfg.plant, cfg.gains)
warmup = time.perf_counter() - t0

times = []
for _ in range(int(sys.argv[2])):
    t0 = time.perf_counter()
    run(cfg.scenario, cfg.plant, cfg.gains, decimation=cfg.decimation)
    times.append(time.perf_counter() - t0)
print(json.dumps({"warmup_s": warmup, "runs_s": times}))
"""


def measure(backend, config, repeats):
    env = dict(os.environ, CASCADE_SIM_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, config, str(repeats)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=os.path.join(
        os.path.dirname(__file__), "..", "configs", "case1.json"))
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print("config: %s  (%d repeats per backend)"
          % (os.path.abspath(args.config), args.repeats))
    print("%-8s %14s %14s %14s" % ("backend", "warmup [s]", "best [s]",
                                   "mean [s]"))
    results = {}
    for backend in ("numba", "numpy"):
        r = measure(backend, args.config, args.repeats)
        times = r["runs_s"]
        results[backend] = min(times)
        print("%-8s %14.3f %14.4f %14.4f"
              % (backend, r["warmup_s"], min(times),
                 sum(times) / len(times)))
    print("speedup (numpy best / numba best): %.1fx"
          % (results["numpy"] / results["numba"]))


if __name__ == "__main__":
    main()
