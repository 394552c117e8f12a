"""Command-line surface: cascade-sim run|steady|verify --config <path>."""
import argparse
import json
import os
import sys
import tempfile

from . import sim
from .config import Config, ConfigError
from .plant import SimulationFault
from .steady import SteadyStateError, solve_steady
from .verify import post_event_reference, verify

EXIT_OK = 0
EXIT_FAIL = 1       # verify tolerance breach / infeasible steady state
EXIT_CONFIG = 2     # malformed configuration
EXIT_NAN = 3        # simulation aborted on non-finite state


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".cascade_sim_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(args):
    return Config.load(args.config, overrides=args.set or [])


def _stem(args):
    base = os.path.basename(args.config)
    if base.endswith(".json"):
        base = base[:-5]
    out_dir = args.out_dir
    return os.path.join(out_dir, base)


def cmd_run(args):
    cfg = _load(args)
    try:
        trace = sim.run(cfg.scenario, cfg.plant, cfg.gains,
                        seed=cfg.noise_seed,
                        noise_amplitude=cfg.noise_amplitude,
                        decimation=cfg.decimation)
    except SimulationFault as exc:
        print("simulation fault: %s" % exc, file=sys.stderr)
        return EXIT_NAN
    summary = sim.metrics(trace, cfg.scenario)

    stem = _stem(args)
    os.makedirs(args.out_dir, exist_ok=True)
    import io
    buf = io.StringIO()
    trace.write_csv(buf)
    _atomic_write(stem + ".trace.csv", buf.getvalue())

    doc = {
        "summary": summary.to_dict(),
        "diagnostics": {
            "max_kvl_residual_V": trace.max_kvl_residual,
            "current_violations": trace.current_violations,
            "voltage_violations": trace.voltage_violations,
            "first_violation_step": trace.first_violation_step,
        },
        "provenance": {
            "config": cfg.to_dict(),
            "config_path": os.path.abspath(args.config),
            "overrides": list(args.set or []),
        },
    }
    _atomic_write(stem + ".summary.json", json.dumps(doc, indent=2) + "\n")

    _print_summary_table(cfg, summary)
    print("wrote %s.trace.csv and %s.summary.json" % (stem, stem))
    return EXIT_OK


def _print_summary_table(cfg, summary):
    print("final window %.3f..%.3f s" % summary.window)
    print("%-6s %12s %12s %12s" % ("inv", "P [W]", "Q [var]", "V [Vpk]"))
    for i in range(cfg.plant.n):
        print("%-6d %12.2f %12.2f %12.3f"
              % (i + 1, summary.final_p[i], summary.final_q[i],
                 summary.final_v[i]))
    print("PF(PCC) = %.4f   I_g = %.3f A   max|phi - phi*| = %.4f rad"
          % (summary.pf_pcc, summary.i_g_amplitude, summary.phi_max_dev))


def cmd_steady(args):
    cfg = _load(args)
    sc = cfg.scenario
    try:
        sol = solve_steady(sc.p_ref, sc.pf_angle, sc.grid_amplitude,
                           sc.omega, cfg.plant.l_line, cfg.plant.r_line,
                           i_max=cfg.plant.i_max, v_max=cfg.plant.v_max)
    except (SteadyStateError, ValueError) as exc:
        print(json.dumps({"error": str(exc)}, indent=2))
        return EXIT_FAIL
    print(json.dumps(sol.to_dict(), indent=2))
    return EXIT_OK if sol.feasible else EXIT_FAIL


def cmd_verify(args):
    cfg = _load(args)
    try:
        result, summary, sol = verify(cfg)
    except SimulationFault as exc:
        print("simulation fault: %s" % exc, file=sys.stderr)
        return EXIT_NAN
    for c in result.checks:
        print("%-8s sim=%12.5g ref=%12.5g err=%9.3g tol=%g  %s"
              % (c["quantity"], c["value"], c["reference"], c["error"],
                 c["tol"], "ok" if c["ok"] else "FAIL"))
    if result.ok:
        print("verify: all quantities within tolerance")
        return EXIT_OK
    worst = result.worst()
    print("verify: FAILED, worst offender %s (error %.4g > tol %.4g)"
          % (worst["quantity"], worst["error"], worst["tol"]))
    return EXIT_FAIL


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cascade-sim",
        description="Simulator and analytic solver for decentralized "
                    "control of grid-connected cascaded inverters.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("steady", cmd_steady),
                     ("verify", cmd_verify)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted path)")
        p.add_argument("--out-dir", default=".")
        p.set_defaults(func=fn)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not os.path.exists(args.config):
        print("config not found: %s" % args.config, file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
