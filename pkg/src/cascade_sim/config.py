"""Experiment configuration: a complete, serializable description of one
run. Omitted fields take the documented defaults in data/defaults.json."""
import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources

from .control import Gains
from .plant import PlantParams
from .sim import GridSagFactor, PhasePerturb, Scenario, SetPowerRef


class ConfigError(Exception):
    """Invalid configuration; `field` names the offending entry."""

    def __init__(self, field_path, message):
        super().__init__("%s: %s" % (field_path, message))
        self.field = field_path


def _defaults():
    with resources.files("cascade_sim.data").joinpath(
            "defaults.json").open("r") as fh:
        return json.load(fh)


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = "%s.%s" % (path, key) if path else key
        if key not in base:
            raise ConfigError(where, "unknown field")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


_EVENT_TYPES = {"set_power_ref", "grid_sag", "phase_perturb"}


@dataclass
class Config:
    plant: PlantParams
    gains: Gains
    scenario: Scenario
    decimation: int = 10
    out_dir: str = "."
    noise_seed: int = 0
    noise_amplitude: float = 0.0
    raw: dict = field(default_factory=dict)  # resolved dict, for provenance

    @classmethod
    def from_dict(cls, data):
        resolved = _merge(_defaults(), data)
        p = resolved["plant"]
        try:
            plant = PlantParams(n=int(p["n"]), l_line=float(p["l_line"]),
                                r_line=float(p["r_line"]),
                                tau_i=float(p["tau_i"]),
                                i_max=float(p["i_max"]),
                                v_max=float(p["v_max"]))
            plant.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError("plant.%s" % _plant_field(exc), str(exc))
        try:
            gains = Gains(**{k: float(v)
                             for k, v in resolved["gains"].items()})
        except TypeError as exc:
            raise ConfigError("gains", str(exc))
        sc = resolved["scenario"]
        events = []
        for k, ev in enumerate(sc.get("events", [])):
            where = "scenario.events[%d]" % k
            typ = ev.get("type")
            if typ not in _EVENT_TYPES:
                raise ConfigError(where, "unknown event type %r" % typ)
            t_ev = ev.get("t")
            if not isinstance(t_ev, (int, float)):
                raise ConfigError(where, "missing event time 't'")
            if typ == "set_power_ref":
                events.append((float(t_ev),
                               SetPowerRef(int(ev["inverter"]),
                                           float(ev["value"]))))
            elif typ == "grid_sag":
                events.append((float(t_ev), GridSagFactor(float(ev["factor"]))))
            else:
                events.append((float(t_ev),
                               PhasePerturb(int(ev["inverter"]),
                                            float(ev["value"]))))
        scenario = Scenario(
            duration=float(sc["duration"]), dt=float(sc["dt"]),
            p_ref=[float(x) for x in sc["p_ref"]],
            pf_angle=float(sc["pf_angle"]),
            grid_amplitude=float(sc["grid_amplitude"]),
            grid_freq=float(sc["grid_freq"]),
            grid_phase0=float(sc["grid_phase0"]),
            events=events, init=sc["init"])
        try:
            scenario.validate(plant.n)
            plant.validate(scenario.dt)
        except ValueError as exc:
            raise ConfigError(_scenario_field(exc), str(exc))
        out = resolved["output"]
        noise = resolved["noise"]
        return cls(plant=plant, gains=gains, scenario=scenario,
                   decimation=int(out["decimation"]),
                   out_dir=str(out["out_dir"]),
                   noise_seed=int(noise["seed"]),
                   noise_amplitude=float(noise["amplitude"]),
                   raw=resolved)

    @classmethod
    def load(cls, path, overrides=()):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), "not valid JSON (%s)" % exc)
        for ov in overrides:
            data = apply_override(data, ov)
        return cls.from_dict(data)

    def to_dict(self):
        return copy.deepcopy(self.raw)


def _plant_field(exc):
    msg = str(exc)
    if msg.startswith("plant."):
        return msg.split(":", 1)[0].split(".", 1)[1]
    return "?"


def _scenario_field(exc):
    msg = str(exc)
    if ":" in msg and msg.split(":", 1)[0].replace(".", "").replace(
            "_", "").isalnum():
        return msg.split(":", 1)[0]
    return "scenario"


def apply_override(data, assignment):
    """Apply a dotted-path override 'a.b.c=value'; values are parsed as
    JSON, falling back to a bare string."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    path, raw_val = assignment.split("=", 1)
    try:
        val = json.loads(raw_val)
    except json.JSONDecodeError:
        val = raw_val
    keys = path.strip().split(".")
    data = copy.deepcopy(data)
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "intermediate field is not an object")
    node[keys[-1]] = val
    return data


def default_gains():
    return Gains(**{k: float(v) for k, v in _defaults()["gains"].items()})


def default_plant():
    p = _defaults()["plant"]
    return PlantParams(n=int(p["n"]), l_line=p["l_line"], r_line=p["r_line"],
                       tau_i=p["tau_i"], i_max=p["i_max"], v_max=p["v_max"])


def case1_dict():
    """Source power change under unity PF: equal 1.5 kW commands stepping to
    (1.5, 1.3, 1.1) kW at t = 1 s on the nominal 311 V / 50 Hz grid."""
    return {
        "scenario": {
            "duration": 2.0,
            "p_ref": [1500.0, 1500.0, 1500.0],
            "pf_angle": 0.0,
            "events": [
                {"t": 1.0, "type": "set_power_ref", "inverter": 2,
                 "value": 1300.0},
                {"t": 1.0, "type": "set_power_ref", "inverter": 3,
                 "value": 1100.0},
            ],
        }
    }


def case2_dict():
    """Grid voltage sag under non-unity PF: (1.5, 1.3, 1.1) kW at PF angle
    0.128*pi, with a 15% sag at t = 1 s."""
    return {
        "scenario": {
            "duration": 2.0,
            "p_ref": [1500.0, 1300.0, 1100.0],
            "pf_angle": 0.128 * math.pi,
            "events": [
                {"t": 1.0, "type": "grid_sag", "factor": 0.85},
            ],
        }
    }


def case1_config():
    return Config.from_dict(case1_dict())


def case2_config():
    return Config.from_dict(case2_dict())
