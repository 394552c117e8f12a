"""Deterministic simulator and analytic solver for decentralized control of
grid-connected cascaded inverters with unequal power capacities."""
from ._kernels import BACKEND
from .signal import FundamentalEstimator, Phasor, PiBlock, wrap_angle
from .plant import PlantParams, PlantState, SimulationFault
from .control import CurrentController, Gains, Pll, VoltageController, \
    measure_pq
from .steady import InfeasibleError, SteadySolution, SteadyStateError, \
    check_feasibility, solve_steady
from .sim import GridSagFactor, PhasePerturb, Scenario, SetPowerRef, \
    Summary, Trace, metrics, run, run_reference
from .config import Config, ConfigError, case1_config, case2_config, \
    default_gains, default_plant
from .verify import verify

__version__ = "0.1.0"
