"""Average-model electrical network: the series-cascaded string behind a
line R-L into a stiff grid, with inverter-1 as a tracked current source."""
import math
from dataclasses import dataclass, field


class SimulationFault(Exception):
    """Non-recoverable numerical fault during a run; carries the step index
    when raised from the simulation loop."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass
class PlantParams:
    n: int = 3
    l_line: float = 0.3e-3     # H
    r_line: float = 0.01       # ohm; small damping so energy bookkeeping is meaningful
    tau_i: float = 0.5e-3      # s, inverter-1 current tracking time constant
    i_max: float = 60.0        # A peak, string current limit
    v_max: float = 200.0       # V peak per module

    def validate(self, dt=None):
        if self.n < 2:
            raise ValueError("plant.n: need at least 2 inverters")
        if self.l_line <= 0.0:
            raise ValueError("plant.l_line: must be > 0")
        if self.r_line < 0.0:
            raise ValueError("plant.r_line: must be >= 0")
        if self.tau_i <= 0.0:
            raise ValueError("plant.tau_i: must be > 0")
        if self.i_max <= 0.0 or self.v_max <= 0.0:
            raise ValueError("plant.i_max/v_max: must be > 0")
        if dt is not None and self.tau_i < 2.0 * dt:
            raise ValueError(
                "plant.tau_i: %g s is not resolvable at dt=%g s "
                "(need tau_i >= 2*dt)" % (self.tau_i, dt))


@dataclass
class PlantState:
    i_g: float = 0.0                 # instantaneous grid current, A
    theta_g: float = 0.0             # integrated grid phase, rad
    u_terms: list = field(default_factory=list)  # per-inverter terminal voltages, V
    u_pcc: float = 0.0               # instantaneous PCC voltage, V


def grid_voltage(t, amplitude, omega, phase0=0.0):
    """Stiff-grid voltage sample amplitude*sin(omega*t + phase0)."""
    if amplitude < 0.0:
        raise ValueError("grid amplitude must be >= 0")
    return amplitude * math.sin(omega * t + phase0)


def track_current(state, i_ref, dt, params):
    """First-order tracking of the commanded current; mutates state.i_g and
    returns the updated value."""
    if dt <= 0.0:
        raise ValueError("track_current: dt must be > 0")
    if not math.isfinite(i_ref):
        raise SimulationFault("track_current: non-finite current reference")
    state.i_g = state.i_g + (i_ref - state.i_g) * dt / params.tau_i
    return state.i_g


def inverter1_terminal_voltage(state, u_pcc, sum_u_others, di_dt, params):
    """Close KVL around the string: the current source's terminal voltage is
    whatever the loop requires. Uses the current sample aligned with u_pcc
    (call before track_current). Returns u_1; the caller records a
    feasibility violation if |u_1| exceeds the module limit."""
    return u_pcc + params.l_line * di_dt + params.r_line * state.i_g \
        - sum_u_others
