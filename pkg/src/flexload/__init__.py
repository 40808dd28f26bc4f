"""Smart loads providing grid-frequency contingency support.

N flexible loads coordinate their consumption deviation through local
frequency measurements and neighbor-only gradient exchange, restoring the
consumption-generation balance after a disturbance while minimizing total
consumer disutility. The package ships the distributed update law, a
discrete-time grid model, an unknown-input mismatch estimator, a dual
consensus baseline, a centralized verification oracle, and a projected-ODE
reference integrator, wired together by a scenario-driven simulation
harness.
"""

from .disutility import (
    DisutilitySpec,
    Family,
    eval_cost,
    flat_quadratic,
    grad,
    inv_grad,
    project,
    quadratic,
)
from .dual_baseline import DualAgentState, dual_tick, make_dual_agents
from .estimator import (
    EstimatorBank,
    EstimatorState,
    check_prop1,
    estimator_update,
    initial_estimator,
)
from .gradient_projection import (
    AgentState,
    GradientMessage,
    StepSchedule,
    default_gamma0,
    dgp_update,
    gradient_step,
    make_agents,
    step_sizes,
    tick,
)
from .graph import GraphTopology, band_graph, from_edges, is_connected
from .ode_ref import OdeConfig, boundary_counterexample, diagnostics, integrate, projected_rhs
from .oracle import PrimalSolution, brute_force_primal, check_optimality, solve_primal
from .plant import (
    GenerationSchedule,
    PlantModel,
    PlantParams,
    PlantState,
    build_plant,
    generation_at,
    plant_step,
)
from .scenario import Scenario, build_scenario, load_config
from .simulate import Metrics, Trajectory, compute_metrics, run, write_trajectory_csv

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
