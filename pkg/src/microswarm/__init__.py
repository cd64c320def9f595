"""Group-based global control of a microrobot swarm.

One broadcast input drives every robot; robots are split into binary-coded
groups, the active group drives forward and all other robots turn in place.
"""

__version__ = "0.1.0"

from .dynamics import (
    RobotState,
    SwarmParams,
    effort,
    embedded_field,
    make_state,
    positions_of,
    rollout,
    step_discrete,
    travel_length,
    vector_field,
)
from .effort import (
    EffortProblem,
    EffortSolution,
    SolverOptions,
    min_effort_control,
    random_activation_sequence,
    steps_vs_length_sweep,
)
from .groups import GroupAllocation, allocate_groups, encode_group, num_groups, pfsm_activate
from .lie import DegreeBudget, enumerate_brackets, lie_bracket, orientation_rank, position_rank, rank_report
from .planner import (
    Environment,
    PlanResult,
    SafetyParams,
    collision_free,
    composition_rrt,
    nc_ca,
    plan_metrics,
    predict_collision,
    random_walk,
)
from .primitives import fit_circle, repeat_primitive, solve_selective_motion
