"""Decision procedures for the reporting schedule p_L."""

from .kkt import (
    KktDirection,
    KktInfeasibleError,
    kkt_direction,
    p5_objective,
    scale_to_feasible,
    solve_npc_two_stage,
)
from .dc import (
    DcProgram,
    DcSweepResult,
    QcqpSolution,
    dc_matrices,
    feasible_radius_bound,
    p7_objective,
    p8_objective,
    solve_dc_sweep,
    solve_qcqp_sdp,
)
from .oracle import GridOracleResult, grid_oracle
from .scenario import (
    MAX_TREE_BITS,
    ScenarioBranch,
    ScenarioTree,
    branch_average_pd,
    build_scenario_tree,
    npc_decision_fn,
    solve_per_branch,
    stage_observation_prob,
    weighted_average_pd,
)
from .sdp import (
    MAX_PSD_BLOCK,
    SdpError,
    SdpProblem,
    SdpSolution,
    sdp_solve,
    write_sdpa,
)

__all__ = [
    "DcProgram",
    "DcSweepResult",
    "QcqpSolution",
    "dc_matrices",
    "feasible_radius_bound",
    "p7_objective",
    "p8_objective",
    "solve_dc_sweep",
    "solve_qcqp_sdp",
    "GridOracleResult",
    "grid_oracle",
    "MAX_TREE_BITS",
    "ScenarioBranch",
    "ScenarioTree",
    "branch_average_pd",
    "build_scenario_tree",
    "npc_decision_fn",
    "solve_per_branch",
    "stage_observation_prob",
    "weighted_average_pd",
    "KktDirection",
    "KktInfeasibleError",
    "kkt_direction",
    "p5_objective",
    "scale_to_feasible",
    "solve_npc_two_stage",
    "MAX_PSD_BLOCK",
    "SdpError",
    "SdpProblem",
    "SdpSolution",
    "sdp_solve",
    "write_sdpa",
]
