from .casegen import (
    RandomGameConfig,
    RobortaConfig,
    RobortaVersion,
    UavConfig,
    gen_random_game,
    gen_roborta,
    gen_uav,
)
from .fairness import (
    FairnessReport,
    almost_sure_vertices,
    check,
    check_via_uniform_mdp,
    exists_pre_f,
    exists_pre_star,
    forall_pre_f,
    forall_pre_star,
    is_stopping_under_fairness,
)
from .graph import (
    DetMemorylessStrategy,
    GameGraph,
    InducedChain,
    InducedMdp,
    PlayerClass,
    RandMemorylessStrategy,
    Rule,
    Vertex,
    Violation,
    game_statistics,
    induce_chain,
    induce_mdp,
    terminals,
    validate,
)
from .model import CompiledGame, ModelAst, compile_model, load_model, parse
from .oracle import (
    OracleResult,
    is_fair_det_strategy,
    oracle_result,
    oracle_stopping,
    oracle_value,
)
from .sim import Estimate, EpisodeResult, estimate_value, simulate_episode
from .solver import (
    Solution,
    Solver,
    distances_to_terminal,
    evaluate_pair,
    gamma_apply,
    linear_solve_mc_expected_reward,
    mdp_exact_value_max,
    mdp_exact_value_min_fair,
    solve,
    strategy_bounds,
    synthesize_max_strategy,
    synthesize_min_fair_strategy,
    upper_bound_vector,
    value_iteration_gfp,
)

VERSION = GameGraph.VERSION

__all__ = [
    "almost_sure_vertices",
    "check",
    "check_via_uniform_mdp",
    "CompiledGame",
    "compile_model",
    "DetMemorylessStrategy",
    "distances_to_terminal",
    "EpisodeResult",
    "Estimate",
    "estimate_value",
    "evaluate_pair",
    "exists_pre_f",
    "exists_pre_star",
    "FairnessReport",
    "forall_pre_f",
    "forall_pre_star",
    "game_statistics",
    "GameGraph",
    "gamma_apply",
    "gen_random_game",
    "gen_roborta",
    "gen_uav",
    "induce_chain",
    "induce_mdp",
    "InducedChain",
    "InducedMdp",
    "is_fair_det_strategy",
    "is_stopping_under_fairness",
    "linear_solve_mc_expected_reward",
    "load_model",
    "mdp_exact_value_max",
    "mdp_exact_value_min_fair",
    "ModelAst",
    "oracle_result",
    "oracle_stopping",
    "oracle_value",
    "OracleResult",
    "parse",
    "PlayerClass",
    "RandMemorylessStrategy",
    "RandomGameConfig",
    "RobortaConfig",
    "RobortaVersion",
    "Rule",
    "simulate_episode",
    "Solution",
    "solve",
    "Solver",
    "strategy_bounds",
    "synthesize_max_strategy",
    "synthesize_min_fair_strategy",
    "terminals",
    "UavConfig",
    "upper_bound_vector",
    "validate",
    "value_iteration_gfp",
    "VERSION",
    "Vertex",
    "Violation",
]
