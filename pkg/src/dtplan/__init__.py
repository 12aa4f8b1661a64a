"""Decision-theoretic planning by interleaving expectimax search with execution.

Domains are written in a small probabilistic-STRIPS language, grounded into
explicit MDPs, solved exactly for reference, and planned online with a
depth-bounded search whose leaves are scored by an abstraction heuristic.
"""

from importlib.metadata import PackageNotFoundError, version

from .abstraction import (
    HeuristicTable,
    RelevantSet,
    build_heuristic,
    default_action,
    heuristic_value,
    project_domain,
    relevant_closure,
)
from .core import (
    ActionAspect,
    ActionSchema,
    Case,
    DomainError,
    DomainSpec,
    FlatMDP,
    GroundingSizeError,
    PartialAssignment,
    ProbabilisticEffect,
    RewardRule,
    State,
    Violation,
    apply_effect,
    ground,
    joint_outcomes,
    reward,
    transition_distribution,
    validate,
)
from .executor import (
    ActionCache,
    Trajectory,
    WorldSimulator,
    bench_suite,
    compare_policies,
    induced_policy,
    run_episode,
    simulate_policy,
)
from .lang import DomainSyntaxError, load_domain, parse_domain, parse_domain_with_source, serialize_domain
from .search import SearchConfig, SearchResult, SearchStats, Searcher, best_action, node_envelope
from .solvers import greedy_policy, policy_evaluation, policy_iteration, q_values, value_iteration

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "ActionAspect", "ActionCache", "ActionSchema", "Case", "DomainError", "DomainSpec",
    "DomainSyntaxError", "FlatMDP", "GroundingSizeError", "HeuristicTable", "PartialAssignment",
    "ProbabilisticEffect", "RelevantSet", "RewardRule", "SearchConfig", "SearchResult",
    "SearchStats", "Searcher", "State", "Trajectory", "Violation", "WorldSimulator",
    "apply_effect", "bench_suite", "best_action", "build_heuristic", "compare_policies",
    "default_action", "greedy_policy", "ground", "heuristic_value", "induced_policy",
    "joint_outcomes", "load_domain", "node_envelope", "parse_domain", "parse_domain_with_source",
    "policy_evaluation", "policy_iteration", "project_domain", "q_values", "relevant_closure",
    "reward", "run_episode", "serialize_domain", "simulate_policy", "transition_distribution",
    "validate", "value_iteration",
]
