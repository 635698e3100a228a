"""No-harm equilibria of finite normal-form games.

Builds the sequential-deviation game for a normal-form game and an initial
reference profile, then solves it by backward induction under the no-harm
constraint. Includes Pareto analysis, outcome-set enumeration for
non-strict games, a one-deviation verification oracle, and sweep harnesses
that exercise the existence / uniqueness / efficiency properties of the
equilibrium concept on fixture and random games.
"""

from .errors import (
    InternalInvariantError,
    ResourceExhaustedError,
    StrategyCoverageError,
    StrictnessError,
)
from .game import (
    GameFormatError,
    NormalFormGame,
    game_from_json_dict,
    game_to_json_dict,
    load_game,
    make_game,
    pareto_dominates,
    pareto_optimal_set,
    pure_nash_profiles,
    strictly_dominates,
    validate_strict,
    weakly_pareto_optimal_set,
)
from .movetree import (
    ActionChoice,
    ChoiceKind,
    ContractViolationError,
    NatureSampled,
    PASS,
    PathContext,
    PolicyError,
    RoundRobin,
    RuleSet,
    STAY,
    TERMINATE,
    TablePolicy,
    TerminalVerdict,
    TraceStep,
    TurnPolicy,
    UncheckedDegenerate,
    VerdictKind,
    apply_action,
    depth_bound,
    legal_actions,
    move_to,
    next_player,
    nhp_allows_stay,
    root_context,
    trace_to_dot,
    trace_to_jsonl,
    validate_turn_balance,
)
from .solver import (
    RecordedStrategy,
    SolveConfig,
    SolveReport,
    Violation,
    enumerate_outcomes,
    one_deviation_check,
    path_between,
    solve,
    solve_with_termination,
)

__version__ = "0.1.0"
