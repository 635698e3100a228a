"""Equilibrium computation over the deviation game.

solve() runs backward induction under the no-harm constraint (or plain
subgame-perfect induction with the constraint off) and reports the
implemented outcome with its on-path trace. enumerate_outcomes() propagates
outcome sets to expose every tie-break-reachable outcome, which is how
non-strict games are analyzed. one_deviation_check() is the independent
correctness oracle: it replays a recorded strategy through the move-tree
transitions and flags any context where a single deviation improves the
active player's continuation.

Two engines compute values: a readable reference recursion over
PathContext values, and a packed-integer engine (optionally jitted) whose
transition tables derive from the same move-tree predicates. The packed
engine applies exact reference-feasibility cuts (see _engine); recording a
full strategy disables cuts so the one-deviation pass can cover every
reachable context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from . import _engine
from .errors import (
    InternalInvariantError,
    ResourceExhaustedError,
    StrategyCoverageError,
    StrictnessError,
)
from .game import NormalFormGame, Payoff, Profile, payoff_to_json
from .movetree import (
    ActionChoice,
    NatureSampled,
    PASS,
    PathContext,
    RoundRobin,
    RuleSet,
    TablePolicy,
    TerminalVerdict,
    TraceStep,
    TurnPolicy,
    UncheckedDegenerate,
    apply_action,
    depth_bound,
    legal_actions,
    make_step,
    move_to,
    next_player,
    root_context,
)


@dataclass(frozen=True)
class SolveConfig:
    """Everything that pins down one deviation game and its solution mode."""

    a0: Profile
    k: int = 1
    policy: TurnPolicy | None = None
    nhp_enabled: bool = True
    termination_action: bool = False
    stay_threshold: int = 2
    weak_mode: bool = False
    max_depth_guard: int | None = None

    def resolved_policy(self, game: NormalFormGame) -> TurnPolicy:
        if self.policy is None:
            return RoundRobin(tuple(range(game.num_players)))
        return self.policy

    def rules(self, policy: TurnPolicy) -> RuleSet:
        return RuleSet(
            k=self.k,
            nhp_enabled=self.nhp_enabled,
            termination_action=self.termination_action,
            stay_threshold=self.stay_threshold,
            pass_coverage=policy.players_ever_active(),
        )

    def to_json_dict(self, game: NormalFormGame) -> dict:
        policy = self.resolved_policy(game)
        return {
            "ref": game.profile_key(self.a0),
            "k": self.k,
            "policy": policy.describe(),
            "nhp": self.nhp_enabled,
            "termination_action": self.termination_action,
            "stay_threshold": self.stay_threshold,
            "weak": self.weak_mode,
        }


@dataclass
class SolveReport:
    """Outcome of one solve: the implemented profile, its payoffs, the
    on-path realization, and search diagnostics.

    nodes_expanded and tie_events count what the engine actually expanded;
    the packed engine's feasibility cuts skip subtrees it can bound, so
    these are engine-level diagnostics, not tree-census figures.
    """

    outcome: Profile
    payoffs: tuple[Payoff, ...]
    path: tuple[TraceStep, ...]
    nodes_expanded: int
    tie_events: int
    engine: str
    config: dict
    game_players: tuple[str, ...]
    outcome_key: str
    outcome_set: frozenset[Profile] | None = None
    outcome_set_keys: tuple[str, ...] | None = None
    strategy: "RecordedStrategy | None" = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        doc = {
            "outcome": self.outcome_key,
            "payoffs": [payoff_to_json(u) for u in self.payoffs],
            "path": [s.to_dict() for s in self.path],
            "nodes_expanded": self.nodes_expanded,
            "tie_events": self.tie_events,
            "engine": self.engine,
            "config": self.config,
            "players": list(self.game_players),
        }
        if self.outcome_set_keys is not None:
            doc["outcome_set"] = list(self.outcome_set_keys)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


@dataclass(frozen=True)
class Violation:
    """One failed one-deviation check: where, what was prescribed, and the
    improving alternative."""

    state: str
    reference: str
    depth_key: int
    player: str
    prescribed: str
    prescribed_outcome: str
    better: str
    better_outcome: str
    reason: str = "suboptimal"

    def to_dict(self) -> dict:
        return {
            "state": self.state,
            "reference": self.reference,
            "depth_key": self.depth_key,
            "player": self.player,
            "prescribed": self.prescribed,
            "prescribed_outcome": self.prescribed_outcome,
            "better": self.better,
            "better_outcome": self.better_outcome,
            "reason": self.reason,
        }


class RecordedStrategy:
    """The solver's choice at every context it expanded, queryable by
    context; backs the one-deviation oracle."""

    def __init__(self, source: str, lookup: Callable[[PathContext], ActionChoice | None], run=None):
        self.source = source
        self._lookup = lookup
        self.run = run

    def choice_at(self, ctx: PathContext) -> ActionChoice | None:
        return self._lookup(ctx)


def _validate(game: NormalFormGame, cfg: SolveConfig) -> tuple[TurnPolicy, RuleSet, int]:
    game.check_profile(cfg.a0)
    if game.num_players < 2:
        raise ValueError("solving needs at least two players")
    if not cfg.weak_mode:
        violations = game.strictness_violations()
        if violations:
            raise StrictnessError(
                "game is not strict ("
                + "; ".join(v.describe(game) for v in violations[:3])
                + "); pass weak_mode to solve anyway"
            )
    if not 2 <= cfg.stay_threshold <= game.num_players:
        raise ValueError("stay_threshold must lie in [2, number of players]")
    policy = cfg.resolved_policy(game)
    if policy.num_players != game.num_players:
        raise ValueError("policy player count does not match the game")
    guard = cfg.max_depth_guard or 10 * depth_bound(game, cfg.k)
    if isinstance(policy, NatureSampled):
        policy = policy.materialize(guard + 2)
    return policy, cfg.rules(policy), guard


# -- reference engine -------------------------------------------------------


class _ReferenceRun:
    """Plain memoized backward induction over PathContext values. No cuts:
    every reachable context is expanded, so recorded strategies are total."""

    def __init__(self, game, rules, policy, guard, node_budget=None):
        self.game = game
        self.rules = rules
        self.policy = policy
        self.guard = guard
        self.node_budget = node_budget
        self.memo: dict = {}
        self.choices: dict = {}
        self.nodes = 0
        self.ties = 0

    def key(self, ctx: PathContext):
        return (
            ctx.current,
            ctx.reference,
            ctx.endorsers,
            ctx.usage,
            frozenset(ctx.pass_run),
            self.policy.turn_key(ctx.depth),
        )

    def value(self, ctx: PathContext) -> Profile:
        if ctx.depth > self.guard:
            raise InternalInvariantError(
                "depth guard exceeded: the transition rules failed to terminate"
            )
        key = self.key(ctx)
        cached = self.memo.get(key)
        if cached is not None:
            return cached
        self.nodes += 1
        if self.node_budget and self.nodes > self.node_budget:
            raise ResourceExhaustedError("node budget exceeded")
        p = next_player(self.policy, ctx)
        best = None
        best_u = None
        best_choice = None
        tie = False
        for choice in legal_actions(ctx, p):
            nxt, verdict = apply_action(ctx, p, choice)
            out = verdict.outcome if verdict.is_terminal else self.value(nxt)
            u = self.game.payoff(out, p)
            if best is None or u > best_u:
                best, best_u, best_choice = out, u, choice
                tie = False
            elif u == best_u:
                tie = True
        if tie:
            self.ties += 1
        self.memo[key] = best
        self.choices[key] = best_choice
        return best

    def strategy(self) -> RecordedStrategy:
        def lookup(ctx: PathContext):
            return self.choices.get(self.key(ctx))

        return RecordedStrategy("reference", lookup, run=self)


def _reference_set_value(game, rules, policy, guard, ctx, memo, stats, node_budget):
    """Outcome-set propagation over PathContext values (no cuts)."""
    if ctx.depth > guard:
        raise InternalInvariantError(
            "depth guard exceeded: the transition rules failed to terminate"
        )
    key = (
        ctx.current,
        ctx.reference,
        ctx.endorsers,
        ctx.usage,
        frozenset(ctx.pass_run),
        policy.turn_key(ctx.depth),
    )
    cached = memo.get(key)
    if cached is not None:
        return cached
    stats[0] += 1
    if node_budget and stats[0] > node_budget:
        raise ResourceExhaustedError("outcome-set size guard exceeded")
    p = next_player(policy, ctx)
    child_sets = []
    for choice in legal_actions(ctx, p):
        nxt, verdict = apply_action(ctx, p, choice)
        if verdict.is_terminal:
            child_sets.append(frozenset({verdict.outcome}))
        else:
            child_sets.append(
                _reference_set_value(
                    game, rules, policy, guard, nxt, memo, stats, node_budget
                )
            )
    threshold = max(min(game.payoff(o, p) for o in s) for s in child_sets)
    union = frozenset().union(*child_sets)
    result = frozenset(o for o in union if game.payoff(o, p) >= threshold)
    memo[key] = result
    return result


# -- path realization -------------------------------------------------------


def _realize_path(game, rules, policy, a0, child_value, guard):
    ctx = root_context(game, a0, rules)
    steps: list[TraceStep] = []
    for _ in range(guard + 1):
        p = next_player(policy, ctx)
        best = None
        for choice in legal_actions(ctx, p):
            nxt, verdict = apply_action(ctx, p, choice)
            out = verdict.outcome if verdict.is_terminal else child_value(nxt)
            u = game.payoff(out, p)
            if best is None or u > best[0]:
                best = (u, choice, nxt, verdict)
        _, choice, nxt, verdict = best
        steps.append(make_step(ctx, p, choice, verdict))
        if verdict.is_terminal:
            return tuple(steps), verdict.outcome
        ctx = nxt
    raise InternalInvariantError("path realization exceeded the depth guard")


# -- public API ---------------------------------------------------------------


def solve(
    game: NormalFormGame,
    cfg: SolveConfig,
    *,
    engine: str = "auto",
    record_strategy: bool = False,
    collect_trace: bool = True,
    node_budget: int | None = None,
) -> SolveReport:
    """Backward-induction outcome of the deviation game.

    With cfg.nhp_enabled this is the no-harm equilibrium outcome; with it
    off, the unconstrained subgame-perfect (non-myopic) outcome. The tie
    break among equally-valued choices is fixed: stay, then moves by
    ascending action index, then pass, then terminate.

    record_strategy keeps the solver's choice at every reachable context
    (disabling the packed engine's cuts) so one_deviation_check can audit
    the full tree. engine is "auto", "reference", or "packed".
    """
    policy, rules, guard = _validate(game, cfg)
    chosen = engine
    if chosen == "auto":
        chosen = "packed" if _engine.packed_supported(game, cfg.k) else "reference"
    if chosen == "packed" and not _engine.packed_supported(game, cfg.k):
        raise ValueError("game too large for the packed engine")

    strategy = None
    if chosen == "packed":
        run = _engine.run_for(
            game,
            rules,
            policy,
            use_cuts=not record_strategy,
            record=record_strategy,
            depth_guard=guard,
            node_budget=node_budget,
        )
        root = root_context(game, cfg.a0, rules)
        cur, ref, endors, u0, u1, prun = _engine.pack_fields(run.tables, root)
        out_id = run.solve_value(cur, ref, endors, u0, u1, prun, 0)
        outcome = game.profile_from_index(out_id)
        nodes = int(run.stats[0])
        ties = int(run.stats[1])
        child_value = run.value_of_ctx
        if record_strategy:
            strategy = RecordedStrategy("packed", run.choice_at_ctx, run=run)
    else:
        run = _ReferenceRun(game, rules, policy, guard, node_budget)
        outcome = run.value(root_context(game, cfg.a0, rules))
        nodes = run.nodes
        ties = run.ties
        child_value = run.value
        if record_strategy:
            strategy = run.strategy()

    path: tuple[TraceStep, ...] = ()
    if collect_trace:
        path, traced_outcome = _realize_path(
            game, rules, policy, cfg.a0, child_value, guard
        )
        if traced_outcome != outcome:
            raise InternalInvariantError(
                "trace realization disagrees with the solved outcome"
            )

    outcome_set = None
    set_keys = None
    if cfg.weak_mode:
        outcome_set = enumerate_outcomes(game, cfg, engine=engine)
        set_keys = tuple(sorted(game.profile_key(o) for o in outcome_set))

    return SolveReport(
        outcome=outcome,
        payoffs=game.payoff_vector(outcome),
        path=path,
        nodes_expanded=nodes,
        tie_events=ties,
        engine=chosen,
        config=cfg.to_json_dict(game),
        game_players=game.players,
        outcome_key=game.profile_key(outcome),
        outcome_set=outcome_set,
        outcome_set_keys=set_keys,
        strategy=strategy,
    )


def solve_with_termination(game: NormalFormGame, cfg: SolveConfig, **kwargs) -> SolveReport:
    """solve() with the unilateral-termination action enabled (and the
    mutual-stay terminal rule dropped, as that variant requires)."""
    return solve(game, replace(cfg, termination_action=True), **kwargs)


def enumerate_outcomes(
    game: NormalFormGame,
    cfg: SolveConfig,
    *,
    engine: str = "auto",
    node_budget: int | None = None,
) -> frozenset[Profile]:
    """All outcomes realizable under some tie-break rule.

    Propagates outcome sets bottom-up: a node keeps, from the union of its
    children's sets, the outcomes the active player weakly prefers to the
    best child guarantee. Strict games yield singletons.
    """
    policy, rules, guard = _validate(game, cfg)
    chosen = engine
    if chosen == "auto":
        chosen = "packed" if _engine.packed_supported(game, cfg.k) else "reference"
    if chosen == "packed":
        run = _engine.run_for(
            game,
            rules,
            policy,
            use_cuts=False,
            record=False,
            depth_guard=guard,
            node_budget=node_budget,
        )
        use_cuts = cfg.nhp_enabled and game.is_strict()
        root = root_context(game, cfg.a0, rules)
        cur, ref, endors, u0, u1, prun = _engine.pack_fields(run.tables, root)
        mask = run.enumerate_mask(cur, ref, endors, u0, u1, prun, 0, use_cuts)
        return frozenset(
            game.profile_from_index(b)
            for b in range(game.num_profiles)
            if mask & (1 << b)
        )
    memo: dict = {}
    stats = [0]
    return _reference_set_value(
        game,
        rules,
        policy,
        guard,
        root_context(game, cfg.a0, rules),
        memo,
        stats,
        node_budget,
    )


StrategyLike = RecordedStrategy | Mapping | Callable


def one_deviation_check(
    game: NormalFormGame,
    cfg: SolveConfig,
    strategy: StrategyLike,
    *,
    engine: str = "auto",
    node_budget: int | None = None,
    violation_cap: int = 4096,
) -> list[Violation]:
    """Audit a strategy at every reachable context of the deviation game.

    Empty iff, everywhere, the prescribed action is legal and no single
    deviation (followed by the same strategy) improves the active player's
    continuation. Continuation values are recomputed here by replay, never
    read from the solver. A strategy that misses a reachable context raises
    StrategyCoverageError.
    """
    policy, rules, guard = _validate(game, cfg)
    if (
        engine in ("auto", "packed")
        and isinstance(strategy, RecordedStrategy)
        and strategy.source == "packed"
        and strategy.run is not None
    ):
        return _packed_oracle(game, cfg, strategy.run, policy, node_budget, violation_cap)
    if engine == "packed":
        raise ValueError("packed oracle needs a packed recorded strategy")
    return _movetree_oracle(game, cfg, strategy, policy, rules, guard, node_budget)


def _packed_oracle(game, cfg, run, policy, node_budget, violation_cap):
    root = root_context(game, cfg.a0, run.tables.rules)
    cur, ref, endors, u0, u1, prun = _engine.pack_fields(run.tables, root)
    saved_budget = run.node_budget
    run.node_budget = node_budget
    try:
        root_v, rows, count = run.oracle(cur, ref, endors, u0, u1, prun, 0, vio_cap=violation_cap)
    finally:
        run.node_budget = saved_budget
    if count > violation_cap:
        raise ResourceExhaustedError(
            f"{count} violations exceed the reporting cap; rerun with the reference engine"
        )
    out: list[Violation] = []
    for r in rows:
        meta = int(r[2])
        info = run.decode_meta(meta)
        tk = info["turn_key"]
        player = policy.player_at(tk)
        cur_id = meta & 0xF
        out.append(
            Violation(
                state=info["state"],
                reference=info["reference"],
                depth_key=tk,
                player=game.players[player],
                prescribed=run.decode_choice(int(r[3]), cur_id, tk).label(game, player),
                prescribed_outcome="",
                better=run.decode_choice(int(r[4]), cur_id, tk).label(game, player),
                better_outcome="",
                reason="suboptimal",
            )
        )
    return out


def _movetree_oracle(game, cfg, strategy, policy, rules, guard, node_budget):
    if isinstance(strategy, RecordedStrategy):
        choose = strategy.choice_at
    elif isinstance(strategy, Mapping):
        choose = lambda ctx: strategy.get(
            (ctx.current, ctx.reference, ctx.endorsers, ctx.usage,
             frozenset(ctx.pass_run), policy.turn_key(ctx.depth))
        )
    else:
        choose = strategy

    memo: dict = {}
    violations: list[Violation] = []
    stats = [0]

    def walk(ctx: PathContext) -> Profile:
        if ctx.depth > guard:
            raise InternalInvariantError(
                "depth guard exceeded: the transition rules failed to terminate"
            )
        key = (
            ctx.current,
            ctx.reference,
            ctx.endorsers,
            ctx.usage,
            frozenset(ctx.pass_run),
            policy.turn_key(ctx.depth),
        )
        cached = memo.get(key)
        if cached is not None:
            return cached
        stats[0] += 1
        if node_budget and stats[0] > node_budget:
            raise ResourceExhaustedError("node budget exceeded")
        p = next_player(policy, ctx)
        prescribed = choose(ctx)
        if prescribed is None:
            raise StrategyCoverageError(
                f"strategy missing a reachable context at "
                f"{game.profile_key(ctx.current)} (depth {ctx.depth})"
            )
        legal = legal_actions(ctx, p)
        outs: list[tuple[ActionChoice, Profile]] = []
        v_pre = None
        for choice in legal:
            nxt, verdict = apply_action(ctx, p, choice)
            out = verdict.outcome if verdict.is_terminal else walk(nxt)
            outs.append((choice, out))
            if choice == prescribed:
                v_pre = out
        if v_pre is None:
            # prescribed action is illegal here: flag it, follow the first
            # legal action so the replay can continue
            v_pre = outs[0][1]
            violations.append(
                Violation(
                    state=game.profile_key(ctx.current),
                    reference=game.profile_key(ctx.reference),
                    depth_key=policy.turn_key(ctx.depth),
                    player=game.players[p],
                    prescribed=prescribed.label(game, p),
                    prescribed_outcome=game.profile_key(v_pre),
                    better=outs[0][0].label(game, p),
                    better_outcome=game.profile_key(outs[0][1]),
                    reason="illegal",
                )
            )
        u_pre = game.payoff(v_pre, p)
        for choice, out in outs:
            if game.payoff(out, p) > u_pre:
                violations.append(
                    Violation(
                        state=game.profile_key(ctx.current),
                        reference=game.profile_key(ctx.reference),
                        depth_key=policy.turn_key(ctx.depth),
                        player=game.players[p],
                        prescribed=prescribed.label(game, p),
                        prescribed_outcome=game.profile_key(v_pre),
                        better=choice.label(game, p),
                        better_outcome=game.profile_key(out),
                    )
                )
        memo[key] = v_pre
        return v_pre

    walk(root_context(game, cfg.a0, rules))
    return violations


def path_between(
    game: NormalFormGame,
    frm: Profile,
    to: Profile,
    policy: TurnPolicy | None = None,
) -> list[TraceStep]:
    """A no-harm-vacuous route from one profile to another in one balanced
    round: each player moves straight to their target component, or passes
    when already there. Contains no stay, at most n non-pass moves."""
    game.check_profile(frm)
    game.check_profile(to)
    if policy is None:
        policy = RoundRobin(tuple(range(game.num_players)))
    rules = RuleSet(k=1, nhp_enabled=True, pass_coverage=policy.players_ever_active())
    ctx = root_context(game, frm, rules)
    steps: list[TraceStep] = []
    for d in range(game.num_players):
        p = policy.player_at(d)
        choice = PASS if ctx.current[p] == to[p] else move_to(to[p])
        nxt, verdict = apply_action(ctx, p, choice)
        steps.append(make_step(ctx, p, choice, verdict))
        ctx = nxt
    if ctx.current != tuple(to):
        raise InternalInvariantError(
            "one balanced round failed to reach the target profile"
        )
    return steps
