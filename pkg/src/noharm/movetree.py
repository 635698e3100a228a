"""The sequential-deviation game, defined implicitly through path contexts.

Starting from a reference profile of a normal-form game, players take turns
choosing to stay at the current profile, move their own component, or pass.
A stay endorses the current profile and makes it the reference point; once
enough distinct players endorse the same persisting reference the game ends
there. A full streak of passes ends the game at the current reference.

Each player may make the same concrete choice at the same profile at most k
times along a path, which keeps every play finite. Contexts are immutable
values; applying an action yields a fresh context plus a terminal verdict,
so the game tree is never materialized.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

from .game import NormalFormGame, Profile


class ContractViolationError(ValueError):
    """An operation was called outside its contract (illegal choice, wrong player)."""


class PolicyError(RuntimeError):
    """A turn policy could not produce an active player."""


# -- action choices ---------------------------------------------------------


class ChoiceKind(Enum):
    STAY = "stay"
    MOVE = "move"
    PASS = "pass"
    TERMINATE = "terminate"


@dataclass(frozen=True)
class ActionChoice:
    """One node action: keep the current component, change it, cede the turn,
    or (variant only) end the game at the current profile."""

    kind: ChoiceKind
    target: int | None = None

    def __post_init__(self):
        if self.kind is ChoiceKind.MOVE:
            if self.target is None:
                raise ValueError("a move needs a target action index")
        elif self.target is not None:
            raise ValueError(f"{self.kind.value} takes no target")

    def label(self, game: NormalFormGame | None = None, player: int | None = None) -> str:
        if self.kind is ChoiceKind.MOVE:
            if game is not None and player is not None:
                return f"move:{game.actions[player][self.target]}"
            return f"move:{self.target}"
        return self.kind.value


STAY = ActionChoice(ChoiceKind.STAY)
PASS = ActionChoice(ChoiceKind.PASS)
TERMINATE = ActionChoice(ChoiceKind.TERMINATE)


def move_to(target: int) -> ActionChoice:
    return ActionChoice(ChoiceKind.MOVE, target)


# -- rules ------------------------------------------------------------------


@dataclass(frozen=True)
class RuleSet:
    """Fixed parameters of one deviation game.

    Attributes:
        k: per-(player, profile, choice) repetition cap, >= 1.
        nhp_enabled: filter stays (and terminations) through the no-harm test.
        termination_action: enable the unilateral terminate action; this
            disables the mutual-stay terminal condition.
        stay_threshold: number of distinct endorsers of a persisting
            reference needed to end the game (2 in the base rules).
        pass_coverage: players a pass streak must cover to end the game.
            Defaults to everyone; a degenerate single-player order narrows it
            to the only player who ever acts, since a streak can never cover
            players the order never activates.
    """

    k: int = 1
    nhp_enabled: bool = True
    termination_action: bool = False
    stay_threshold: int = 2
    pass_coverage: frozenset[int] | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.stay_threshold < 2:
            raise ValueError("stay_threshold must be at least 2")


class VerdictKind(Enum):
    NOT_TERMINAL = "not_terminal"
    MUTUAL_STAY = "mutual_stay"
    ALL_PASS = "all_pass"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class TerminalVerdict:
    kind: VerdictKind
    outcome: Profile | None = None

    @property
    def is_terminal(self) -> bool:
        return self.kind is not VerdictKind.NOT_TERMINAL

    def label(self) -> str:
        return self.kind.value


NOT_TERMINAL = TerminalVerdict(VerdictKind.NOT_TERMINAL)


# -- path contexts ----------------------------------------------------------


def usage_bits(k: int) -> int:
    return max(1, k.bit_length())


@dataclass(frozen=True)
class PathContext:
    """Full path-dependent state of one node of the deviation game.

    usage packs the per-(player, profile, choice) counters into one integer,
    `usage_bits(k)` bits per counter; read them through usage_count().
    pass_run lists the distinct players of the current uninterrupted pass
    streak in order. endorsers holds the players who stayed at the current
    reference since it became the reference; last_stayer is the most recent.
    """

    game: NormalFormGame
    rules: RuleSet
    current: Profile
    reference: Profile
    endorsers: frozenset[int]
    last_stayer: int | None
    usage: int
    pass_run: tuple[int, ...]
    depth: int

    def _slot(self, player: int, profile: Profile, action: int) -> int:
        g = self.game
        state = g.profile_index(profile)
        maxa = max(g.sizes)
        return (player * g.num_profiles + state) * maxa + action

    def usage_count(self, player: int, profile: Profile, action: int) -> int:
        bits = usage_bits(self.rules.k)
        mask = (1 << bits) - 1
        return (self.usage >> (self._slot(player, profile, action) * bits)) & mask

    def _bump_usage(self, player: int, action: int) -> int:
        bits = usage_bits(self.rules.k)
        return self.usage + (1 << (self._slot(player, self.current, action) * bits))

    @property
    def k(self) -> int:
        return self.rules.k

    def coverage(self) -> frozenset[int]:
        if self.rules.pass_coverage is not None:
            return self.rules.pass_coverage
        return frozenset(range(self.game.num_players))


def root_context(game: NormalFormGame, a0: Profile, rules: RuleSet) -> PathContext:
    game.check_profile(a0)
    return PathContext(
        game=game,
        rules=rules,
        current=tuple(a0),
        reference=tuple(a0),
        endorsers=frozenset(),
        last_stayer=None,
        usage=0,
        pass_run=(),
        depth=0,
    )


# -- node operations --------------------------------------------------------


def nhp_allows_stay(ctx: PathContext, player: int) -> bool:
    """No-harm test: staying is allowed iff nobody else falls below the
    current reference point."""
    u_cur = ctx.game.payoff_vector(ctx.current)
    u_ref = ctx.game.payoff_vector(ctx.reference)
    return all(
        u_cur[j] >= u_ref[j]
        for j in range(ctx.game.num_players)
        if j != player
    )


def legal_actions(ctx: PathContext, player: int, policy=None) -> list[ActionChoice]:
    """Actions available to `player` at this context, in canonical order
    (stay, moves by ascending action index, pass, terminate).

    When a policy is given, the caller's player is checked against it.
    """
    if policy is not None:
        expected = next_player(policy, ctx)
        if expected != player:
            raise ContractViolationError(
                f"player {player} acted but the policy names {expected}"
            )
    if not 0 <= player < ctx.game.num_players:
        raise ContractViolationError(f"no such player index {player}")
    rules = ctx.rules
    own = ctx.current[player]
    out: list[ActionChoice] = []
    if ctx.usage_count(player, ctx.current, own) < rules.k and (
        not rules.nhp_enabled or nhp_allows_stay(ctx, player)
    ):
        out.append(STAY)
    for a in range(len(ctx.game.actions[player])):
        if a != own and ctx.usage_count(player, ctx.current, a) < rules.k:
            out.append(move_to(a))
    out.append(PASS)
    if rules.termination_action and (
        not rules.nhp_enabled or nhp_allows_stay(ctx, player)
    ):
        out.append(TERMINATE)
    return out


def apply_action(
    ctx: PathContext, player: int, choice: ActionChoice
) -> tuple[PathContext, TerminalVerdict]:
    """Apply one choice, returning the successor context and a verdict.

    Contexts are never mutated; terminal verdicts carry the implemented
    outcome (the persisting reference for mutual stays and pass streaks,
    the current profile for unilateral termination).
    """
    if choice not in legal_actions(ctx, player):
        raise ContractViolationError(
            f"choice {choice.label(ctx.game, player)} is not legal for player "
            f"{ctx.game.players[player]} at {ctx.game.profile_key(ctx.current)}"
        )
    rules = ctx.rules
    if choice.kind is ChoiceKind.MOVE:
        new_current = (
            ctx.current[:player] + (choice.target,) + ctx.current[player + 1 :]
        )
        nxt = replace(
            ctx,
            current=new_current,
            usage=ctx._bump_usage(player, choice.target),
            pass_run=(),
            depth=ctx.depth + 1,
        )
        return nxt, NOT_TERMINAL
    if choice.kind is ChoiceKind.STAY:
        endorsers = (
            ctx.endorsers | {player}
            if ctx.current == ctx.reference
            else frozenset({player})
        )
        nxt = replace(
            ctx,
            reference=ctx.current,
            endorsers=endorsers,
            last_stayer=player,
            usage=ctx._bump_usage(player, ctx.current[player]),
            pass_run=(),
            depth=ctx.depth + 1,
        )
        if not rules.termination_action and len(endorsers) >= rules.stay_threshold:
            return nxt, TerminalVerdict(VerdictKind.MUTUAL_STAY, ctx.current)
        return nxt, NOT_TERMINAL
    if choice.kind is ChoiceKind.PASS:
        run = ctx.pass_run if player in ctx.pass_run else ctx.pass_run + (player,)
        nxt = replace(ctx, pass_run=run, depth=ctx.depth + 1)
        if set(run) >= ctx.coverage():
            return nxt, TerminalVerdict(VerdictKind.ALL_PASS, ctx.reference)
        return nxt, NOT_TERMINAL
    # terminate
    nxt = replace(ctx, depth=ctx.depth + 1)
    return nxt, TerminalVerdict(VerdictKind.TERMINATED, ctx.current)


def depth_bound(game: NormalFormGame, k: int) -> int:
    """Every play ends within this many steps: each of the
    n*|A|*max|A_i|*k concrete choices allows at most n-1 interleaved passes,
    plus one final full pass streak."""
    n = game.num_players
    budget = n * game.num_profiles * max(game.sizes) * k
    return budget * n + n


# -- turn policies ----------------------------------------------------------


class TurnPolicy:
    """Rule assigning the active player to every depth of the game."""

    num_players: int

    def player_at(self, depth: int) -> int:
        raise NotImplementedError

    def turn_key(self, depth: int) -> int:
        """Key capturing the future player sequence from this depth; used
        for caching. Defaults to the depth itself."""
        return depth

    def players_ever_active(self) -> frozenset[int]:
        return frozenset(range(self.num_players))

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RoundRobin(TurnPolicy):
    """Cyclic order: player order[d % n] acts at depth d."""

    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"order {self.order!r} is not a permutation")

    @property
    def num_players(self) -> int:
        return len(self.order)

    def player_at(self, depth: int) -> int:
        return self.order[depth % len(self.order)]

    def turn_key(self, depth: int) -> int:
        return depth % len(self.order)

    def describe(self) -> dict:
        return {"kind": "round_robin", "order": list(self.order)}


@dataclass(frozen=True)
class TablePolicy(TurnPolicy):
    """Explicit per-depth player list; must satisfy the balance constraint."""

    seq: tuple[int, ...]
    players: int
    note: str = ""

    def __post_init__(self):
        if not validate_turn_balance(self.seq, self.players):
            raise ValueError("turn table violates the balance constraint")

    @property
    def num_players(self) -> int:
        return self.players

    def player_at(self, depth: int) -> int:
        try:
            return self.seq[depth]
        except IndexError:
            raise PolicyError(
                f"turn table of length {len(self.seq)} exhausted at depth {depth}"
            ) from None

    def describe(self) -> dict:
        doc = {"kind": "table", "length": len(self.seq)}
        if self.note:
            doc["note"] = self.note
        return doc


NATURE_ALGORITHM = "mt19937-block-weighted-draw-without-replacement"


class NatureSampled(TurnPolicy):
    """Order drawn by Nature: each block of n turns is a fresh permutation,
    sampled without replacement with weights q renormalized over the players
    not yet drawn in the block. Deterministic for a fixed seed."""

    def __init__(self, q: Sequence, seed: int):
        qs = tuple(Fraction(str(x)) if not isinstance(x, (int, Fraction)) else Fraction(x) for x in q)
        if any(x <= 0 for x in qs):
            raise ValueError("every player needs positive weight")
        if sum(qs) != 1:
            raise ValueError(f"weights must sum to 1, got {sum(qs)}")
        self.q = qs
        self.seed = seed
        self._rng = random.Random(seed)
        self._blocks: list[tuple[int, ...]] = []

    @property
    def num_players(self) -> int:
        return len(self.q)

    def _ensure_blocks(self, count: int) -> None:
        while len(self._blocks) < count:
            remaining = list(range(self.num_players))
            weights = [float(self.q[i]) for i in remaining]
            block = []
            while remaining:
                r = self._rng.random() * sum(weights)
                acc = 0.0
                pick = len(remaining) - 1
                for idx, w in enumerate(weights):
                    acc += w
                    if r < acc:
                        pick = idx
                        break
                block.append(remaining.pop(pick))
                weights.pop(pick)
            self._blocks.append(tuple(block))

    def player_at(self, depth: int) -> int:
        n = self.num_players
        self._ensure_blocks(depth // n + 1)
        return self._blocks[depth // n][depth % n]

    def materialize(self, length: int) -> TablePolicy:
        seq = tuple(self.player_at(d) for d in range(length))
        return TablePolicy(
            seq,
            self.num_players,
            note=f"nature seed={self.seed} algorithm={NATURE_ALGORITHM}",
        )

    def describe(self) -> dict:
        return {
            "kind": "nature",
            "q": [str(x) for x in self.q],
            "seed": self.seed,
            "algorithm": NATURE_ALGORITHM,
        }


class UncheckedDegenerate(TurnPolicy):
    """A fixed player acts at every node. Violates the balance constraint;
    only constructible with allow_unbalanced=True."""

    def __init__(self, player: int, num_players: int, *, allow_unbalanced: bool = False):
        if not allow_unbalanced:
            raise ValueError(
                "degenerate orders break the balance constraint; "
                "pass allow_unbalanced=True to build one anyway"
            )
        if not 0 <= player < num_players:
            raise ValueError("player index out of range")
        self.player = player
        self._n = num_players

    @property
    def num_players(self) -> int:
        return self._n

    def player_at(self, depth: int) -> int:
        return self.player

    def turn_key(self, depth: int) -> int:
        return 0

    def players_ever_active(self) -> frozenset[int]:
        return frozenset({self.player})

    def describe(self) -> dict:
        return {"kind": "unchecked_degenerate", "player": self.player}


def next_player(policy: TurnPolicy, ctx: PathContext) -> int:
    return policy.player_at(ctx.depth)


def validate_turn_balance(seq: Iterable[int], num_players: int) -> bool:
    """True iff every prefix keeps all players' activity counts within 1 of
    each other (players that never appear count as zero)."""
    counts = [0] * num_players
    for p in seq:
        if not 0 <= p < num_players:
            return False
        counts[p] += 1
        if max(counts) - min(counts) > 1:
            return False
    return True


# -- traces -----------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    """One record of a path trace: who did what where, and what it ended."""

    depth: int
    player: str
    state: str
    reference: str
    choice: str
    verdict: str

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "player": self.player,
            "state": self.state,
            "reference": self.reference,
            "choice": self.choice,
            "verdict": self.verdict,
        }


def make_step(
    ctx: PathContext, player: int, choice: ActionChoice, verdict: TerminalVerdict
) -> TraceStep:
    g = ctx.game
    return TraceStep(
        depth=ctx.depth,
        player=g.players[player],
        state=g.profile_key(ctx.current),
        reference=g.profile_key(ctx.reference),
        choice=choice.label(g, player),
        verdict=verdict.label(),
    )


def trace_to_jsonl(steps: Sequence[TraceStep]) -> str:
    return "\n".join(json.dumps(s.to_dict(), sort_keys=True) for s in steps)


def trace_to_dot(steps: Sequence[TraceStep], name: str = "trace") -> str:
    """Render a trace as a DOT chain: nodes show state and reference,
    edges show the player's choice."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for i, s in enumerate(steps):
        lines.append(f'  n{i} [label="{s.state}\\nref {s.reference}"];')
    last = len(steps)
    final = steps[-1] if steps else None
    tail_label = final.verdict if final else "empty"
    lines.append(f'  n{last} [label="{tail_label}", shape=box];')
    for i, s in enumerate(steps):
        lines.append(f'  n{i} -> n{i + 1} [label="{s.player}: {s.choice}"];')
    lines.append("}")
    return "\n".join(lines)
