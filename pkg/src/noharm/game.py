"""Finite normal-form games with exact payoffs and Pareto relations.

Games are immutable after construction: players, per-player action labels,
and a total payoff table over action profiles. Payoffs are stored exactly
(int or Fraction) and compared exactly, so dominance and no-harm checks
never depend on floating-point noise.

A profile is a tuple of per-player action indices. Profile keys for I/O
join action labels with "," in player order (e.g. "C,D").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence

Profile = tuple[int, ...]
Payoff = int | Fraction


class GameFormatError(ValueError):
    """Raised when a game description is malformed."""


def _exact(value) -> Payoff:
    """Convert a parsed number to an exact payoff value."""
    if isinstance(value, bool) or not isinstance(value, (int, float, Fraction, str)):
        raise GameFormatError(f"payoff {value!r} is not a number")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise GameFormatError(f"payoff {value!r} is not finite")
        return Fraction(str(value))
    frac = Fraction(value)
    return int(frac) if frac.denominator == 1 else frac


@dataclass(frozen=True)
class StrictnessViolation:
    """Two profiles on which one player's utility collides."""

    player: int
    profile_a: Profile
    profile_b: Profile

    def describe(self, game: NormalFormGame) -> str:
        return (
            f"player {game.players[self.player]} is indifferent between "
            f"{game.profile_key(self.profile_a)} and {game.profile_key(self.profile_b)}"
        )


@dataclass(frozen=True)
class NormalFormGame:
    """An n-player normal-form game with a total exact payoff table.

    Attributes:
        players: ordered player names, length n >= 1 (n >= 2 to solve).
        actions: per-player ordered action labels, each non-empty.
        payoff_table: flat tuple of payoff vectors indexed by profile index
            (player 0 most significant).
    """

    players: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    payoff_table: tuple[tuple[Payoff, ...], ...]
    strides: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        n = len(self.players)
        if n < 1:
            raise GameFormatError("a game needs at least one player")
        if len(self.actions) != n:
            raise GameFormatError("one action list required per player")
        if len(set(self.players)) != n:
            raise GameFormatError("duplicate player names")
        for who, labels in zip(self.players, self.actions):
            if not labels:
                raise GameFormatError(f"player {who} has no actions")
            if len(set(labels)) != len(labels):
                raise GameFormatError(f"duplicate action labels for player {who}")
        strides = [1] * n
        for i in range(n - 2, -1, -1):
            strides[i] = strides[i + 1] * len(self.actions[i + 1])
        object.__setattr__(self, "strides", tuple(strides))
        if len(self.payoff_table) != self.num_profiles:
            raise GameFormatError(
                f"payoff table has {len(self.payoff_table)} entries, "
                f"expected {self.num_profiles}"
            )
        for vec in self.payoff_table:
            if len(vec) != n:
                raise GameFormatError("payoff vector length does not match player count")

    # -- indexing ---------------------------------------------------------

    @property
    def num_players(self) -> int:
        return len(self.players)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.actions)

    @property
    def num_profiles(self) -> int:
        return self.strides[0] * len(self.actions[0])

    def profiles(self) -> Iterable[Profile]:
        return product(*(range(len(a)) for a in self.actions))

    def profile_index(self, profile: Profile) -> int:
        self.check_profile(profile)
        return sum(c * s for c, s in zip(profile, self.strides))

    def profile_from_index(self, index: int) -> Profile:
        index = int(index)
        return tuple(
            (index // s) % len(a) for s, a in zip(self.strides, self.actions)
        )

    def check_profile(self, profile: Profile) -> None:
        if len(profile) != self.num_players:
            raise ValueError(f"profile {profile!r} has wrong length")
        for i, c in enumerate(profile):
            if not isinstance(c, int) or not 0 <= c < len(self.actions[i]):
                raise ValueError(
                    f"profile {profile!r} is out of range for player "
                    f"{self.players[i]}"
                )

    # -- payoffs ----------------------------------------------------------

    def payoff_vector(self, profile: Profile) -> tuple[Payoff, ...]:
        return self.payoff_table[self.profile_index(profile)]

    def payoff(self, profile: Profile, player: int) -> Payoff:
        return self.payoff_vector(profile)[player]

    # -- labels -----------------------------------------------------------

    def profile_key(self, profile: Profile) -> str:
        self.check_profile(profile)
        return ",".join(self.actions[i][c] for i, c in enumerate(profile))

    def profile_from_key(self, key: str) -> Profile:
        labels = key.split(",")
        if len(labels) != self.num_players:
            raise ValueError(f"profile key {key!r} has wrong arity")
        out = []
        for i, label in enumerate(labels):
            try:
                out.append(self.actions[i].index(label))
            except ValueError:
                raise ValueError(
                    f"unknown action {label!r} for player {self.players[i]}"
                ) from None
        return tuple(out)

    # -- strictness -------------------------------------------------------

    def strictness_violations(self) -> list[StrictnessViolation]:
        """All per-player utility collisions; empty iff the game is strict."""
        out: list[StrictnessViolation] = []
        for p in range(self.num_players):
            seen: dict[Payoff, int] = {}
            for idx, vec in enumerate(self.payoff_table):
                u = vec[p]
                if u in seen:
                    out.append(
                        StrictnessViolation(
                            p,
                            self.profile_from_index(seen[u]),
                            self.profile_from_index(idx),
                        )
                    )
                else:
                    seen[u] = idx
        return out

    def is_strict(self) -> bool:
        return not self.strictness_violations()


def make_game(
    players: Sequence[str],
    actions: Sequence[Sequence[str]],
    payoffs: Mapping[tuple, Sequence],
) -> NormalFormGame:
    """Build a game from a mapping of label- or index-profiles to payoffs."""
    players = tuple(players)
    actions = tuple(tuple(a) for a in actions)
    n = len(players)
    strides = [1] * n
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * len(actions[i + 1])
    total = strides[0] * len(actions[0]) if n else 0
    table: list = [None] * total
    for prof, vec in payoffs.items():
        if len(prof) != n:
            raise GameFormatError(f"profile {prof!r} has wrong arity")
        idxs = []
        for i, c in enumerate(prof):
            if isinstance(c, str):
                if c not in actions[i]:
                    raise GameFormatError(f"unknown action {c!r} for player {players[i]}")
                idxs.append(actions[i].index(c))
            else:
                idxs.append(int(c))
        flat = sum(c * s for c, s in zip(idxs, strides))
        if table[flat] is not None:
            raise GameFormatError(f"duplicate payoff entry for profile {prof!r}")
        if len(vec) != n:
            raise GameFormatError(f"payoff vector for {prof!r} has wrong length")
        table[flat] = tuple(_exact(v) for v in vec)
    missing = [i for i, v in enumerate(table) if v is None]
    if missing:
        raise GameFormatError(f"payoffs missing for {len(missing)} profiles")
    return NormalFormGame(players, actions, tuple(table))


# -- JSON game files -------------------------------------------------------

_GAME_KEYS = {"players", "actions", "payoffs"}


def game_from_json_dict(doc: dict) -> NormalFormGame:
    """Parse the JSON game-file object (players/actions/payoffs)."""
    if not isinstance(doc, dict):
        raise GameFormatError("game file must contain a JSON object")
    keys = set(doc)
    if keys != _GAME_KEYS:
        missing = _GAME_KEYS - keys
        extra = keys - _GAME_KEYS
        parts = []
        if missing:
            parts.append(f"missing keys {sorted(missing)}")
        if extra:
            parts.append(f"unknown keys {sorted(extra)}")
        raise GameFormatError("bad game file: " + ", ".join(parts))
    players = doc["players"]
    actions = doc["actions"]
    payoffs = doc["payoffs"]
    if (
        not isinstance(players, list)
        or not players
        or not all(isinstance(p, str) for p in players)
    ):
        raise GameFormatError('"players" must be a non-empty array of strings')
    if (
        not isinstance(actions, list)
        or len(actions) != len(players)
        or not all(
            isinstance(a, list) and a and all(isinstance(x, str) for x in a)
            for a in actions
        )
    ):
        raise GameFormatError(
            '"actions" must hold one non-empty array of strings per player'
        )
    if not isinstance(payoffs, dict):
        raise GameFormatError('"payoffs" must be an object keyed by profile')
    game_actions = tuple(tuple(a) for a in actions)
    by_profile: dict[tuple, Sequence] = {}
    for key, vec in payoffs.items():
        labels = tuple(key.split(","))
        if len(labels) != len(players):
            raise GameFormatError(f"profile key {key!r} has wrong arity")
        if not isinstance(vec, list):
            raise GameFormatError(f"payoffs[{key!r}] must be an array")
        by_profile[labels] = vec
    return make_game(players, game_actions, by_profile)


def load_game(path) -> NormalFormGame:
    """Load a game from a JSON file, preserving numbers exactly."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(
                fh,
                parse_float=lambda s: Fraction(s),
                parse_constant=_reject_constant,
            )
        except json.JSONDecodeError as exc:
            raise GameFormatError(f"invalid JSON in {path}: {exc}") from exc
    return game_from_json_dict(doc)


def _reject_constant(name: str):
    raise GameFormatError(f"non-finite number {name!r} in game file")


def game_to_json_dict(game: NormalFormGame) -> dict:
    return {
        "players": list(game.players),
        "actions": [list(a) for a in game.actions],
        "payoffs": {
            game.profile_key(p): [payoff_to_json(v) for v in game.payoff_vector(p)]
            for p in game.profiles()
        },
    }


def payoff_to_json(value: Payoff):
    """Exact JSON form: int stays int, non-integer rationals become 'p/q'."""
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return int(value)
        return f"{value.numerator}/{value.denominator}"
    return value


# -- Pareto relations ------------------------------------------------------


def pareto_dominates(a: Profile, b: Profile, game: NormalFormGame) -> bool:
    """True iff a is weakly better for everyone and strictly for someone."""
    ua = game.payoff_vector(a)
    ub = game.payoff_vector(b)
    strict = False
    for x, y in zip(ua, ub):
        if x < y:
            return False
        if x > y:
            strict = True
    return strict


def strictly_dominates(a: Profile, b: Profile, game: NormalFormGame) -> bool:
    """True iff a is strictly better than b for every player."""
    ua = game.payoff_vector(a)
    ub = game.payoff_vector(b)
    return all(x > y for x, y in zip(ua, ub))


def pareto_optimal_set(game: NormalFormGame) -> set[Profile]:
    """Profiles not Pareto dominated by any profile."""
    profs = list(game.profiles())
    return {
        b
        for b in profs
        if not any(pareto_dominates(a, b, game) for a in profs if a != b)
    }


def weakly_pareto_optimal_set(game: NormalFormGame) -> set[Profile]:
    """Profiles not strictly dominated by any profile."""
    profs = list(game.profiles())
    return {
        b
        for b in profs
        if not any(strictly_dominates(a, b, game) for a in profs if a != b)
    }


def validate_strict(game: NormalFormGame) -> list[StrictnessViolation]:
    """Alias for strictness_violations(); empty list iff strict."""
    return game.strictness_violations()


def pure_nash_profiles(game: NormalFormGame) -> set[Profile]:
    """Pure Nash equilibria of the one-shot game, by brute force."""
    out: set[Profile] = set()
    for prof in game.profiles():
        u = game.payoff_vector(prof)
        best = True
        for p in range(game.num_players):
            for alt in range(len(game.actions[p])):
                if alt == prof[p]:
                    continue
                dev = prof[:p] + (alt,) + prof[p + 1 :]
                if game.payoff(dev, p) > u[p]:
                    best = False
                    break
            if not best:
                break
        if best:
            out.add(prof)
    return out
