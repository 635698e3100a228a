"""Canonical small games used across tests, sweeps, and the CLI."""

from __future__ import annotations

from .game import NormalFormGame, make_game


def pd() -> NormalFormGame:
    """Prisoners' dilemma."""
    return make_game(
        ["Row", "Column"],
        [["C", "D"], ["C", "D"]],
        {
            ("C", "C"): (3, 3),
            ("C", "D"): (1, 4),
            ("D", "C"): (4, 1),
            ("D", "D"): (2, 2),
        },
    )


def stag_hunt() -> NormalFormGame:
    return make_game(
        ["Row", "Column"],
        [["Stag", "Hare"], ["Stag", "Hare"]],
        {
            ("Stag", "Stag"): (4, 4),
            ("Stag", "Hare"): (1, 3),
            ("Hare", "Stag"): (3, 1),
            ("Hare", "Hare"): (2, 2),
        },
    )


def hawk_dove() -> NormalFormGame:
    return make_game(
        ["Row", "Column"],
        [["Hawk", "Dove"], ["Hawk", "Dove"]],
        {
            ("Hawk", "Hawk"): (1, 1),
            ("Hawk", "Dove"): (4, 2),
            ("Dove", "Hawk"): (2, 4),
            ("Dove", "Dove"): (3, 3),
        },
    )


def game22() -> NormalFormGame:
    """Game 22 of Brams's 2x2 taxonomy: three Pareto-optimal profiles, only
    one of which is the unconstrained non-myopic outcome."""
    return make_game(
        ["Row", "Column"],
        [["A", "B"], ["C", "D"]],
        {
            ("A", "C"): (2, 4),
            ("A", "D"): (3, 3),
            ("B", "C"): (1, 2),
            ("B", "D"): (4, 1),
        },
    )


def three_player() -> NormalFormGame:
    """Two 2x2 matrices selected by the third player; the turn order decides
    which Pareto-optimal profile the play settles on."""
    return make_game(
        ["Row", "Column", "Matrix"],
        [["A", "B"], ["C", "D"], ["E", "F"]],
        {
            ("A", "C", "E"): (1, 6, 1),
            ("A", "D", "E"): (3, 1, 2),
            ("B", "C", "E"): (2, 7, 3),
            ("B", "D", "E"): (8, 8, 4),
            ("A", "C", "F"): (5, 2, 6),
            ("A", "D", "F"): (7, 5, 8),
            ("B", "C", "F"): (6, 3, 7),
            ("B", "D", "F"): (4, 4, 5),
        },
    )


def nonmyopic_demo() -> NormalFormGame:
    """With the no-harm filter off, farsighted play from (1,4) settles on
    (3,2) even though (4,3) dominates it."""
    return make_game(
        ["Row", "Column"],
        [["L", "R"], ["L", "R"]],
        {
            ("L", "L"): (4, 3),
            ("L", "R"): (1, 4),
            ("R", "L"): (2, 1),
            ("R", "R"): (3, 2),
        },
    )


def stay_trap() -> NormalFormGame:
    """Without farsighted rationality, no-harm-compatible staying can walk
    play from (2,2) down to (1,0); the one-deviation oracle flags it."""
    return make_game(
        ["Row", "Column"],
        [["L", "R"], ["L", "R"]],
        {
            ("L", "L"): (2, 2),
            ("L", "R"): (0, 3),
            ("R", "L"): (1, 0),
            ("R", "R"): (4, 4),
        },
    )


def weak_tie() -> NormalFormGame:
    """A single indifference for Row; outcome sets need not be singletons."""
    return make_game(
        ["Row", "Column"],
        [["L", "R"], ["L", "R"]],
        {
            ("L", "L"): (2, 1),
            ("L", "R"): (2, 4),
            ("R", "L"): (1, 2),
            ("R", "R"): (3, 3),
        },
    )


def weak_all_tie() -> NormalFormGame:
    """Every payoff identical: every choice ties everywhere."""
    return make_game(
        ["Row", "Column"],
        [["L", "R"], ["L", "R"]],
        {
            ("L", "L"): (1, 1),
            ("L", "R"): (1, 1),
            ("R", "L"): (1, 1),
            ("R", "R"): (1, 1),
        },
    )


FIXTURES = {
    "pd": pd,
    "stag_hunt": stag_hunt,
    "hawk_dove": hawk_dove,
    "game22": game22,
    "three_player": three_player,
    "nonmyopic_demo": nonmyopic_demo,
    "stay_trap": stay_trap,
    "weak_tie": weak_tie,
    "weak_all_tie": weak_all_tie,
}

STRICT_FIXTURES = (
    "pd",
    "stag_hunt",
    "hawk_dove",
    "game22",
    "three_player",
    "nonmyopic_demo",
    "stay_trap",
)


def fixture_game(name: str) -> NormalFormGame:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ValueError(
            f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}"
        ) from None
