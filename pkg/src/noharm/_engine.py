"""Driver for the packed kernels: table building, buffers, and runs.

Builds per-game lookup tables (payoff ranks, no-harm stay permissions,
move transitions, reference-feasibility bounds) and owns the probe-table
buffers a run writes into. The no-harm permission table is generated by
calling the movetree predicate, so the packed engine cannot drift from the
reference semantics.

The reference-feasibility cuts rest on an exact invariant of the no-harm
rules: every continuation value of a context leaves no player below the
current reference point (passing guarantees the reference to the active
player; every legal stay or termination protects the others; induction
closes the argument). Hence values live in F(ref) = {outcomes weakly above
ref for everyone}: a node whose reference has F(ref) = {ref} is worth ref
outright, and a child attaining the best feasible rank cannot be beaten.
With the no-harm filter off, only the trivial global-maximum cut applies.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import _kernels as K
from .errors import ResourceExhaustedError
from .game import NormalFormGame, Profile
from .movetree import (
    ChoiceKind,
    PASS,
    STAY,
    TERMINATE,
    ActionChoice,
    PathContext,
    RoundRobin,
    RuleSet,
    TablePolicy,
    TurnPolicy,
    UncheckedDegenerate,
    depth_bound,
    move_to,
    nhp_allows_stay,
    root_context,
    usage_bits,
)

sys.setrecursionlimit(200_000)

MAX_META_STATES = 16
MAX_CHILDREN = 8
WORD_BITS = 60


@dataclass
class GameTables:
    """Packed lookup tables for one (game, rules) pair."""

    game: NormalFormGame
    rules: RuleSet
    n: int
    s_states: int
    maxa: int
    bits: int
    spw: int
    sizes: np.ndarray
    rank: np.ndarray
    nhpok: np.ndarray
    trans: np.ndarray
    ownc: np.ndarray
    fmax_on: np.ndarray
    fmax_off: np.ndarray
    fsingle: np.ndarray
    depth_cap: int


def packed_supported(game: NormalFormGame, k: int) -> bool:
    s = game.num_profiles
    maxa = max(game.sizes)
    slots = game.num_players * s * maxa
    bits = usage_bits(k)
    spw = WORD_BITS // bits
    words = (slots + spw - 1) // spw
    return (
        s <= MAX_META_STATES
        and maxa + 2 <= MAX_CHILDREN
        and words <= 2
        and game.num_players <= 4
    )


def build_tables(game: NormalFormGame, rules: RuleSet) -> GameTables:
    n = game.num_players
    s = game.num_profiles
    maxa = max(game.sizes)
    bits = usage_bits(rules.k)
    spw = WORD_BITS // bits
    if not packed_supported(game, rules.k):
        raise ValueError("game too large for the packed engine")

    rank = np.zeros((s, n), dtype=np.int64)
    for p in range(n):
        ordered = sorted({game.payoff_table[i][p] for i in range(s)})
        level = {u: r for r, u in enumerate(ordered)}
        for i in range(s):
            rank[i, p] = level[game.payoff_table[i][p]]

    # stay/terminate permission straight from the movetree predicate
    nhpok = np.zeros((s, s, n), dtype=np.bool_)
    for ci in range(s):
        for ri in range(s):
            ctx = PathContext(
                game=game,
                rules=rules,
                current=game.profile_from_index(ci),
                reference=game.profile_from_index(ri),
                endorsers=frozenset(),
                last_stayer=None,
                usage=0,
                pass_run=(),
                depth=0,
            )
            for p in range(n):
                nhpok[ci, ri, p] = nhp_allows_stay(ctx, p)

    trans = np.zeros((s, n, maxa), dtype=np.int64)
    ownc = np.zeros((s, n), dtype=np.int64)
    for i in range(s):
        prof = game.profile_from_index(i)
        for p in range(n):
            ownc[i, p] = prof[p]
            for a in range(maxa):
                if a < game.sizes[p]:
                    trans[i, p, a] = game.profile_index(
                        prof[:p] + (a,) + prof[p + 1 :]
                    )

    fmax_on = np.zeros((s, n), dtype=np.int64)
    fsingle = np.zeros(s, dtype=np.uint8)
    for ri in range(s):
        feas = [
            o
            for o in range(s)
            if all(rank[o, j] >= rank[ri, j] for j in range(n))
        ]
        fsingle[ri] = 1 if len(feas) == 1 else 0
        for p in range(n):
            fmax_on[ri, p] = max(rank[o, p] for o in feas)
    fmax_off = np.repeat(rank.max(axis=0)[None, :], s, axis=0).astype(np.int64)

    return GameTables(
        game=game,
        rules=rules,
        n=n,
        s_states=s,
        maxa=maxa,
        bits=bits,
        spw=spw,
        sizes=np.array(game.sizes, dtype=np.int64),
        rank=rank,
        nhpok=nhpok,
        trans=trans,
        ownc=ownc,
        fmax_on=fmax_on,
        fmax_off=fmax_off,
        fsingle=fsingle,
        depth_cap=depth_bound(game, rules.k),
    )


def encode_policy(policy: TurnPolicy) -> tuple[int, np.ndarray]:
    if isinstance(policy, RoundRobin):
        return 0, np.array(policy.order, dtype=np.int64)
    if isinstance(policy, TablePolicy):
        return 1, np.array(policy.seq, dtype=np.int64)
    if isinstance(policy, UncheckedDegenerate):
        return 2, np.array([policy.player], dtype=np.int64)
    raise ValueError(f"packed engine cannot encode policy {policy!r}")


def coverage_mask(policy: TurnPolicy) -> int:
    mask = 0
    for p in policy.players_ever_active():
        mask |= 1 << p
    return mask


def pack_usage(tables: GameTables, ctx: PathContext) -> tuple[int, int]:
    u0 = 0
    u1 = 0
    g = tables.game
    for p in range(tables.n):
        for si in range(tables.s_states):
            prof = g.profile_from_index(si)
            for a in range(g.sizes[p]):
                cnt = ctx.usage_count(p, prof, a)
                if cnt:
                    slot = (p * tables.s_states + si) * tables.maxa + a
                    w, sh = divmod(slot, tables.spw)
                    if w == 0:
                        u0 += cnt << (sh * tables.bits)
                    else:
                        u1 += cnt << ((slot % tables.spw) * tables.bits)
    return u0, u1


def pack_fields(tables: GameTables, ctx: PathContext) -> tuple[int, int, int, int, int, int]:
    g = tables.game
    cur = g.profile_index(ctx.current)
    ref = g.profile_index(ctx.reference)
    endors = 0
    for p in ctx.endorsers:
        endors |= 1 << p
    prun = 0
    for p in ctx.pass_run:
        prun |= 1 << p
    u0, u1 = pack_usage(tables, ctx)
    return cur, ref, endors, u0, u1, prun


class EngineRun:
    """One packed solve with its probe table, reusable for value queries,
    recorded-strategy lookups, and the one-deviation pass."""

    def __init__(
        self,
        tables: GameTables,
        policy: TurnPolicy,
        *,
        use_cuts: bool,
        record: bool,
        depth_guard: int,
        node_budget: int | None,
        table_bits: int,
        max_table_bits: int = 23,
    ):
        self.tables = tables
        self.policy = policy
        self.use_cuts = use_cuts
        self.record = record
        self.depth_guard = depth_guard
        self.node_budget = node_budget
        self.policy_mode, self.porder = encode_policy(policy)
        self.coverage = coverage_mask(policy)
        self.table_bits = table_bits
        self.max_table_bits = max_table_bits
        self._alloc(table_bits)
        self.stats = np.zeros(K.N_STATS, dtype=np.int64)
        self.vval: np.ndarray | None = None

    def _alloc(self, bits: int) -> None:
        size = 1 << bits
        self.table_bits = bits
        self.tmask = size - 1
        self.ku0 = np.zeros(size, dtype=np.int64)
        self.ku1 = np.zeros(size, dtype=np.int64)
        self.kmeta = np.full(size, K.EMPTY, dtype=np.int64)
        self.val = np.zeros(size, dtype=np.int64)
        self.strat = np.zeros(size, dtype=np.int64)
        if hasattr(self, "stats"):
            self.stats[K.ST_ENTRIES] = 0

    def _fresh_stats(self) -> None:
        entries = self.stats[K.ST_ENTRIES]  # table occupancy outlives runs
        self.stats[:] = 0
        self.stats[K.ST_ENTRIES] = entries
        self.stats[K.ST_CAPACITY] = (self.tmask + 1) * 4 // 5
        self.stats[K.ST_NODE_BUDGET] = self.node_budget or 0

    def _fmax(self) -> np.ndarray:
        return self.tables.fmax_on if self.tables.rules.nhp_enabled else self.tables.fmax_off

    def _fsingle(self) -> np.ndarray:
        # the F(ref) = {ref} shortcut is only sound under the no-harm filter
        if self.tables.rules.nhp_enabled:
            return self.tables.fsingle
        return np.zeros(self.tables.s_states, dtype=np.uint8)

    def _common_args(self):
        t = self.tables
        r = t.rules
        return (
            t.rank, t.nhpok, t.trans, t.ownc, t.sizes, self.porder,
        ), (
            t.n, t.maxa, t.s_states, r.k, t.bits, t.spw, self.tmask,
            self.policy_mode,
            1 if r.nhp_enabled else 0,
            1 if r.termination_action else 0,
            r.stay_threshold,
            self.coverage,
        )

    def solve_value(self, cur, ref, endors, u0, u1, prun, depth) -> int:
        mid, tail = self._common_args()
        while True:
            self._fresh_stats()
            try:
                return int(K.solve_rec(
                    self.ku0, self.ku1, self.kmeta, self.val, self.strat, self.stats,
                    *mid, self._fmax(), self._fsingle(),
                    cur, ref, endors, u0, u1, prun, depth,
                    *tail,
                    1 if self.use_cuts else 0,
                    1 if self.record else 0,
                    self.depth_guard,
                ))
            except ResourceExhaustedError as exc:
                if "table full" in str(exc) and self.table_bits < self.max_table_bits:
                    self._alloc(min(self.table_bits + 3, self.max_table_bits))
                    continue
                raise

    def enumerate_mask(self, cur, ref, endors, u0, u1, prun, depth, use_cuts: bool) -> int:
        mid, tail = self._common_args()
        while True:
            self._fresh_stats()
            try:
                return int(K.enumerate_rec(
                    self.ku0, self.ku1, self.kmeta, self.val, self.stats,
                    *mid, self._fmax(), self._fsingle(),
                    cur, ref, endors, u0, u1, prun, depth,
                    *tail,
                    1 if use_cuts else 0,
                    self.depth_guard,
                ))
            except ResourceExhaustedError as exc:
                if "table full" in str(exc) and self.table_bits < self.max_table_bits:
                    self._alloc(min(self.table_bits + 3, self.max_table_bits))
                    continue
                raise

    def oracle(self, cur, ref, endors, u0, u1, prun, depth, vio_cap: int = 64):
        """One-deviation pass over the recorded table. Returns
        (root value, violations array, violation count)."""
        mid, tail = self._common_args()
        self.vval = np.full(self.tmask + 1, -1, dtype=np.int64)
        vio = np.zeros((vio_cap, 5), dtype=np.int64)
        nodes_before = 0
        self._fresh_stats()
        self.stats[K.ST_NODES] = nodes_before
        root_v = K.oracle_rec(
            self.ku0, self.ku1, self.kmeta, self.strat, self.vval, self.stats, vio,
            *mid,
            cur, ref, endors, u0, u1, prun, depth,
            *tail,
            self.depth_guard,
        )
        count = int(self.stats[K.ST_VIOLATIONS])
        return root_v, vio[: min(count, vio_cap)], count

    # -- context-level helpers -------------------------------------------

    def value_of_ctx(self, ctx: PathContext) -> Profile:
        cur, ref, endors, u0, u1, prun = pack_fields(self.tables, ctx)
        saved_nodes = self.stats[K.ST_NODES]
        saved_ties = self.stats[K.ST_TIES]
        out = self.solve_value(cur, ref, endors, u0, u1, prun, ctx.depth)
        # queries must not disturb the reported search counters
        self.stats[K.ST_NODES] = saved_nodes
        self.stats[K.ST_TIES] = saved_ties
        return self.tables.game.profile_from_index(out)

    def choice_at_ctx(self, ctx: PathContext) -> ActionChoice | None:
        if not self.record:
            return None
        t = self.tables
        cur, ref, endors, u0, u1, prun = pack_fields(t, ctx)
        if self.policy_mode == 0:
            tk = ctx.depth % t.n
        elif self.policy_mode == 2:
            tk = 0
        else:
            tk = ctx.depth
        meta = cur | (ref << 4) | (endors << 8) | (prun << 12) | (tk << 16)
        idx, hit = K._probe(self.ku0, self.ku1, self.kmeta, self.tmask, u0, u1, meta)
        if not hit:
            return None
        return self.decode_choice(int(self.strat[idx]), cur, ctx.depth)

    def decode_choice(self, code: int, cur: int, depth: int) -> ActionChoice:
        t = self.tables
        if code == t.maxa:
            return PASS
        if code == t.maxa + 1:
            return TERMINATE
        p = self.policy.player_at(depth)
        if code == t.ownc[cur, p]:
            return STAY
        return move_to(code)

    def decode_meta(self, meta: int) -> dict:
        t = self.tables
        g = t.game
        cur = meta & 0xF
        ref = (meta >> 4) & 0xF
        return {
            "state": g.profile_key(g.profile_from_index(cur)),
            "reference": g.profile_key(g.profile_from_index(ref)),
            "turn_key": meta >> 16,
        }


def run_for(
    game: NormalFormGame,
    rules: RuleSet,
    policy: TurnPolicy,
    *,
    use_cuts: bool,
    record: bool,
    depth_guard: int,
    node_budget: int | None = None,
) -> EngineRun:
    tables = build_tables(game, rules)
    # cut-enabled solves touch few contexts; recorded full trees need room
    table_bits = 14 if use_cuts else 17
    return EngineRun(
        tables,
        policy,
        use_cuts=use_cuts,
        record=record,
        depth_guard=depth_guard,
        node_budget=node_budget,
        table_bits=table_bits,
    )
