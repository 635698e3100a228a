"""Packed backward-induction kernels over the implicit deviation game.

Contexts are packed into three 64-bit words: two words of per-slot usage
counters plus a meta word (state, reference, endorser mask, pass mask, turn
key). The memo is an open-addressing probe table shared by the solve,
strategy-record, and one-deviation passes, so the recorded strategy and the
checker agree on the context space by construction.

All comparisons run on per-player dense payoff ranks, which preserves the
exact order of the original payoffs. Everything here is numba-compatible
and runs interpreted when numba is unavailable (see _accel.maybe_jit).

Stat slots: 0 nodes expanded, 1 tie events, 2 table entries, 3 violations,
4 table capacity, 5 node budget (0 = unlimited).
"""

from __future__ import annotations

import numpy as np

from ._accel import maybe_jit
from .errors import (
    InternalInvariantError,
    ResourceExhaustedError,
    StrategyCoverageError,
)
from .movetree import PolicyError

MIX0 = 0x1E3779B97F4A7C15
MIX1 = 0x42B2AE3D27D4EB4F
MIX2 = 0x165667B19E3779F9
M63 = 0x7FFFFFFFFFFFFFFF

ST_NODES = 0
ST_TIES = 1
ST_ENTRIES = 2
ST_VIOLATIONS = 3
ST_CAPACITY = 4
ST_NODE_BUDGET = 5
N_STATS = 6

# strategy codes: 0..maxa-1 concrete action, maxa pass, maxa+1 terminate
EMPTY = -1


@maybe_jit
def _probe(ku0, ku1, kmeta, tmask, u0, u1, meta):
    """Find the slot for a key: returns (index, hit)."""
    h = ((int(u0) * MIX0) ^ (int(u1) * MIX1) ^ (int(meta) * MIX2)) & M63
    idx = h & tmask
    while True:
        m = kmeta[idx]
        if m == EMPTY:
            return idx, False
        if m == meta and ku0[idx] == u0 and ku1[idx] == u1:
            return idx, True
        idx = (idx + 1) & tmask


@maybe_jit
def solve_rec(
    ku0, ku1, kmeta, val, strat, stats,
    rank, nhpok, trans, ownc, sizes, porder,
    fmax, fsingle,
    cur, ref, endors, u0, u1, prun, depth,
    n, maxa, s_states, k, bits, spw, tmask,
    policy_mode, nhp_on, term_on, stay_m, coverage,
    use_cuts, record, depth_guard,
):
    """Backward-induction value (an outcome state id) of one context."""
    if depth > depth_guard:
        raise InternalInvariantError(
            "depth guard exceeded: the transition rules failed to terminate"
        )
    if use_cuts == 1 and fsingle[ref] == 1:
        return ref
    if policy_mode == 0:
        t = depth % n
        p = porder[t]
        tk = t
    elif policy_mode == 2:
        p = porder[0]
        tk = 0
    else:
        if depth >= porder.shape[0]:
            raise PolicyError("turn table exhausted before the game ended")
        p = porder[depth]
        tk = depth
    meta = cur | (ref << 4) | (endors << 8) | (prun << 12) | (tk << 16)
    idx, hit = _probe(ku0, ku1, kmeta, tmask, u0, u1, meta)
    if hit:
        return val[idx]
    stats[ST_NODES] += 1
    if stats[ST_NODE_BUDGET] > 0 and stats[ST_NODES] > stats[ST_NODE_BUDGET]:
        raise ResourceExhaustedError("node budget exceeded")

    best = -1
    bestr = -(1 << 62)
    bestcode = -1
    tie = 0
    done = 0
    own = ownc[cur, p]
    np_ = prun
    for t_idx in range(sizes[p]):
        if done == 1:
            break
        if t_idx == 0:
            a = own
        else:
            a = t_idx - 1 if t_idx - 1 < own else t_idx
        slot = (p * s_states + cur) * maxa + a
        w = slot // spw
        sh = (slot % spw) * bits
        if w == 0:
            cnt = (u0 >> sh) & ((1 << bits) - 1)
        else:
            cnt = (u1 >> sh) & ((1 << bits) - 1)
        if cnt >= k:
            continue
        if a == own:
            if nhp_on == 1 and not nhpok[cur, ref, p]:
                continue
            if cur == ref:
                ne = endors | (1 << p)
            else:
                ne = 1 << p
            cnte = 0
            for j in range(n):
                if ne & (1 << j):
                    cnte += 1
            if term_on == 0 and cnte >= stay_m:
                v = cur
            else:
                if w == 0:
                    v = solve_rec(
                        ku0, ku1, kmeta, val, strat, stats,
                        rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                        cur, cur, ne, u0 + (1 << sh), u1, 0, depth + 1,
                        n, maxa, s_states, k, bits, spw, tmask,
                        policy_mode, nhp_on, term_on, stay_m, coverage,
                        use_cuts, record, depth_guard,
                    )
                else:
                    v = solve_rec(
                        ku0, ku1, kmeta, val, strat, stats,
                        rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                        cur, cur, ne, u0, u1 + (1 << sh), 0, depth + 1,
                        n, maxa, s_states, k, bits, spw, tmask,
                        policy_mode, nhp_on, term_on, stay_m, coverage,
                        use_cuts, record, depth_guard,
                    )
        else:
            nc = trans[cur, p, a]
            if w == 0:
                v = solve_rec(
                    ku0, ku1, kmeta, val, strat, stats,
                    rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                    nc, ref, endors, u0 + (1 << sh), u1, 0, depth + 1,
                    n, maxa, s_states, k, bits, spw, tmask,
                    policy_mode, nhp_on, term_on, stay_m, coverage,
                    use_cuts, record, depth_guard,
                )
            else:
                v = solve_rec(
                    ku0, ku1, kmeta, val, strat, stats,
                    rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                    nc, ref, endors, u0, u1 + (1 << sh), 0, depth + 1,
                    n, maxa, s_states, k, bits, spw, tmask,
                    policy_mode, nhp_on, term_on, stay_m, coverage,
                    use_cuts, record, depth_guard,
                )
        r = rank[v, p]
        if r > bestr:
            best = v
            bestr = r
            bestcode = a
            tie = 0
            if use_cuts == 1 and bestr >= fmax[ref, p]:
                done = 1
        elif r == bestr:
            tie = 1
    if done == 0:
        np_ = prun | (1 << p)
        if (np_ & coverage) == coverage:
            v = ref
        else:
            v = solve_rec(
                ku0, ku1, kmeta, val, strat, stats,
                rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                cur, ref, endors, u0, u1, np_, depth + 1,
                n, maxa, s_states, k, bits, spw, tmask,
                policy_mode, nhp_on, term_on, stay_m, coverage,
                use_cuts, record, depth_guard,
            )
        r = rank[v, p]
        if r > bestr:
            best = v
            bestr = r
            bestcode = maxa
            tie = 0
            if use_cuts == 1 and bestr >= fmax[ref, p]:
                done = 1
        elif r == bestr:
            tie = 1
        if done == 0 and term_on == 1:
            if nhp_on == 0 or nhpok[cur, ref, p]:
                r = rank[cur, p]
                if r > bestr:
                    best = cur
                    bestr = r
                    bestcode = maxa + 1
                    tie = 0
                elif r == bestr:
                    tie = 1
    if tie == 1:
        stats[ST_TIES] += 1
    # the probe slot may have moved while children were inserted
    idx, hit = _probe(ku0, ku1, kmeta, tmask, u0, u1, meta)
    if not hit:
        stats[ST_ENTRIES] += 1
        if stats[ST_ENTRIES] > stats[ST_CAPACITY]:
            raise ResourceExhaustedError("context table full")
        ku0[idx] = u0
        ku1[idx] = u1
        kmeta[idx] = meta
    val[idx] = best
    if record == 1:
        strat[idx] = bestcode
    return best


@maybe_jit
def minrank(mask, p, rank, s_states):
    m = 1 << 62
    for b in range(s_states):
        if mask & (1 << b):
            r = rank[b, p]
            if r < m:
                m = r
    return m


@maybe_jit
def enumerate_rec(
    ku0, ku1, kmeta, val, stats,
    rank, nhpok, trans, ownc, sizes, porder,
    fmax, fsingle,
    cur, ref, endors, u0, u1, prun, depth,
    n, maxa, s_states, k, bits, spw, tmask,
    policy_mode, nhp_on, term_on, stay_m, coverage,
    use_cuts, depth_guard,
):
    """Set of outcomes (as a bitmask) realizable under some tie-break.

    A node's set keeps, from the union of its children's sets, the outcomes
    the active player values at least as much as the best guaranteed child:
    the threshold is the max over children of the child-set minimum.
    The cuts require a strict game (unique outcome per rank); the driver
    only enables them there.
    """
    if depth > depth_guard:
        raise InternalInvariantError(
            "depth guard exceeded: the transition rules failed to terminate"
        )
    if use_cuts == 1 and fsingle[ref] == 1:
        return 1 << ref
    if policy_mode == 0:
        t = depth % n
        p = porder[t]
        tk = t
    elif policy_mode == 2:
        p = porder[0]
        tk = 0
    else:
        if depth >= porder.shape[0]:
            raise PolicyError("turn table exhausted before the game ended")
        p = porder[depth]
        tk = depth
    meta = cur | (ref << 4) | (endors << 8) | (prun << 12) | (tk << 16)
    idx, hit = _probe(ku0, ku1, kmeta, tmask, u0, u1, meta)
    if hit:
        return val[idx]
    stats[ST_NODES] += 1
    if stats[ST_NODE_BUDGET] > 0 and stats[ST_NODES] > stats[ST_NODE_BUDGET]:
        raise ResourceExhaustedError("node budget exceeded")

    nkids = 0
    kmask = np.zeros(8, dtype=np.int64)
    kminr = np.zeros(8, dtype=np.int64)
    own = ownc[cur, p]
    cut_mask = -1
    for t_idx in range(sizes[p]):
        if cut_mask >= 0:
            break
        if t_idx == 0:
            a = own
        else:
            a = t_idx - 1 if t_idx - 1 < own else t_idx
        slot = (p * s_states + cur) * maxa + a
        w = slot // spw
        sh = (slot % spw) * bits
        if w == 0:
            cnt = (u0 >> sh) & ((1 << bits) - 1)
        else:
            cnt = (u1 >> sh) & ((1 << bits) - 1)
        if cnt >= k:
            continue
        if a == own:
            if nhp_on == 1 and not nhpok[cur, ref, p]:
                continue
            if cur == ref:
                ne = endors | (1 << p)
            else:
                ne = 1 << p
            cnte = 0
            for j in range(n):
                if ne & (1 << j):
                    cnte += 1
            if term_on == 0 and cnte >= stay_m:
                m = 1 << cur
            else:
                nu0 = u0 + (1 << sh) if w == 0 else u0
                nu1 = u1 + (1 << sh) if w == 1 else u1
                m = enumerate_rec(
                    ku0, ku1, kmeta, val, stats,
                    rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                    cur, cur, ne, nu0, nu1, 0, depth + 1,
                    n, maxa, s_states, k, bits, spw, tmask,
                    policy_mode, nhp_on, term_on, stay_m, coverage,
                    use_cuts, depth_guard,
                )
        else:
            nc = trans[cur, p, a]
            nu0 = u0 + (1 << sh) if w == 0 else u0
            nu1 = u1 + (1 << sh) if w == 1 else u1
            m = enumerate_rec(
                ku0, ku1, kmeta, val, stats,
                rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                nc, ref, endors, nu0, nu1, 0, depth + 1,
                n, maxa, s_states, k, bits, spw, tmask,
                policy_mode, nhp_on, term_on, stay_m, coverage,
                use_cuts, depth_guard,
            )
        mr = minrank(m, p, rank, s_states)
        kmask[nkids] = m
        kminr[nkids] = mr
        nkids += 1
        if use_cuts == 1 and mr >= fmax[ref, p]:
            for b in range(s_states):
                if (m & (1 << b)) and rank[b, p] == mr:
                    cut_mask = 1 << b
                    break
    if cut_mask < 0:
        np_ = prun | (1 << p)
        if (np_ & coverage) == coverage:
            m = 1 << ref
        else:
            m = enumerate_rec(
                ku0, ku1, kmeta, val, stats,
                rank, nhpok, trans, ownc, sizes, porder, fmax, fsingle,
                cur, ref, endors, u0, u1, np_, depth + 1,
                n, maxa, s_states, k, bits, spw, tmask,
                policy_mode, nhp_on, term_on, stay_m, coverage,
                use_cuts, depth_guard,
            )
        mr = minrank(m, p, rank, s_states)
        kmask[nkids] = m
        kminr[nkids] = mr
        nkids += 1
        if use_cuts == 1 and mr >= fmax[ref, p]:
            for b in range(s_states):
                if (m & (1 << b)) and rank[b, p] == mr:
                    cut_mask = 1 << b
                    break
        if cut_mask < 0 and term_on == 1:
            if nhp_on == 0 or nhpok[cur, ref, p]:
                kmask[nkids] = 1 << cur
                kminr[nkids] = rank[cur, p]
                nkids += 1
    if cut_mask >= 0:
        result = cut_mask
    else:
        thresh = -(1 << 62)
        for i in range(nkids):
            if kminr[i] > thresh:
                thresh = kminr[i]
        union = 0
        for i in range(nkids):
            union |= kmask[i]
        result = 0
        for b in range(s_states):
            if (union & (1 << b)) and rank[b, p] >= thresh:
                result |= 1 << b
    idx, hit = _probe(ku0, ku1, kmeta, tmask, u0, u1, meta)
    if not hit:
        stats[ST_ENTRIES] += 1
        if stats[ST_ENTRIES] > stats[ST_CAPACITY]:
            raise ResourceExhaustedError("context table full")
        ku0[idx] = u0
        ku1[idx] = u1
        kmeta[idx] = meta
    val[idx] = result
    return result


@maybe_jit
def oracle_rec(
    ku0, ku1, kmeta, strat, vval, stats, vio,
    rank, nhpok, trans, ownc, sizes, porder,
    cur, ref, endors, u0, u1, prun, depth,
    n, maxa, s_states, k, bits, spw, tmask,
    policy_mode, nhp_on, term_on, stay_m, coverage,
    depth_guard,
):
    """Replay value of the recorded strategy, checking the one-shot
    deviation property at every reachable context.

    Walks the full tree the recorder walked, computes each context's
    continuation outcome by following the strategy, and flags every legal
    alternative whose continuation the active player strictly prefers.
    Violations land in `vio` rows (u0, u1, meta, prescribed, alternative).
    """
    if depth > depth_guard:
        raise InternalInvariantError(
            "depth guard exceeded: the transition rules failed to terminate"
        )
    if policy_mode == 0:
        t = depth % n
        p = porder[t]
        tk = t
    elif policy_mode == 2:
        p = porder[0]
        tk = 0
    else:
        if depth >= porder.shape[0]:
            raise PolicyError("turn table exhausted before the game ended")
        p = porder[depth]
        tk = depth
    meta = cur | (ref << 4) | (endors << 8) | (prun << 12) | (tk << 16)
    idx, hit = _probe(ku0, ku1, kmeta, tmask, u0, u1, meta)
    if not hit:
        raise StrategyCoverageError("strategy missing a reachable context")
    if vval[idx] >= 0:
        return vval[idx]
    stats[ST_NODES] += 1
    if stats[ST_NODE_BUDGET] > 0 and stats[ST_NODES] > stats[ST_NODE_BUDGET]:
        raise ResourceExhaustedError("node budget exceeded")
    presc = strat[idx]

    vpre = -1
    nalts = 0
    acode = np.zeros(8, dtype=np.int64)
    aval = np.zeros(8, dtype=np.int64)
    own = ownc[cur, p]
    for t_idx in range(sizes[p]):
        if t_idx == 0:
            a = own
        else:
            a = t_idx - 1 if t_idx - 1 < own else t_idx
        slot = (p * s_states + cur) * maxa + a
        w = slot // spw
        sh = (slot % spw) * bits
        if w == 0:
            cnt = (u0 >> sh) & ((1 << bits) - 1)
        else:
            cnt = (u1 >> sh) & ((1 << bits) - 1)
        if cnt >= k:
            continue
        if a == own:
            if nhp_on == 1 and not nhpok[cur, ref, p]:
                continue
            if cur == ref:
                ne = endors | (1 << p)
            else:
                ne = 1 << p
            cnte = 0
            for j in range(n):
                if ne & (1 << j):
                    cnte += 1
            if term_on == 0 and cnte >= stay_m:
                v = cur
            else:
                nu0 = u0 + (1 << sh) if w == 0 else u0
                nu1 = u1 + (1 << sh) if w == 1 else u1
                v = oracle_rec(
                    ku0, ku1, kmeta, strat, vval, stats, vio,
                    rank, nhpok, trans, ownc, sizes, porder,
                    cur, cur, ne, nu0, nu1, 0, depth + 1,
                    n, maxa, s_states, k, bits, spw, tmask,
                    policy_mode, nhp_on, term_on, stay_m, coverage,
                    depth_guard,
                )
        else:
            nc = trans[cur, p, a]
            nu0 = u0 + (1 << sh) if w == 0 else u0
            nu1 = u1 + (1 << sh) if w == 1 else u1
            v = oracle_rec(
                ku0, ku1, kmeta, strat, vval, stats, vio,
                rank, nhpok, trans, ownc, sizes, porder,
                nc, ref, endors, nu0, nu1, 0, depth + 1,
                n, maxa, s_states, k, bits, spw, tmask,
                policy_mode, nhp_on, term_on, stay_m, coverage,
                depth_guard,
            )
        acode[nalts] = a
        aval[nalts] = v
        nalts += 1
        if a == presc:
            vpre = v
    np_ = prun | (1 << p)
    if (np_ & coverage) == coverage:
        v = ref
    else:
        v = oracle_rec(
            ku0, ku1, kmeta, strat, vval, stats, vio,
            rank, nhpok, trans, ownc, sizes, porder,
            cur, ref, endors, u0, u1, np_, depth + 1,
            n, maxa, s_states, k, bits, spw, tmask,
            policy_mode, nhp_on, term_on, stay_m, coverage,
            depth_guard,
        )
    acode[nalts] = maxa
    aval[nalts] = v
    nalts += 1
    if presc == maxa:
        vpre = v
    if term_on == 1 and (nhp_on == 0 or nhpok[cur, ref, p]):
        acode[nalts] = maxa + 1
        aval[nalts] = cur
        nalts += 1
        if presc == maxa + 1:
            vpre = cur
    if vpre < 0:
        raise InternalInvariantError("recorded strategy prescribed an illegal action")
    rpre = rank[vpre, p]
    for i in range(nalts):
        if rank[aval[i], p] > rpre:
            row = stats[ST_VIOLATIONS]
            if row < vio.shape[0]:
                vio[row, 0] = u0
                vio[row, 1] = u1
                vio[row, 2] = meta
                vio[row, 3] = presc
                vio[row, 4] = acode[i]
            stats[ST_VIOLATIONS] += 1
    vval[idx] = vpre
    return vpre
