"""Rooted dispersion of n+1 agents on 1-bounded 1-interval connected graphs.

Agents start together and explore by DFS. Each edge traversal takes two
rounds: a move in an odd round and, in the following even round, reading
whether the move went through. A failed move splits the group into G1
(label ending in 0) and G2 (label ending in 1); each group keeps its own DFS
bookkeeping at settled agents. Counters on consecutive failures let one group
infer that the other has finished, after which it splits again.

The decision logic is written over "units". For the n+1 algorithm a unit is
one agent; the pn+q extension reuses it with whole groups as units. A node is
summarised by a ``Site`` holding everything the rules read.

Settled agents keep the per-group triples. Instead of re-deriving each case
of the settled-agent rules, the holder (the minimum-ID settled agent at the
node) evaluates every visiting unit's own decision and records:

* a root triple ``(-1, label, dfs)`` when that unit starts a fresh DFS or a
  new group here (its label or dfs counter changes this round);
* ``(prt_in, label, dfs)`` when the unit arrives exploring and the node is
  new for that group.

This keeps the stored triples equal to what the visitor will read next time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple

from ..engine import Algorithm, AgentId, ModelSpec

EXPLORE = 0
BACKTRACK = 1

EMPTY_TRIPLE = (-1, -1, 0)

# decision kinds
MOVE = "move"
SETTLE = "settle"
ALONE = "alone"  # a one-unit group wanted to divide and the caller handles it


class RootedState(NamedTuple):
    settled: int = 0
    prt_in: int = -1
    prt_out: int = -1
    state: int = EXPLORE
    dfs_label: int = 1
    success: bool = True
    skip: int = -1
    divide: int = 0
    grp_label: str = "10"
    count_1: int = 0
    count_2: int = 0
    count_3: int = 0
    stored_G1: tuple = EMPTY_TRIPLE
    stored_G2: tuple = EMPTY_TRIPLE
    r: int = 0


RootedState._signed = frozenset({"prt_in", "prt_out", "skip", "stored_G1", "stored_G2"})


def termination_round(n: int) -> int:
    """8n^2 + 128 n^4 ceil(log2 n), the round at which every agent stops."""
    return 8 * n * n + 128 * n**4 * max(1, math.ceil(math.log2(n)))


def in_g1(label: str) -> bool:
    return label.endswith("0")


def next_port(p: int, deg: int) -> int:
    return (p + 1) % deg


def min_port_except(deg: int, skip: int) -> int:
    """Smallest port other than ``skip``; a degree-1 node falls back to port 0."""
    if skip != 0 or deg == 1:
        return 0
    return 1


@dataclass(frozen=True)
class Site:
    """What the rules can read at one node in one round."""

    n: int
    degree: int
    holder: Any  # state of the minimum-ID settled agent, or None
    units: tuple  # ((key, state), ...) unsettled units here, ascending key
    capacity: int  # how many units may settle here this round
    solo_divide: bool = True  # may a one-unit group divide (n+1 rule) or is that reported as ALONE
    alone_limit: int = 1  # group sizes up to this report ALONE instead of dividing

    def settles(self, key) -> bool:
        if self.capacity <= 0:
            return False
        keys = [k for k, _ in self.units]
        return keys.index(key) < self.capacity

    def g1_peer(self):
        for _, st in self.units:
            if in_g1(st.grp_label):
                return st
        return None

    @property
    def c1_max(self) -> int:
        return 16 * self.n * self.n

    @property
    def c2_max(self) -> int:
        return 4 * self.n * self.n


# ---------------------------------------------------------------- even rounds


def even_update(s, success: bool, arrival_port: int | None):
    if success and arrival_port is not None:
        return s._replace(success=True, prt_in=arrival_port)
    return s._replace(success=success)


# ---------------------------------------------------------------- group divide


def group_divide(key, s, site: Site, detected: bool = False):
    """Split the unit's group in two halves by key order and restart via port 0.

    ``detected`` marks calls triggered by a counter reaching its limit,
    i.e. the group has concluded the other group is done.
    """
    members = sorted(k for k, st in site.units if st.grp_label == s.grp_label)
    if key not in members:
        members = sorted(members + [key])
    x = len(members)
    if detected and x <= site.alone_limit and not site.solo_divide:
        return s, None, ALONE
    i = members.index(key) + 1
    suffix = "0" if i <= (x + 1) // 2 else "1"
    s = s._replace(
        grp_label=s.grp_label + suffix,
        prt_out=0,
        state=EXPLORE,
        skip=-1,
        dfs_label=s.dfs_label + 1,
        count_1=0,
        count_2=0,
        count_3=0,
    )
    return s, 0, MOVE


# ---------------------------------------------------------------- G1


def _g1_failure(key, s, site: Site):
    if s.divide == 0:
        return group_divide(key, s._replace(divide=1), site)
    c = s.count_1 + 1
    if c >= site.c1_max:
        return group_divide(key, s._replace(count_1=c), site, detected=True)
    return s._replace(count_1=c), s.prt_out, MOVE


def g1_odd(key, s, site: Site):
    deg = site.degree
    h = site.holder
    if not s.success:
        return _g1_failure(key, s, site)
    s = s._replace(count_1=0)
    if s.state == EXPLORE:
        if site.capacity > 0:
            if site.settles(key):
                return s, None, SETTLE
            po = next_port(s.prt_in, deg)
            if po == s.prt_in:
                return s._replace(prt_out=po, state=BACKTRACK), po, MOVE
            return s._replace(prt_out=po), po, MOVE
        if h is not None and h.stored_G1[1] == s.grp_label:
            # visited by this group: go back the way we came
            return s._replace(state=BACKTRACK, prt_out=s.prt_in), s.prt_in, MOVE
        # unvisited; a degree-1 node sends the group straight back, still exploring
        po = next_port(s.prt_in, deg)
        return s._replace(prt_out=po), po, MOVE
    parent = h.stored_G1[0] if h is not None else -1
    po = next_port(s.prt_in, deg)
    if parent == -1:
        return s._replace(prt_out=po, state=EXPLORE), po, MOVE
    if po == parent:
        return s._replace(prt_out=po), po, MOVE
    return s._replace(prt_out=po, state=EXPLORE), po, MOVE


# ---------------------------------------------------------------- G2


def _fresh_dfs(s):
    return s._replace(state=EXPLORE, skip=-1, prt_out=0, dfs_label=s.dfs_label + 1), 0, MOVE


def _g2_blocked(key, s, site: Site):
    """Failure without a G1 agent blocked on the same port."""
    c2 = s.count_2 + 1
    if c2 < site.c2_max:
        return s._replace(count_2=c2), s.prt_out, MOVE
    c3 = s.count_3 + 1
    s = s._replace(count_2=0, count_3=c3)
    if c3 < site.c2_max:
        skip = s.prt_out
        po = min_port_except(site.degree, skip)
        return s._replace(state=EXPLORE, dfs_label=s.dfs_label + 1, skip=skip, prt_out=po), po, MOVE
    return group_divide(key, s, site, detected=True)


def g2_odd(key, s, site: Site):
    deg = site.degree
    h = site.holder
    parent = h.stored_G2[0] if h is not None else -1
    peer = site.g1_peer()
    shared = peer is not None and peer.prt_out == s.prt_out
    if s.state == BACKTRACK:
        if s.success:
            po = next_port(s.prt_in, deg)
            s = s._replace(prt_out=po, count_2=0)
            if parent == -1:
                mp = min_port_except(deg, s.skip)
                if po == mp:
                    return _fresh_dfs(s)
                if po == s.skip:
                    po = next_port(po, deg)
                    s = s._replace(prt_out=po)
                    if po == mp:
                        return _fresh_dfs(s)
                return s._replace(state=EXPLORE), po, MOVE
            if po == parent:
                return s, po, MOVE
            return s._replace(state=EXPLORE), po, MOVE
        if shared:
            skip = s.prt_out
            po = min_port_except(deg, skip)
            s = s._replace(count_2=0, dfs_label=s.dfs_label + 1, state=EXPLORE, skip=skip, prt_out=po)
            return s, po, MOVE
        return _g2_blocked(key, s, site)

    if s.success:
        s = s._replace(count_2=0)
        if site.capacity > 0:
            if site.settles(key):
                return s, None, SETTLE
            po = next_port(s.prt_in, deg)
            if po == s.prt_in:
                return s._replace(prt_out=po, state=BACKTRACK), po, MOVE
            return s._replace(prt_out=po), po, MOVE
        st = h.stored_G2 if h is not None else EMPTY_TRIPLE
        if st[1] == s.grp_label and st[2] == s.dfs_label:
            return s._replace(state=BACKTRACK, prt_out=s.prt_in), s.prt_in, MOVE
        po = next_port(s.prt_in, deg)
        if po == s.prt_in:
            return s._replace(prt_out=po, state=BACKTRACK), po, MOVE
        return s._replace(prt_out=po), po, MOVE

    if shared:
        # The two sub-cases below are exhaustive. A missing holder reads as a
        # root; that only happens if a group fails at a node nobody settled,
        # which cannot occur after the group's first odd round.
        if parent == -1:
            if s.prt_out == deg - 1:
                return s._replace(count_2=0, skip=-1, dfs_label=s.dfs_label + 1, prt_out=0), 0, MOVE
            po = next_port(s.prt_out, deg)
            return s._replace(count_2=0, prt_out=po), po, MOVE
        po = next_port(s.prt_out, deg)
        s = s._replace(count_2=0, prt_out=po)
        if po == s.prt_in:
            return s._replace(state=BACKTRACK), po, MOVE
        return s, po, MOVE
    return _g2_blocked(key, s, site)


def unit_odd(key, s, site: Site):
    """Decision of an unsettled unit in an odd round: (state, port or None, kind)."""
    if in_g1(s.grp_label):
        return g1_odd(key, s, site)
    return g2_odd(key, s, site)


# ---------------------------------------------------------------- settled bookkeeping


def record_visits(stored: tuple[tuple, tuple], site: Site, decisions: dict) -> tuple[tuple, tuple]:
    """New (stored_G1, stored_G2) after this odd round's visiting units act.

    ``decisions`` maps unit key to that unit's ``unit_odd`` result.
    """
    old = stored
    new = list(stored)
    for key, st in site.units:
        if key not in decisions:
            continue
        ns, _, kind = decisions[key]
        if kind != MOVE:
            continue
        if (ns.grp_label, ns.dfs_label) != (st.grp_label, st.dfs_label):
            slot = 0 if in_g1(ns.grp_label) else 1
            new[slot] = (-1, ns.grp_label, ns.dfs_label)
            continue
        if st.state == EXPLORE and st.success:
            slot = 0 if in_g1(st.grp_label) else 1
            cur = old[slot]
            seen = cur[1] == st.grp_label if slot == 0 else (cur[1], cur[2]) == (st.grp_label, st.dfs_label)
            if not seen:
                new[slot] = (st.prt_in, st.grp_label, st.dfs_label)
    return new[0], new[1]


def settle_records(s_before, site: Site, decisions: dict) -> tuple[tuple, tuple]:
    """Triples written by a unit that settles at a node without a holder."""
    g1, g2 = record_visits((EMPTY_TRIPLE, EMPTY_TRIPLE), site, decisions)
    own = (s_before.prt_in, s_before.grp_label, s_before.dfs_label)
    if in_g1(s_before.grp_label):
        g1 = own
    else:
        g2 = own
    return g1, g2


# ---------------------------------------------------------------- the n+1 algorithm


class RootedDispersion(Algorithm):
    """Dispersion of n+1 co-located agents; every agent stops at round T."""

    name = "rooted_n_plus_1"
    requires = ModelSpec("zero_hop", "f2f")
    supports_dormancy = True

    def __init__(self, n: int, stop_round: int | None = None):
        self.n = n
        self.T = termination_round(n) if stop_round is None else stop_round

    def initial_state(self, agent_id: AgentId) -> RootedState:
        return RootedState()

    def dormant_until(self, state):
        return self.T if state.settled else None

    def advance(self, state, rounds):
        return state._replace(r=state.r + rounds)

    def site(self, agent_id, s, obs) -> tuple[Site, AgentId | None]:
        members = [(agent_id, s)] + list(obs.colocated)
        settled = [(a, st) for a, st in members if st.settled]
        holder_id, holder = min(settled, key=lambda x: x[0]) if settled else (None, None)
        units = tuple(sorted((a, st) for a, st in members if not st.settled))
        return Site(self.n, obs.my_degree, holder, units, 0 if settled else 1), holder_id

    def transition(self, agent_id, s, obs):
        return rooted_dispatch(self, agent_id, s, obs)


def rooted_dispatch(algo: RootedDispersion, agent_id: AgentId, s: RootedState, obs):
    s = s._replace(r=s.r + 1)
    if s.r >= algo.T:
        return s, None, True
    odd = s.r % 2 == 1
    if not s.settled:
        if not odd:
            return even_update(s, obs.last_move_success, obs.arrival_port), None, False
        site, holder_id = algo.site(agent_id, s, obs)
        ns, port, kind = unit_odd(agent_id, s, site)
        if kind == SETTLE:
            ns = ns._replace(settled=1, grp_label="")
            settlers = [k for k, _ in site.units if site.settles(k)]
            if site.holder is None and agent_id == min(settlers):
                others = {k: unit_odd(k, st, site) for k, st in site.units if k != agent_id}
                g1, g2 = settle_records(s, site, others)
                ns = ns._replace(stored_G1=g1, stored_G2=g2)
            return ns, None, False
        return ns, port, False
    if odd and obs.colocated:
        site, holder_id = algo.site(agent_id, s, obs)
        if holder_id == agent_id and site.units:
            decisions = {k: unit_odd(k, st, site) for k, st in site.units}
            g1, g2 = record_visits((s.stored_G1, s.stored_G2), site, decisions)
            s = s._replace(stored_G1=g1, stored_G2=g2)
    return s, None, False
