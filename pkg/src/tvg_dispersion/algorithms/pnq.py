"""Balanced dispersion of k = pn + q co-located agents, q in {1, 2}.

Round 1 splits the agents into n groups by ID rank; groups g_1..g_{n-1} get
p agents and g_n gets p + q. From round 2 the groups run the rooted DFS
machine as super-agents (a group settles as a whole). A group that ends up
alone and can no longer divide stops and waits.

After T + 2 rounds the machine restarts with individual agents: whatever
group is still unsettled becomes G1, and if g_n is settled its q smallest
members leave their node as G2. Nodes holding fewer than p settled agents
accept arrivals up to p + 1. A group of one or two agents that would divide
instead runs the endgame, and at the final round every remaining unsettled
agent does so as well: if its node would hold more than p + 1 agents, two
agents fan out over ports 0 and 1 (or one stays on a degree-1 node).
"""

from __future__ import annotations

import math
from typing import NamedTuple

from ..engine import Algorithm, AgentId, ModelSpec
from .rooted import (
    ALONE,
    EMPTY_TRIPLE,
    EXPLORE,
    MOVE,
    SETTLE,
    Site,
    even_update,
    record_visits,
    settle_records,
    termination_round,
    unit_odd,
)

G1_START = "10"
G2_START = "11"

PARKED = 1
DONE = 2


class PnqState(NamedTuple):
    settled: int = 0
    prt_in: int = -1
    prt_out: int = -1
    state: int = EXPLORE
    dfs_label: int = 1
    success: bool = True
    skip: int = -1
    divide: int = 0
    grp_label: str = G1_START
    count_1: int = 0
    count_2: int = 0
    count_3: int = 0
    stored_G1: tuple = EMPTY_TRIPLE
    stored_G2: tuple = EMPTY_TRIPLE
    r: int = 0
    ID_1: int = -1  # group index, -1 until assigned
    p: int = 0
    q: int = 0
    halted: int = 0


PnqState._signed = frozenset({"prt_in", "prt_out", "skip", "stored_G1", "stored_G2", "ID_1"})

_CORE_RESET = dict(
    settled=0,
    prt_in=-1,
    prt_out=0,
    state=EXPLORE,
    dfs_label=1,
    success=True,
    skip=-1,
    divide=0,
    count_1=0,
    count_2=0,
    count_3=0,
    stored_G1=EMPTY_TRIPLE,
    stored_G2=EMPTY_TRIPLE,
    halted=0,
)


def phase3_length(n: int, p: int) -> int:
    return 8 * n * n + 128 * n**4 * max(1, math.ceil(math.log2(max(n, p, 2))))


def endgame_intents(members, p: int, degree: int, enders=None) -> dict[AgentId, int | None]:
    """Node-local endgame; every agent in the returned map terminates.

    ``members`` lists (id, state) for everyone here and ``enders`` the
    unsettled agents finishing now (default: all unsettled ones). If the node
    stays within p + 1 they simply stop. Otherwise two agents fan out over
    ports 0 and 1, or one stays and one leaves on a degree-1 node: the two
    smallest enders, or the lone ender with the smallest settled agent.
    """
    if enders is None:
        enders = [a for a, st in members if not st.settled]
    enders = sorted(enders)
    settled = sorted(a for a, st in members if st.settled)
    out: dict[AgentId, int | None] = {a: None for a in enders}
    if not enders or len(settled) + len(enders) <= p + 1:
        return out
    if len(enders) >= 2:
        first, second = enders[0], enders[1]
    else:
        partners = [a for a, st in members if st.settled and st.halted != DONE]
        if not partners:
            return out
        first, second = enders[0], min(partners)
    if degree == 1:
        out[first], out[second] = None, 0
    else:
        out[first], out[second] = 0, 1
    for i, a in enumerate(enders[2:]):
        out[a] = (i + 2) % degree
    return out


def _finish(s):
    return s._replace(settled=1, grp_label="", halted=DONE)


class PnqDispersion(Algorithm):
    name = "pnq"
    requires = ModelSpec("zero_hop", "f2f")
    supports_dormancy = True

    def __init__(self, n: int, k: int | None = None):
        self.n = n
        self.T = termination_round(n)

    # round landmarks, all in engine rounds
    def setup_round(self) -> int:
        return self.T + 3

    def final_round(self, p: int) -> int:
        return self.T + 3 + phase3_length(self.n, p)

    def initial_state(self, agent_id):
        return PnqState()

    def dormant_until(self, s):
        if s.r == 0 or (s.p == 0 and s.r <= 1):
            return None
        if s.r < self.setup_round():
            return self.setup_round() if (s.settled or s.halted) else None
        if s.settled:
            return self.final_round(s.p)
        return None

    def advance(self, s, rounds):
        return s._replace(r=s.r + rounds)

    def transition(self, agent_id, s, obs):
        return pnq_transition(self, agent_id, s, obs)


# ---------------------------------------------------------------- phases


def _phase1(algo: PnqDispersion, agent_id, s, obs):
    n = algo.n
    everyone = sorted([agent_id] + [a for a, _ in obs.colocated])
    k = len(everyone)
    p, q = divmod(k, n)
    s = s._replace(p=p, q=q)
    rank = everyone.index(agent_id)
    if p == 0:
        if k == 1:
            return s, None, True
        if obs.my_degree == 1:
            return s, (None if rank == 0 else 0), True
        return s, rank % max(1, obs.my_degree), True
    group = rank // p + 1 if rank < p * (n - 1) else n
    return s._replace(ID_1=group), None, False


def _groups(members):
    """Unsettled, non-halted super-agent units keyed by group index."""
    units = {}
    for a, st in members:
        if not st.settled and not st.halted and st.ID_1 not in units:
            units[st.ID_1] = st
    return tuple(sorted(units.items()))


def _holder(members):
    settled = [(a, st) for a, st in members if st.settled]
    return min(settled, key=lambda x: x[0]) if settled else (None, None)


def _phase2(algo: PnqDispersion, agent_id, s, obs):
    members = [(agent_id, s)] + list(obs.colocated)
    odd = (s.r - 1) % 2 == 1
    if not s.settled:
        if s.halted:
            return s, None, False
        if not odd:
            return even_update(s, obs.last_move_success, obs.arrival_port), None, False
        holder_id, holder = _holder(members)
        units = _groups(members)
        site = Site(algo.n, obs.my_degree, holder, units, 0 if holder is not None else 1, solo_divide=False)
        ns, port, kind = unit_odd(s.ID_1, s, site)
        if kind == ALONE:
            return s._replace(halted=PARKED), None, False
        if kind == SETTLE:
            ns = ns._replace(settled=1, grp_label="")
            settlers = [a for a, st in members if not st.settled and not st.halted and st.ID_1 == s.ID_1]
            if holder is None and agent_id == min(settlers):
                others = {k: unit_odd(k, st, site) for k, st in units if k != s.ID_1}
                g1, g2 = settle_records(s, site, others)
                ns = ns._replace(stored_G1=g1, stored_G2=g2)
            return ns, None, False
        return ns, port, False
    if odd and obs.colocated:
        holder_id, holder = _holder(members)
        if holder_id == agent_id:
            units = _groups(members)
            if units:
                site = Site(algo.n, obs.my_degree, holder, units, 0, solo_divide=False)
                decisions = {k: unit_odd(k, st, site) for k, st in units}
                g1, g2 = record_visits((s.stored_G1, s.stored_G2), site, decisions)
                s = s._replace(stored_G1=g1, stored_G2=g2)
    return s, None, False


def _setup_roles(algo: PnqDispersion, members):
    """Phase-3 role of every agent at a node: 'g1', 'g2' or 'settled'."""
    roles = {}
    gn = sorted(a for a, st in members if st.settled and st.ID_1 == algo.n)
    q = members[0][1].q
    leaving = set(gn[:q])
    for a, st in members:
        if not st.settled:
            roles[a] = "g1"
        elif a in leaving:
            roles[a] = "g2"
        else:
            roles[a] = "settled"
    return roles


def _phase3_setup(algo: PnqDispersion, agent_id, s, obs):
    members = [(agent_id, s)] + list(obs.colocated)
    roles = _setup_roles(algo, members)
    p = s.p
    stay_settled = sorted(a for a in roles if roles[a] == "settled")
    c = len(stay_settled)
    capacity = p + 1 - c if c < p else 0
    g1 = sorted(a for a in roles if roles[a] == "g1")
    role = roles[agent_id]
    if role == "settled":
        s = s._replace(stored_G1=EMPTY_TRIPLE, stored_G2=EMPTY_TRIPLE, halted=0)
        if agent_id == stay_settled[0]:
            if len(g1) > capacity:
                s = s._replace(stored_G1=(-1, G1_START, 1))
            if any(r == "g2" for r in roles.values()):
                s = s._replace(stored_G2=(-1, G2_START, 1))
        return s, None, False
    if role == "g1":
        if g1.index(agent_id) < capacity:
            s = s._replace(**_CORE_RESET)._replace(settled=1, grp_label="")
            if c == 0 and agent_id == g1[0]:
                if len(g1) > capacity:
                    s = s._replace(stored_G1=(-1, G1_START, 1))
                if any(r == "g2" for r in roles.values()):
                    s = s._replace(stored_G2=(-1, G2_START, 1))
            return s, None, False
        # g_n already settled means G2 exists, so G1 starts out divided
        divided = int(s.ID_1 != algo.n)
        return s._replace(**_CORE_RESET)._replace(grp_label=G1_START, divide=divided), 0, False
    return s._replace(**_CORE_RESET)._replace(grp_label=G2_START, divide=1), 0, False


def _p3_site(algo, s, members, degree):
    settled = [(a, st) for a, st in members if st.settled]
    live = [x for x in settled if x[1].halted != DONE]
    holder_id, holder = min(live, key=lambda x: x[0]) if live else (None, None)
    c = len(settled)
    capacity = s.p + 1 - c if c < s.p else 0
    units = tuple(sorted((a, st) for a, st in members if not st.settled and st.halted == 0))
    site = Site(algo.n, degree, holder, units, capacity, solo_divide=False, alone_limit=1)
    return site, holder_id


def _alone_enders(site):
    """Every unit here whose group stops this round; they finish together."""
    return [k for k, st in site.units if unit_odd(k, st, site)[2] == ALONE]


def _phase3(algo: PnqDispersion, agent_id, s, obs):
    members = [(agent_id, s)] + list(obs.colocated)
    odd = (s.r - algo.T - 2) % 2 == 1
    if not s.settled:
        if not odd:
            return even_update(s, obs.last_move_success, obs.arrival_port), None, False
        site, holder_id = _p3_site(algo, s, members, obs.my_degree)
        ns, port, kind = unit_odd(agent_id, s, site)
        if kind == ALONE:
            plan = endgame_intents(members, s.p, obs.my_degree, enders=_alone_enders(site))
            return _finish(ns), plan.get(agent_id), True
        if kind == SETTLE:
            ns = ns._replace(settled=1, grp_label="")
            settlers = [k for k, _ in site.units if site.settles(k)]
            if site.holder is None and agent_id == min(settlers):
                others = {k: unit_odd(k, st, site) for k, st in site.units if k not in settlers}
                g1, g2 = settle_records(s, site, others)
                ns = ns._replace(stored_G1=g1, stored_G2=g2)
            return ns, None, False
        return ns, port, False
    if odd and obs.colocated:
        site, holder_id = _p3_site(algo, s, members, obs.my_degree)
        if site.units:
            decisions = {k: unit_odd(k, st, site) for k, st in site.units}
            enders = [k for k, d in decisions.items() if d[2] == ALONE]
            if enders:
                # a finishing group may pull in the smallest settled agent
                plan = endgame_intents(members, s.p, obs.my_degree, enders=enders)
                if agent_id in plan:
                    return _finish(s), plan[agent_id], True
            if holder_id == agent_id:
                g1, g2 = record_visits((s.stored_G1, s.stored_G2), site, decisions)
                s = s._replace(stored_G1=g1, stored_G2=g2)
    return s, None, False


def pnq_transition(algo: PnqDispersion, agent_id: AgentId, s: PnqState, obs):
    s = s._replace(r=s.r + 1)
    if s.r == 1:
        return _phase1(algo, agent_id, s, obs)
    setup = algo.setup_round()
    if s.r < setup:
        return _phase2(algo, agent_id, s, obs)
    if s.r == setup:
        return _phase3_setup(algo, agent_id, s, obs)
    if s.r >= algo.final_round(s.p):
        members = [(agent_id, s)] + list(obs.colocated)
        plan = endgame_intents(members, s.p, obs.my_degree)
        return _finish(s), plan.get(agent_id), True
    return _phase3(algo, agent_id, s, obs)
