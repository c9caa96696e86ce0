"""k-balanced dispersion with one-hop visibility and global communication.

Phase P=0 runs the slide rule until no hole is visible anywhere, then every
agent sets P=1. In phase P=1 the agents compute, from the same broadcasts,
the most and least loaded nodes; while the spread is too large, one agent
travels from the most loaded node towards the least loaded one along the
port-lexicographically smallest shortest path, agents on the path shifting
forward. Once every node is within the floor/ceiling bounds all agents
terminate together.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache
from typing import NamedTuple

from ..engine import Algorithm, AgentId, ModelSpec
from .weak_disp import (
    NodeReport,
    build_sv,
    collect_reports,
    hole_seen,
    is_node_leader,
    slide_plan,
)


class BalancedGlobalState(NamedTuple):
    ID: AgentId
    P: int = 0


class BalancePlan(NamedTuple):
    action: str  # route | terminate | wait
    moves: dict


def shortest_lex_path(reports: tuple[NodeReport, ...], src: AgentId, dst: AgentId) -> list[tuple[AgentId, int]] | None:
    """Chain of (node leader, port) pairs from ``src`` to ``dst`` over present, occupied edges."""
    by_id = {r.id_v: r for r in reports}
    parent: dict[AgentId, tuple[AgentId, int] | None] = {src: None}
    queue = deque([src])
    while queue:
        x = queue.popleft()
        if x == dst:
            chain = []
            while parent[x] is not None:
                px, q = parent[x]
                chain.append((px, q))
                x = px
            return chain[::-1]
        for q, (present, u) in enumerate(by_id[x].ports):
            if present and u is not None and u in by_id and u not in parent:
                parent[u] = (x, q)
                queue.append(u)
    return None


@lru_cache(maxsize=4096)
def balance_plan(reports: tuple[NodeReport, ...]) -> BalancePlan:
    n1 = len(reports)
    k1 = sum(r.alpha for r in reports)
    hi, lo = -(-k1 // n1), k1 // n1
    x = max(r.alpha for r in reports)
    y = min(r.alpha for r in reports)
    if x <= hi and y >= lo:
        return BalancePlan("terminate", {})
    c1 = min(r.id_v for r in reports if r.alpha == x)
    b1 = min(r.id_v for r in reports if r.alpha == y)
    chain = shortest_lex_path(reports, c1, b1)
    if chain is None:
        # the two nodes are not connected in this round's snapshot
        return BalancePlan("wait", {})
    return BalancePlan("route", dict(chain))


class BalancedGlobal(Algorithm):
    name = "balanced_global"
    requires = ModelSpec("one_hop", "global")
    broadcasts = True

    def initial_state(self, agent_id: AgentId) -> BalancedGlobalState:
        return BalancedGlobalState(agent_id, 0)

    def broadcast(self, agent_id, state, obs):
        if obs.neighborhood is not None and is_node_leader(agent_id, obs):
            return build_sv(agent_id, obs)
        return None

    def transition(self, agent_id, state, obs):
        return balanced_global_transition(agent_id, state, obs)


def balanced_global_transition(agent_id: AgentId, state: BalancedGlobalState, obs):
    reports = collect_reports(obs)
    if not reports:
        return state, None, False
    if state.P == 0:
        if hole_seen(reports):
            if any(r.alpha >= 2 for r in reports):
                return state, slide_plan(reports).get(agent_id), False
            return state, None, True
        return state._replace(P=1), None, False
    plan = balance_plan(reports)
    if plan.action == "terminate":
        return state, None, True
    return state, plan.moves.get(agent_id), False
