"""Weak dispersion by sliding agents into holes.

Every node's minimum-ID agent broadcasts one tuple per port describing the
node (agent count, its own ID) and what lies behind the port (the minimum ID
at the neighbor, or a hole marker). With global communication all agents
receive the same set of tuples and so reconstruct the same partial picture.

Slide rule: inside each occupied component, take the multinode with the
smallest ID that reaches a hole through singly-occupied nodes; among its
shortest routes to a hole take the lexicographically smallest port sequence,
and shift every agent on that chain one hop forward.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache
from typing import NamedTuple

from ..engine import Algorithm, AgentId, ModelSpec, Observation


class SvTuple(NamedTuple):
    alpha: int  # agents at v
    id_v: AgentId  # minimum ID at v
    port: int
    id_u: AgentId | None  # minimum ID behind the port; None marks a hole (or an absent edge)
    present: bool = True  # False when the edge behind the port is missing this round

    @property
    def is_hole(self) -> bool:
        return self.present and self.id_u is None


class NodeReport(NamedTuple):
    alpha: int
    id_v: AgentId
    ports: tuple[tuple[bool, AgentId | None], ...]


class WeakState(NamedTuple):
    ID: AgentId


def build_sv(agent_id: AgentId, obs: Observation) -> tuple[SvTuple, ...]:
    """The tuples a node's minimum-ID agent broadcasts. Needs one-hop data."""
    if obs.neighborhood is None:
        raise ValueError("building S_v needs one-hop visibility")
    alpha = 1 + len(obs.colocated)
    id_v = min([agent_id] + [a for a, _ in obs.colocated])
    out = []
    for q, nv in enumerate(obs.neighborhood):
        if not nv.present:
            out.append(SvTuple(alpha, id_v, q, None, False))
        elif nv.occupants:
            out.append(SvTuple(alpha, id_v, q, nv.occupants[0][0], True))
        else:
            out.append(SvTuple(alpha, id_v, q, None, True))
    return tuple(out)


def is_node_leader(agent_id: AgentId, obs: Observation) -> bool:
    return all(agent_id < a for a, _ in obs.colocated)


def collect_reports(obs: Observation) -> tuple[NodeReport, ...]:
    """Node reports from the panorama (full visibility) or from received broadcasts."""
    if obs.panorama is not None:
        return tuple(NodeReport(nv.count, nv.min_id, nv.ports) for nv in obs.panorama)
    reports = {}
    for _, payload in obs.messages:
        if not payload or not isinstance(payload[0], SvTuple):
            continue
        first = payload[0]
        ports = tuple((t.present, t.id_u) for t in sorted(payload, key=lambda t: t.port))
        reports[first.id_v] = NodeReport(first.alpha, first.id_v, ports)
    return tuple(reports[i] for i in sorted(reports))


def _adjacency(reports: tuple[NodeReport, ...]) -> dict[AgentId, list[tuple[int, AgentId]]]:
    known = {r.id_v for r in reports}
    return {
        r.id_v: [(q, u) for q, (present, u) in enumerate(r.ports) if present and u is not None and u in known]
        for r in reports
    }


def occupied_components(reports: tuple[NodeReport, ...]) -> list[list[AgentId]]:
    adj = _adjacency(reports)
    seen: set[AgentId] = set()
    comps = []
    for r in reports:
        if r.id_v in seen:
            continue
        comp = []
        todo = [r.id_v]
        seen.add(r.id_v)
        while todo:
            x = todo.pop()
            comp.append(x)
            for _, y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
        comps.append(sorted(comp))
    return sorted(comps)


def hole_route(reports: tuple[NodeReport, ...], start: AgentId) -> list[tuple[AgentId, int]] | None:
    """Shortest, then port-lexicographically smallest, route from ``start`` to a hole.

    Only singly-occupied nodes may be passed through. Returns the chain as
    (node leader ID, port to take) pairs, or None.
    """
    by_id = {r.id_v: r for r in reports}
    adj = _adjacency(reports)
    parent: dict[AgentId, tuple[AgentId, int] | None] = {start: None}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for q, (present, u) in enumerate(by_id[x].ports):
            if present and u is None:
                chain = [(x, q)]
                while parent[x] is not None:
                    px, pq = parent[x]
                    chain.append((px, pq))
                    x = px
                return chain[::-1]
        for q, y in adj[x]:
            if y not in parent and by_id[y].alpha == 1:
                parent[y] = (x, q)
                queue.append(y)
    return None


@lru_cache(maxsize=4096)
def slide_plan(reports: tuple[NodeReport, ...]) -> dict[AgentId, int]:
    """Moves of one slide round, keyed by the moving agent (each node's minimum ID)."""
    by_id = {r.id_v: r for r in reports}
    moves: dict[AgentId, int] = {}
    for comp in occupied_components(reports):
        for m in (x for x in comp if by_id[x].alpha >= 2):
            chain = hole_route(reports, m)
            if chain is not None:
                moves.update(chain)
                break
    return moves


def hole_seen(reports: tuple[NodeReport, ...]) -> bool:
    return any(present and u is None for r in reports for present, u in r.ports)


class WeakDispersion(Algorithm):
    """Slides until no multinode or no hole is visible, then terminates."""

    name = "weak_disp"
    requires = ModelSpec("one_hop", "global")
    broadcasts = True

    def initial_state(self, agent_id: AgentId) -> WeakState:
        return WeakState(agent_id)

    def broadcast(self, agent_id, state, obs):
        if obs.neighborhood is not None and is_node_leader(agent_id, obs):
            return build_sv(agent_id, obs)
        return None

    def transition(self, agent_id, state, obs):
        return weak_disp_transition(agent_id, state, obs)


def weak_disp_transition(agent_id: AgentId, state, obs: Observation):
    reports = collect_reports(obs)
    if not reports:
        return state, None, False
    if not hole_seen(reports) or all(r.alpha < 2 for r in reports):
        return state, None, True
    return state, slide_plan(reports).get(agent_id), False
