"""Simple reference algorithms used to exercise the adversaries."""

from __future__ import annotations

from typing import NamedTuple

from ..engine import Algorithm, AgentId, ModelSpec


def _mix(a: int, b: int, seed: int) -> int:
    x = (a * 0x9E3779B1 + b * 0x85EBCA77 + seed * 0xC2B2AE3D) & 0xFFFFFFFF
    x ^= x >> 15
    x = (x * 0x2C1B3C6D) & 0xFFFFFFFF
    x ^= x >> 12
    return x


class ClockState(NamedTuple):
    ID: AgentId
    r: int = 0


class RandomWalker(Algorithm):
    """Every agent except the smallest at its node hops through a pseudo-random port."""

    name = "random_walker"
    requires = ModelSpec("zero_hop", "f2f")

    def __init__(self, seed: int = 0):
        self.seed = seed

    def initial_state(self, agent_id):
        return ClockState(agent_id, 0)

    def transition(self, agent_id, state, obs):
        state = state._replace(r=state.r + 1)
        if not obs.colocated or all(agent_id < a for a, _ in obs.colocated) or obs.my_degree == 0:
            return state, None, False
        return state, _mix(agent_id, state.r, self.seed) % obs.my_degree, False


class GreedyHoleSeeker(Algorithm):
    """Agents above the ceiling load leave towards the emptiest visible neighbor.

    With one-hop data the target is the present neighbor with the fewest
    agents (smallest port on ties); without it, surplus agents spread over
    ports in a round-robin pattern. Knows n and k.
    """

    name = "greedy"
    requires = ModelSpec("zero_hop", "f2f")

    def __init__(self, n: int, k: int):
        self.hi = -(-k // n)
        self.lo = k // n

    def initial_state(self, agent_id):
        return ClockState(agent_id, 0)

    def transition(self, agent_id, state, obs):
        state = state._replace(r=state.r + 1)
        here = sorted([agent_id] + [a for a, _ in obs.colocated])
        rank = here.index(agent_id)
        count = len(here)
        deg = obs.my_degree
        if deg == 0:
            return state, None, False
        if obs.neighborhood is None:
            if rank < self.hi:
                return state, None, False
            return state, (state.r + rank) % deg, False
        loads = [
            (len(nv.occupants), q) for q, nv in enumerate(obs.neighborhood) if nv.present
        ]
        if not loads:
            return state, None, False
        loads.sort()
        if rank >= self.hi:
            # surplus agents fan out over the least loaded neighbors
            i = (rank - self.hi) % len(loads)
            return state, loads[i][1], False
        if rank == count - 1 and count > self.lo and loads[0][0] < self.lo:
            return state, loads[0][1], False
        return state, None, False
