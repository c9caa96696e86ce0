"""Snapshot generators: random schedules and the adaptive impossibility adversaries.

Every source here is a ``ScheduleSource``: the engine calls
``snapshot(round, footprint, view, oracle)`` once per round. The view is the
configuration and agent states at the start of the round; the oracle answers
"what would this round produce under snapshot S" without committing anything.

The adaptive constructions count rounds from 0 (their first engine round is
their round 0). Each one checks the arithmetic its argument rests on while it
runs and raises ``AdversaryInvariantError`` if that ever fails, rather than
quietly picking some other snapshot.

Adversaries keep a little memory between rounds (which node is isolated,
whether delegation happened), so use a fresh instance per run.
"""

from __future__ import annotations

import math
import random
from typing import Iterable

from .engine import (
    ConnectivityClass,
    EngineError,
    Oracle,
    ScheduleSource,
    SystemView,
    is_balanced,
)
from .graph_core import Edge, Footprint, Snapshot, _connected, norm_edge


class AdversaryInvariantError(EngineError):
    """A construction's own guarantee failed at runtime."""


class AdversaryPreconditionError(ValueError):
    """The scenario does not meet a construction's requirements."""


def _is_clique(f: Footprint) -> bool:
    return f.m == f.n * (f.n - 1) // 2


def _is_ring(f: Footprint) -> bool:
    return f.n >= 3 and f.m == f.n and all(f.degree(v) == 2 for v in range(f.n)) and f.is_connected


def argmax_node(counts: Iterable[int], nodes: Iterable[int]) -> int:
    """Node with the most agents; smallest index on ties."""
    return min(nodes, key=lambda v: (-counts[v], v))


def argmin_node(counts, nodes: Iterable[int]) -> int:
    return min(nodes, key=lambda v: (counts[v], v))


def clique_split(f: Footprint, side: Iterable[int]) -> frozenset[Edge]:
    """Edges of the footprint that stay inside ``side`` or inside its complement."""
    s = set(side)
    return frozenset((u, v) for u, v in f.edges if (u in s) == (v in s))


def _pk(k: int, n: int) -> tuple[int, int]:
    return divmod(k, n)


# ---------------------------------------------------------------- random schedules


class RandomSchedule(ScheduleSource):
    """Seeded random deletions that respect a connectivity class.

    ``one_bounded`` draws uniformly from "delete nothing" and every non-bridge
    edge. ``ell_bounded`` draws a size s in [0, ell] and deletes random edges
    one at a time, skipping any whose removal would disconnect the snapshot.
    ``always_full`` never deletes.
    """

    name = "random"

    def __init__(self, kind: str = "one_bounded", seed: int = 0, ell: int = 1):
        if kind not in ("one_bounded", "ell_bounded", "always_full"):
            raise ValueError(f"unknown random schedule class {kind!r}")
        self.kind = kind
        self.seed = seed
        self.ell = ell if kind == "ell_bounded" else (1 if kind == "one_bounded" else 0)
        self.rng = random.Random(seed)
        self.declared = ConnectivityClass(kind, self.ell if kind == "ell_bounded" else 0)

    def snapshot(self, round, f, view, oracle):
        full = f.edge_set
        if self.kind == "always_full" or f.m == 0:
            return Snapshot(round, full)
        if self.kind == "one_bounded":
            choices = [None] + [e for e in f.edges if e not in f.bridges]
            gone = self.rng.choice(choices)
            if gone is None:
                return Snapshot(round, full)
            self.reason = f"delete {list(gone)}"
            return Snapshot(round, full - {gone})
        want = self.rng.randint(0, self.ell)
        order = list(f.edges)
        self.rng.shuffle(order)
        present = set(full)
        removed = []
        for e in order:
            if len(removed) >= want:
                break
            present.discard(e)
            if _connected(f.n, present):
                removed.append(e)
            else:
                present.add(e)
        if removed:
            self.reason = f"delete {sorted(map(list, removed))}"
        return Snapshot(round, frozenset(present))

    def describe(self):
        return {"name": self.name, "kind": self.kind, "seed": self.seed, "ell": self.ell}


# ---------------------------------------------------------------- temporal split adversaries


class TemporalSplitMax(ScheduleSource):
    """Keeps some node at p+2 or more agents on a clique, staying temporally connected.

    Round 0 and even rounds cut one node off from the rest (the most loaded
    node of the previous pair; at round 0 the most loaded node overall). Odd
    rounds pair the isolated node with the most loaded node of the other side.
    Inside a pair the larger end count is at least the ceiling of the pair's
    average, which together with q >= 3 keeps it at p+2 or more.
    """

    name = "temporal_split_max"
    declared = ConnectivityClass("temporal")

    def __init__(self, start_round: int = 1, check_preconditions: bool = True):
        self.start = start_round
        self.check_preconditions = check_preconditions
        self.isolated: int | None = None
        self.pair: tuple[int, int] | None = None
        self.pair_total = 0
        self.history: list[tuple[int, tuple[int, ...]]] = []  # (engine round, side containing the isolated node)

    def _pre(self, f: Footprint, view: SystemView) -> None:
        n, k = view.n, view.k
        p, q = _pk(k, n)
        if not _is_clique(f):
            raise AdversaryPreconditionError("the split construction needs a clique footprint")
        if n < 4:
            raise AdversaryPreconditionError("the split construction needs n >= 4")
        if self.check_preconditions and not (3 <= q <= n - 1):
            raise AdversaryPreconditionError(f"need 3 <= q <= n-1, got q={q}")
        if max(view.configuration.counts) < p + 2:
            raise AdversaryPreconditionError("some node must start with at least p+2 agents")

    def snapshot(self, round, f, view, oracle):
        r = round - self.start
        counts = view.configuration.counts
        n = f.n
        p, q = _pk(view.k, n)
        if r == 0:
            self._pre(f, view)
            v1 = argmax_node(counts, range(n))
            return self._isolate(round, f, v1, f"isolate max node {v1}")
        if r % 2 == 1:
            v1 = self.isolated
            if counts[v1] < p + 2:
                raise AdversaryInvariantError(f"isolated node {v1} holds {counts[v1]} < p+2 agents")
            q1 = counts[v1] - p
            bound = p + math.ceil(((n - 2) * q1 + q) / (2 * (n - 1)))
            if bound < p + 2:
                raise AdversaryInvariantError(f"pair bound {bound} falls below p+2")
            v2 = argmax_node(counts, (v for v in range(n) if v != v1))
            self.pair = (v1, v2)
            self.pair_total = counts[v1] + counts[v2]
            self.history.append((round, tuple(sorted(self.pair))))
            self.reason = f"pair {v1} with max node {v2}"
            return Snapshot(round, clique_split(f, self.pair))
        a, b = self.pair
        top = max(counts[a], counts[b])
        if top < math.ceil(self.pair_total / 2) or top < p + 2:
            raise AdversaryInvariantError(f"pair {self.pair} ended with max {top}, below the averaging bound")
        v1 = argmax_node(counts, self.pair)
        return self._isolate(round, f, v1, f"isolate max node {v1} of the pair")

    def _isolate(self, round: int, f: Footprint, v: int, why: str) -> Snapshot:
        self.isolated = v
        self.pair = None
        self.history.append((round, (v,)))
        self.reason = why
        return Snapshot(round, clique_split(f, (v,)))

    def describe(self):
        return {"name": self.name, "start_round": self.start}


class TemporalSplitMin(ScheduleSource):
    """Mirror of the max construction on the least loaded node, with a hand-off.

    Round 0 isolates the least loaded node; odd rounds pair it with the least
    loaded node of the other side and even rounds isolate the lesser end of
    the pair. As soon as a node outside the isolated one ends an even round
    with p+2 or more agents, the max construction takes over for good, with
    that odd round as its round 0.
    """

    name = "temporal_split_min"
    declared = ConnectivityClass("temporal")

    def __init__(self, start_round: int = 1):
        self.start = start_round
        self.isolated: int | None = None
        self.pair: tuple[int, int] | None = None
        self.delegate: TemporalSplitMax | None = None
        self.delegated_at: int | None = None
        self.history: list[tuple[int, tuple[int, ...]]] = []

    def _pre(self, f: Footprint, view: SystemView) -> None:
        n, k = view.n, view.k
        p, q = _pk(k, n)
        if not _is_clique(f):
            raise AdversaryPreconditionError("the split construction needs a clique footprint")
        if n < 6:
            raise AdversaryPreconditionError("the min-split construction needs n >= 6")
        if not (3 <= q <= n - 3):
            raise AdversaryPreconditionError(f"need 3 <= q <= n-3, got q={q}")
        if p < 1:
            raise AdversaryPreconditionError("the min-split construction needs p >= 1")
        if is_balanced(view.configuration.counts, k, n):
            raise AdversaryPreconditionError("the start configuration is already balanced")

    def snapshot(self, round, f, view, oracle):
        if self.delegate is not None:
            snap = self.delegate.snapshot(round, f, view, oracle)
            self.reason = self.delegate.reason
            self.history.append(self.delegate.history[-1])
            return snap
        r = round - self.start
        counts = view.configuration.counts
        n = f.n
        p, _ = _pk(view.k, n)
        if r == 0:
            self._pre(f, view)
            v1 = argmin_node(counts, range(n))
            return self._isolate(round, f, v1, f"isolate min node {v1}")
        if r % 2 == 1:
            v1 = self.isolated
            rest = [v for v in range(n) if v != v1]
            if any(counts[v] >= p + 2 for v in rest):
                self.delegate = TemporalSplitMax(start_round=round, check_preconditions=False)
                self.delegated_at = round
                snap = self.delegate.snapshot(round, f, view, oracle)
                self.reason = f"hand over to max split; {self.delegate.reason}"
                self.history.append(self.delegate.history[-1])
                return snap
            v2 = argmin_node(counts, rest)
            self.pair = (v1, v2)
            self.history.append((round, tuple(sorted(self.pair))))
            self.reason = f"pair {v1} with min node {v2}"
            return Snapshot(round, clique_split(f, self.pair))
        v1 = argmin_node(counts, self.pair)
        return self._isolate(round, f, v1, f"isolate min node {v1} of the pair")

    def _isolate(self, round: int, f: Footprint, v: int, why: str) -> Snapshot:
        self.isolated = v
        self.pair = None
        self.history.append((round, (v,)))
        self.reason = why
        return Snapshot(round, clique_split(f, (v,)))

    def describe(self):
        return {"name": self.name, "start_round": self.start}


# ---------------------------------------------------------------- ring and path adversaries


VARIANTS = ("one_hop_f2f", "zero_hop_global")


def _flows(moves, u: int, w: int) -> tuple[int, int]:
    """(agents moving u -> w, agents moving w -> u)."""
    out = sum(1 for _, a, b in moves if a == u and b == w)
    back = sum(1 for _, a, b in moves if a == w and b == u)
    return out, back


class RingOneEdge(ScheduleSource):
    """Deletes at most one ring edge per round so that k = pn agents never balance.

    If the full ring would not balance, nothing is deleted. Otherwise, for the
    one_hop_f2f variant take the smallest-index node u with fewer than p
    agents and delete its edge to a neighbor that would send u more agents
    than it takes back; for zero_hop_global take a node with more than p
    agents and cut a side where u would lose agents on balance. A second
    oracle call confirms the reduced ring leaves the configuration unbalanced.
    """

    name = "ring_one_edge"
    declared = ConnectivityClass("one_bounded")

    def __init__(self, variant: str = "one_hop_f2f"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown ring adversary variant {variant!r}")
        self.variant = variant
        self.deletions = 0
        self._checked = False

    def _pre(self, f: Footprint, view: SystemView) -> None:
        if not _is_ring(f):
            raise AdversaryPreconditionError("the ring adversary needs a ring footprint")
        need = 4 if self.variant == "one_hop_f2f" else 3
        if f.n < need:
            raise AdversaryPreconditionError(f"the {self.variant} ring adversary needs n >= {need}")
        p, q = _pk(view.k, f.n)
        if q != 0 or p < 1:
            raise AdversaryPreconditionError("the ring adversary needs k = pn with p >= 1")
        if is_balanced(view.configuration.counts, view.k, f.n):
            raise AdversaryPreconditionError("the start configuration is already balanced")

    def snapshot(self, round, f, view, oracle: Oracle):
        if not self._checked:
            self._pre(f, view)
            self._checked = True
        full = f.edge_set
        out = oracle(full)
        if not is_balanced(out.after.counts, view.k, f.n):
            return Snapshot(round, full)
        counts = view.configuration.counts
        p = view.k // f.n
        if self.variant == "one_hop_f2f":
            candidates = [v for v in range(f.n) if counts[v] < p]
        else:
            candidates = [v for v in range(f.n) if counts[v] > p]
        if not candidates:
            raise AdversaryInvariantError("balanced outcome predicted but no node is off p at the start")
        u = candidates[0]
        side = None
        for w in sorted(f.ports[u]):
            sent, got = _flows(out.moves, u, w)
            net = got - sent
            if (net > 0) if self.variant == "one_hop_f2f" else (net < 0):
                side = w
                break
        if side is None:
            raise AdversaryInvariantError(f"no qualifying edge at node {u} although the oracle predicts balance")
        present = full - {norm_edge(u, side)}
        check = oracle(present)
        if is_balanced(check.after.counts, view.k, f.n):
            raise AdversaryInvariantError(f"deleting edge {u}-{side} still lets the agents balance")
        self.deletions += 1
        self.reason = f"delete {u}-{side}"
        return Snapshot(round, present)

    def describe(self):
        return {"name": self.name, "variant": self.variant}


def sorted_path(counts) -> list[int]:
    """Nodes by descending agent count, ties by index: the path w_1 ~ ... ~ w_n."""
    return sorted(range(len(counts)), key=lambda v: (-counts[v], v))


def path_edges(order: list[int]) -> frozenset[Edge]:
    return frozenset(norm_edge(order[i], order[i + 1]) for i in range(len(order) - 1))


def swapped_path_edges(order: list[int]) -> frozenset[Edge]:
    """The sorted path with edge w_4 w_5 replaced by w_1 w_5."""
    base = set(path_edges(order))
    base.discard(norm_edge(order[3], order[4]))
    base.add(norm_edge(order[0], order[4]))
    return frozenset(base)


class PathSort(ScheduleSource):
    """Shows the clique as a path sorted by load so some node keeps p+2 or more agents.

    If the oracle says the sorted path P already leaves a node at p+2 or more,
    P is used. Otherwise the swapped path P' (w_4 w_5 replaced by w_1 w_5) is
    used; a second oracle call checks that P' leaves such a node.
    """

    name = "path_sort"

    def __init__(self, variant: str = "one_hop_f2f", ell: int = 36):
        if variant not in VARIANTS:
            raise ValueError(f"unknown path adversary variant {variant!r}")
        self.variant = variant
        self.ell = ell
        self.declared = ConnectivityClass("ell_bounded", ell)
        self.swaps: list[int] = []  # engine rounds where P' was emitted
        self._checked = False

    def _pre(self, f: Footprint, view: SystemView) -> None:
        n = f.n
        if not _is_clique(f):
            raise AdversaryPreconditionError("the path adversary needs a clique footprint")
        if self.ell < 25:
            raise AdversaryPreconditionError("the path adversary needs ell >= 25")
        if not (6 <= n <= math.isqrt(self.ell)):
            raise AdversaryPreconditionError(f"need 6 <= n <= floor(sqrt(ell)) = {math.isqrt(self.ell)}, got n={n}")
        p, q = _pk(view.k, n)
        if not (5 <= q <= n - 1):
            raise AdversaryPreconditionError(f"need 5 <= q <= n-1, got q={q}")
        if max(view.configuration.counts) < p + 2:
            raise AdversaryPreconditionError("some node must start with at least p+2 agents")

    def snapshot(self, round, f, view, oracle: Oracle):
        if not self._checked:
            self._pre(f, view)
            self._checked = True
        counts = view.configuration.counts
        p = view.k // f.n
        order = sorted_path(counts)
        straight = path_edges(order)
        if max(oracle(straight).after.counts) >= p + 2:
            self.reason = "P_r " + "-".join(map(str, order))
            return Snapshot(round, straight)
        swapped = swapped_path_edges(order)
        if max(oracle(swapped).after.counts) < p + 2:
            raise AdversaryInvariantError("the swapped path leaves every node below p+2")
        self.swaps.append(round)
        self.reason = "P_r' " + "-".join(map(str, order))
        return Snapshot(round, swapped)

    def describe(self):
        return {"name": self.name, "variant": self.variant, "ell": self.ell}


# ---------------------------------------------------------------- stress adversary for the DFS algorithms


class BlockLargestGroup(ScheduleSource):
    """Deletes the edge the largest co-moving group wants to use, whenever that is legal.

    Movers are grouped by (node, port). The largest group is chosen (smallest
    member ID on ties) and its edge removed unless it is a bridge of the
    footprint. At most one edge is missing per round.
    """

    name = "block_largest_group"
    declared = ConnectivityClass("one_bounded")

    def __init__(self):
        self.blocked = 0

    def snapshot(self, round, f, view, oracle: Oracle):
        full = f.edge_set
        out = oracle(full)
        pos = view.configuration.position
        groups: dict[tuple[int, int], list[int]] = {}
        for a, port in out.intents:
            if port is not None:
                groups.setdefault((pos[a], port), []).append(a)
        if not groups:
            return Snapshot(round, full)
        (v, port), members = min(groups.items(), key=lambda kv: (-len(kv[1]), min(kv[1])))
        e = f.port_edges[v][port]
        if e in f.bridges:
            return Snapshot(round, full)
        self.blocked += 1
        self.reason = f"block {len(members)} agents at {v} port {port}"
        return Snapshot(round, full - {e})


ADVERSARIES = (
    "static",
    "fixed",
    "random",
    "temporal_split_max",
    "temporal_split_min",
    "ring_one_edge",
    "path_sort",
    "block_largest_group",
)
