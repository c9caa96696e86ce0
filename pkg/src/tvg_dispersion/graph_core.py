"""Static footprints, per-round snapshots, journeys and connectivity checks.

Nodes are the integers ``0..n-1``. An edge is a sorted pair ``(u, v)`` with
``u < v``. Each node carries its own port labeling: ``ports[v][p]`` is the
neighbor reached from ``v`` through port ``p``. Node indices exist for the
simulator and adversaries only and never reach agent observations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

Edge = tuple[int, int]

FOOTPRINT_KINDS = ("clique", "ring", "path", "star", "random")


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Footprint:
    """A simple undirected graph with a local port labeling at every node."""

    n: int
    edges: tuple[Edge, ...]
    ports: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("footprint needs at least one node")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < v < self.n):
                raise ValueError(f"edge {(u, v)} is not a sorted pair of valid nodes")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge {(u, v)}")
            seen.add((u, v))
        if len(self.ports) != self.n:
            raise ValueError("port map must list every node")
        incident: list[set[int]] = [set() for _ in range(self.n)]
        for u, v in self.edges:
            incident[u].add(v)
            incident[v].add(u)
        for v, row in enumerate(self.ports):
            if len(set(row)) != len(row) or set(row) != incident[v]:
                raise ValueError(f"port map at node {v} is not a bijection onto its incident edges")

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    @cached_property
    def edge_index(self) -> dict[Edge, int]:
        return {e: i for i, e in enumerate(self.edges)}

    @cached_property
    def port_of(self) -> tuple[dict[int, int], ...]:
        """``port_of[v][u]`` is the port at ``v`` leading to neighbor ``u``."""
        return tuple({u: p for p, u in enumerate(row)} for row in self.ports)

    @cached_property
    def port_edges(self) -> tuple[tuple[Edge, ...], ...]:
        """``port_edges[v][p]`` is the edge behind port ``p`` of ``v``."""
        return tuple(tuple(norm_edge(v, u) for u in row) for v, row in enumerate(self.ports))

    @cached_property
    def bridges(self) -> frozenset[Edge]:
        """Edges whose removal disconnects the footprint."""
        if not _connected(self.n, self.edges):
            return frozenset()
        return frozenset(
            e for e in self.edges if not _connected(self.n, (f for f in self.edges if f != e))
        )

    @cached_property
    def is_connected(self) -> bool:
        return _connected(self.n, self.edges)

    @property
    def m(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return len(self.ports[v])

    def to_dict(self) -> dict:
        return {"n": self.n, "ports": [list(row) for row in self.ports]}

    @classmethod
    def from_ports(cls, ports: Sequence[Sequence[int]]) -> "Footprint":
        n = len(ports)
        edges = sorted({norm_edge(v, u) for v, row in enumerate(ports) for u in row})
        return cls(n, tuple(edges), tuple(tuple(int(u) for u in row) for row in ports))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Footprint":
        """Build with canonical ports: ascending neighbor index at every node."""
        es = sorted({norm_edge(int(a), int(b)) for a, b in edges})
        for u, v in es:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in es:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge {(u, v)} out of range for n={n}")
            nbrs[u].append(v)
            nbrs[v].append(u)
        return cls(n, tuple(es), tuple(tuple(sorted(row)) for row in nbrs))


@dataclass(frozen=True)
class Snapshot:
    round: int
    present: frozenset[Edge]


@dataclass(frozen=True)
class Journey:
    steps: tuple[tuple[Edge, int], ...] = ()
    nodes: tuple[int, ...] = field(default=())

    @property
    def arrival(self) -> int | None:
        return self.steps[-1][1] if self.steps else None


def _connected(n: int, edges: Iterable[Edge]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == n


def make_footprint(kind: str, n: int, seed: int | None = None, extra_edges: int | None = None) -> Footprint:
    """Generate a footprint with canonical port labels.

    ``random`` builds a seeded random spanning tree plus ``extra_edges``
    further edges (default ``n // 2``).
    """
    if kind not in FOOTPRINT_KINDS:
        raise ValueError(f"unknown footprint kind {kind!r}")
    if n < 2:
        raise ValueError("footprints need n >= 2")
    if kind == "clique":
        edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    elif kind == "ring":
        if n < 3:
            raise ValueError("a ring needs n >= 3")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, n)]
    else:
        rng = random.Random(seed)
        order = list(range(n))
        rng.shuffle(order)
        edges = [(order[i], order[rng.randrange(i)]) for i in range(1, n)]
        tree = {norm_edge(*e) for e in edges}
        missing = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in tree]
        rng.shuffle(missing)
        edges += missing[: n // 2 if extra_edges is None else extra_edges]
    return Footprint.from_edges(n, edges)


def permute_ports(f: Footprint, seed: int) -> Footprint:
    """Same graph, with each node's port order shuffled by a seeded RNG."""
    rng = random.Random(seed)
    rows = []
    for row in f.ports:
        row = list(row)
        rng.shuffle(row)
        rows.append(tuple(row))
    return Footprint(f.n, f.edges, tuple(rows))


def neighbor_via_port(f: Footprint, v: int, p: int) -> int:
    if not (0 <= v < f.n):
        raise ValueError(f"node {v} out of range")
    if not (0 <= p < len(f.ports[v])):
        raise ValueError(f"port {p} out of range at node {v} (degree {len(f.ports[v])})")
    return f.ports[v][p]


def _present(s: Snapshot | Iterable[Edge]) -> frozenset[Edge]:
    return s.present if isinstance(s, Snapshot) else frozenset(s)


def components(n: int, present: Iterable[Edge]) -> list[list[int]]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in present:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values())


def is_snapshot_connected(f: Footprint, s: Snapshot | Iterable[Edge]) -> bool:
    present = _present(s)
    missing = f.m - len(present)
    # fast paths through the precomputed bridge set
    if missing == 0:
        return f.is_connected
    if missing == 1 and f.is_connected:
        (gone,) = f.edge_set - present
        return gone not in f.bridges
    return _connected(f.n, present)


def missing_edge_count(f: Footprint, s: Snapshot | Iterable[Edge]) -> int:
    present = _present(s)
    if not present <= f.edge_set:
        raise ValueError("snapshot contains edges outside the footprint")
    return f.m - len(present)


def snapshot_distances(f: Footprint, present: frozenset[Edge], src: int) -> list[int | None]:
    """Hop distances from ``src`` in the snapshot graph (None when unreachable)."""
    dist: list[int | None] = [None] * f.n
    dist[src] = 0
    frontier = [src]
    while frontier:
        nxt = []
        for x in frontier:
            for y in f.ports[x]:
                if dist[y] is None and norm_edge(x, y) in present:
                    dist[y] = dist[x] + 1
                    nxt.append(y)
        frontier = nxt
    return dist


def _by_round(sched: Sequence[Snapshot] | Mapping[int, Snapshot]) -> dict[int, frozenset[Edge]]:
    if isinstance(sched, Mapping):
        return {r: _present(s) for r, s in sched.items()}
    return {s.round: s.present for s in sched}


def find_journey(
    f: Footprint,
    sched: Sequence[Snapshot] | Mapping[int, Snapshot],
    u: int,
    v: int,
    r: int,
    horizon: int | None = None,
) -> Journey | None:
    """Earliest-arrival journey from ``u`` to ``v`` leaving no earlier than round ``r``.

    Breadth-first search over the time-expanded graph: each round an agent
    may cross at most one present edge. With ``horizon`` set, the last step
    must happen by round ``r + horizon``.
    """
    if u == v:
        return Journey((), (u,))
    rounds = _by_round(sched)
    if not rounds:
        return None
    last = max(rounds)
    if horizon is not None:
        last = min(last, r + horizon)
    # pred[x] = (previous node, edge, round) for the first time x was reached
    pred: dict[int, tuple[int, Edge, int]] = {}
    reached = {u}
    for t in range(r, last + 1):
        present = rounds.get(t)
        if present is None:
            continue
        new = []
        for x in sorted(reached):
            for y in f.ports[x]:
                e = norm_edge(x, y)
                if y not in reached and y not in pred and e in present:
                    pred[y] = (x, e, t)
                    new.append(y)
        reached.update(new)
        if v in reached:
            steps = []
            nodes = [v]
            x = v
            while x != u:
                px, e, tt = pred[x]
                steps.append((e, tt))
                nodes.append(px)
                x = px
            return Journey(tuple(reversed(steps)), tuple(reversed(nodes)))
    return None


def is_valid_journey(f: Footprint, sched, j: Journey, u: int, v: int) -> bool:
    rounds = _by_round(sched)
    if not j.steps:
        return u == v
    x = u
    prev = None
    for e, t in j.steps:
        if prev is not None and t <= prev:
            return False
        if e not in rounds.get(t, frozenset()) or x not in e:
            return False
        x = e[1] if e[0] == x else e[0]
        prev = t
    return x == v


def check_temporal_connectivity(
    f: Footprint,
    sched: Sequence[Snapshot] | Mapping[int, Snapshot],
    start_window: Iterable[int],
    horizon: int,
) -> bool:
    """All ordered pairs reach each other by journeys starting at every window round.

    The result only speaks about the given finite prefix.
    """
    return first_temporal_violation(f, sched, start_window, horizon) is None


def first_temporal_violation(f, sched, start_window, horizon) -> tuple[int, int] | None:
    """Return ``(round, source)`` of the first failure, or None."""
    rounds = _by_round(sched)
    full = (1 << f.n) - 1
    # per round, a neighbor bitmask for every node
    masks: dict[int, list[int]] = {}

    def adj(t: int) -> list[int] | None:
        if t not in masks:
            present = rounds.get(t)
            if present is None:
                return None
            row = [0] * f.n
            for a, b in present:
                row[a] |= 1 << b
                row[b] |= 1 << a
            masks[t] = row
        return masks[t]

    for r in start_window:
        for t in range(r, r + horizon + 1):
            if adj(t) is None:
                raise ValueError(f"schedule prefix does not cover round {t}")
        for u in range(f.n):
            reach = 1 << u
            for t in range(r, r + horizon + 1):
                row = masks[t]
                grow = reach
                x = reach
                while x:
                    low = x & -x
                    grow |= row[low.bit_length() - 1]
                    x ^= low
                reach = grow
                if reach == full:
                    break
            if reach != full:
                return (r, u)
    return None


def check_ell_bounded(f: Footprint, sched: Sequence[Snapshot] | Mapping[int, Snapshot], ell: int) -> bool:
    return first_ell_violation(f, sched, ell) is None


def first_ell_violation(f, sched, ell: int) -> int | None:
    rounds = _by_round(sched)
    for t in sorted(rounds):
        present = rounds[t]
        if missing_edge_count(f, present) > ell or not is_snapshot_connected(f, present):
            return t
    return None
