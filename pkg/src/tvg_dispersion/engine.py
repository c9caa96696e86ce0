"""Synchronous Communicate-Compute-Move round loop.

One engine round is one CCM cycle. Rounds are numbered from 1. Within a
round every non-terminated agent observes its node (and, depending on the
model, its ports and neighbors), the agents broadcast, each agent computes a
new state and a move intent, and all intents are resolved simultaneously
against the round's snapshot.

Agents whose algorithm declares them dormant are not evaluated while they sit
only with other dormant or terminated agents; their state is advanced lazily
when they are next looked at. This is exact: a dormant agent's transition in
that situation is a pure clock tick, and the algorithm guarantees it.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence

from .graph_core import Edge, Footprint, Snapshot, is_snapshot_connected, snapshot_distances

AgentId = int
Intent = int | None  # None means Stay, an int is the port to move through

VISIBILITY = ("zero_hop", "one_hop", "full")
COMMUNICATION = ("f2f", "l_hop", "global")


class EngineError(Exception):
    pass


class IllegalMove(EngineError):
    pass


class AdversaryClassViolation(EngineError):
    def __init__(self, round: int, reason: str):
        super().__init__(f"round {round}: {reason}")
        self.round = round
        self.reason = reason


class OracleBudgetExceeded(EngineError):
    pass


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class ModelSpec:
    visibility: str = "zero_hop"
    communication: str = "f2f"
    hops: int = 0

    def __post_init__(self) -> None:
        if self.visibility not in VISIBILITY:
            raise ValueError(f"unknown visibility {self.visibility!r}")
        if self.communication not in COMMUNICATION:
            raise ValueError(f"unknown communication {self.communication!r}")
        if self.hops < 0:
            raise ValueError("hop range must be non-negative")

    @property
    def comm_range(self) -> float:
        if self.communication == "f2f":
            return 0
        if self.communication == "global":
            return float("inf")
        return self.hops

    def covers(self, required: "ModelSpec") -> bool:
        """True when this model gives agents at least what ``required`` does."""
        return (
            VISIBILITY.index(self.visibility) >= VISIBILITY.index(required.visibility)
            and self.comm_range >= required.comm_range
        )

    def label(self) -> str:
        comm = f"l_hop({self.hops})" if self.communication == "l_hop" else self.communication
        return f"{self.visibility}+{comm}"

    def to_dict(self) -> dict:
        d = {"visibility": self.visibility, "communication": self.communication}
        if self.communication == "l_hop":
            d["hops"] = self.hops
        return d


@dataclass(frozen=True)
class ConnectivityClass:
    """Declared per-round guarantee of a schedule source."""

    kind: str = "any"  # any | temporal | one_bounded | ell_bounded | always_full
    ell: int = 0

    def check(self, f: Footprint, present: frozenset[Edge]) -> str | None:
        """Return a reason string when ``present`` breaks the class this round."""
        if self.kind in ("any", "temporal"):
            return None
        missing = f.m - len(present)
        if self.kind == "always_full":
            return None if missing == 0 else f"{missing} edges missing from an always-full schedule"
        bound = 1 if self.kind == "one_bounded" else self.ell
        if missing > bound:
            return f"{missing} edges missing, bound is {bound}"
        if not is_snapshot_connected(f, present):
            return "snapshot is disconnected"
        return None

    def label(self) -> str:
        return f"ell_bounded({self.ell})" if self.kind == "ell_bounded" else self.kind


# ---------------------------------------------------------------- configurations


@dataclass(frozen=True)
class Configuration:
    """Placement of agent IDs on nodes; each node lists its agents in ascending order."""

    placement: tuple[tuple[AgentId, ...], ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for row in self.placement:
            for a in row:
                if a in seen:
                    raise ValueError(f"agent {a} placed twice")
                seen.add(a)
            if list(row) != sorted(row):
                raise ValueError("node agent lists must be ascending")

    @classmethod
    def from_lists(cls, rows: Sequence[Iterable[AgentId]]) -> "Configuration":
        return cls(tuple(tuple(sorted(r)) for r in rows))

    @classmethod
    def from_positions(cls, n: int, pos: Mapping[AgentId, int]) -> "Configuration":
        rows: list[list[int]] = [[] for _ in range(n)]
        for a, v in pos.items():
            rows[v].append(a)
        return cls.from_lists(rows)

    @property
    def n(self) -> int:
        return len(self.placement)

    @cached_property
    def k(self) -> int:
        return sum(len(r) for r in self.placement)

    @cached_property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.placement)

    @cached_property
    def position(self) -> dict[AgentId, int]:
        return {a: v for v, row in enumerate(self.placement) for a in row}

    @cached_property
    def agents(self) -> tuple[AgentId, ...]:
        return tuple(sorted(self.position))

    @property
    def holes(self) -> int:
        return sum(1 for c in self.counts if c == 0)

    @property
    def multinodes(self) -> int:
        return sum(1 for c in self.counts if c >= 2)

    @property
    def occupied(self) -> int:
        return sum(1 for c in self.counts if c > 0)


def is_balanced(cfg: Configuration | Sequence[int], k: int | None = None, n: int | None = None) -> bool:
    counts = cfg.counts if isinstance(cfg, Configuration) else tuple(cfg)
    n = len(counts) if n is None else n
    k = sum(counts) if k is None else k
    lo, hi = k // n, -(-k // n)
    return all(lo <= c <= hi for c in counts)


# ---------------------------------------------------------------- observations


class NeighborView(NamedTuple):
    present: bool
    occupants: tuple[tuple[AgentId, Any], ...] | None  # None when the edge is absent


class NodeView(NamedTuple):
    """Node-anonymous summary of one occupied node, used for panoramas."""

    count: int
    min_id: AgentId
    ports: tuple[tuple[bool, AgentId | None], ...]  # (edge present, min ID at neighbor or None)


class Observation(NamedTuple):
    my_degree: int
    colocated: tuple[tuple[AgentId, Any], ...]  # other agents here, ascending ID, with states
    last_move_success: bool
    arrival_port: int | None  # port of the current node through which the agent entered last round
    neighborhood: tuple[NeighborView, ...] | None
    messages: tuple[tuple[AgentId, Any], ...]
    panorama: tuple[NodeView, ...] | None = None


# ---------------------------------------------------------------- algorithms


class Algorithm:
    """Base class for agent algorithms. Transitions must be pure."""

    name = "abstract"
    requires = ModelSpec()
    broadcasts = False
    # when True, ``dormant_until`` and ``advance`` may be used by the engine
    supports_dormancy = False

    def initial_state(self, agent_id: AgentId) -> Any:
        raise NotImplementedError

    def broadcast(self, agent_id: AgentId, state: Any, obs: Observation) -> Any:
        return None

    def transition(self, agent_id: AgentId, state: Any, obs: Observation) -> tuple[Any, Intent, bool]:
        raise NotImplementedError

    def dormant_until(self, state: Any) -> int | None:
        """Round before which the agent only ticks when left among dormant agents."""
        return None

    def advance(self, state: Any, rounds: int) -> Any:
        return state


# ---------------------------------------------------------------- memory accounting


def _width(v: Any, signed: bool = False) -> int:
    if v is None:
        return 1
    if isinstance(v, bool):
        return 1
    if isinstance(v, int):
        if signed:
            v += 1  # -1 sentinel encoded by offset
        if v < 0:
            return max(1, (-v).bit_length()) + 1
        return max(1, v.bit_length())
    if isinstance(v, str):
        return len(v)
    if isinstance(v, tuple):
        return sum(_width(x, signed) for x in v)
    raise TypeError(f"no bit width for {type(v).__name__}")


_cached_width = lru_cache(maxsize=1 << 16, typed=True)(_width)
_signed_flags: dict[type, tuple[bool, ...]] = {}


def memory_bits(state: Any) -> int:
    """Bits needed for an agent's persisted fields.

    Integers use the width of their current value (at least one bit); fields
    listed in the state's ``_signed`` set may hold -1 and are stored offset by
    one. Binary strings count their length, booleans one bit.
    """
    if state is None:
        return 0
    if hasattr(state, "_fields"):
        flags = _signed_flags.get(type(state))
        if flags is None:
            signed = getattr(state, "_signed", frozenset())
            flags = _signed_flags[type(state)] = tuple(f in signed for f in state._fields)
        return sum(map(_cached_width, state, flags))
    return _width(state)


# ---------------------------------------------------------------- observation building and moves


def build_observations(
    cfg: Configuration,
    f: Footprint,
    s: Snapshot | frozenset[Edge],
    m: ModelSpec,
    last_success: Mapping[AgentId, bool],
    states: Mapping[AgentId, Any],
    *,
    algo: Algorithm | None = None,
    arrival: Mapping[AgentId, int | None] | None = None,
    terminated: frozenset[AgentId] | set[AgentId] = frozenset(),
    nodes: Iterable[int] | None = None,
) -> dict[AgentId, Observation]:
    """Observations for the non-terminated agents (optionally only those on ``nodes``).

    Messages are produced by ``algo.broadcast`` from each sender's local view
    of the current round and delivered to every agent within range.
    """
    present = s.present if isinstance(s, Snapshot) else s
    placement = cfg.placement
    arrival = arrival or {}
    node_list = range(f.n) if nodes is None else sorted(set(nodes))
    one_hop = m.visibility != "zero_hop"
    full = m.visibility == "full"

    def occupants(v: int) -> tuple[tuple[AgentId, Any], ...]:
        return tuple((a, states[a]) for a in placement[v])

    hood_cache: dict[int, tuple[NeighborView, ...]] = {}

    def hood(v: int) -> tuple[NeighborView, ...]:
        if v not in hood_cache:
            views = []
            for u, e in zip(f.ports[v], f.port_edges[v]):
                views.append(NeighborView(True, occupants(u)) if e in present else NeighborView(False, None))
            hood_cache[v] = tuple(views)
        return hood_cache[v]

    panorama = None
    if full:
        pano = []
        for v in range(f.n):
            if placement[v]:
                ports = tuple(
                    (e in present, placement[u][0] if placement[u] else None)
                    for u, e in zip(f.ports[v], f.port_edges[v])
                )
                pano.append(NodeView(len(placement[v]), placement[v][0], ports))
        panorama = tuple(sorted(pano, key=lambda nv: nv.min_id))

    def local(a: AgentId, v: int, here: tuple) -> Observation:
        return Observation(
            my_degree=len(f.ports[v]),
            colocated=tuple(x for x in here if x[0] != a),
            last_move_success=last_success.get(a, True),
            arrival_port=arrival.get(a),
            neighborhood=hood(v) if one_hop else None,
            messages=(),
            panorama=panorama,
        )

    obs: dict[AgentId, Observation] = {}
    for v in node_list:
        here = occupants(v)
        for a, _ in here:
            if a not in terminated:
                obs[a] = local(a, v, here)

    if algo is not None and algo.broadcasts:
        # senders may sit outside ``nodes`` when the range is larger than zero
        reach = m.comm_range
        send_nodes = range(f.n) if reach > 0 else node_list
        outbox: dict[int, list[tuple[AgentId, Any]]] = {}
        for v in send_nodes:
            here = occupants(v)
            for a, st in here:
                if a in terminated:
                    continue
                o = obs.get(a) or local(a, v, here)
                payload = algo.broadcast(a, st, o)
                if payload is not None:
                    outbox.setdefault(v, []).append((a, payload))
        if reach == float("inf"):
            everything = tuple(sorted(msg for box in outbox.values() for msg in box))
            inbox = {v: everything for v in node_list}
        else:
            inbox = {}
            for v in node_list:
                if reach == 0:
                    got = outbox.get(v, [])
                else:
                    dist = snapshot_distances(f, present, v)
                    got = [msg for u, box in outbox.items() if dist[u] is not None and dist[u] <= reach for msg in box]
                inbox[v] = tuple(sorted(got))
        pos = cfg.position
        for a in obs:
            obs[a] = obs[a]._replace(messages=inbox[pos[a]])
    return obs


class Outcome(NamedTuple):
    after: Configuration
    moves: tuple[tuple[AgentId, int, int], ...]  # (agent, from, to) for relocated agents
    failed: tuple[AgentId, ...]  # agents whose move was blocked
    intents: tuple[tuple[AgentId, Intent], ...]  # evaluated agents, ascending ID
    arrivals: dict[AgentId, int]  # port at the destination for relocated agents


def apply_moves(
    cfg: Configuration,
    f: Footprint,
    s: Snapshot | frozenset[Edge],
    intents: Mapping[AgentId, Intent],
) -> tuple[Configuration, dict[AgentId, bool]]:
    """Resolve all intents simultaneously against one snapshot."""
    present = s.present if isinstance(s, Snapshot) else s
    out = _resolve(cfg, f, present, intents)
    success = {a: True for a in cfg.position}
    for a in out.failed:
        success[a] = False
    return out.after, success


def _resolve(cfg: Configuration, f: Footprint, present: frozenset[Edge], intents: Mapping[AgentId, Intent]) -> Outcome:
    pos = cfg.position
    moves = []
    failed = []
    arrivals = {}
    for a in sorted(intents):
        p = intents[a]
        if p is None:
            continue
        v = pos[a]
        row = f.ports[v]
        if not isinstance(p, int) or not (0 <= p < len(row)):
            raise IllegalMove(f"agent {a} at a degree-{len(row)} node chose port {p!r}")
        if f.port_edges[v][p] in present:
            u = row[p]
            moves.append((a, v, u))
            arrivals[a] = f.port_of[u][v]
        else:
            failed.append(a)
    if moves:
        rows = [list(r) for r in cfg.placement]
        for a, v, u in moves:
            rows[v].remove(a)
            rows[u].append(a)
        after = Configuration.from_lists(rows)
    else:
        after = cfg
    return Outcome(after, tuple(moves), tuple(failed), tuple(sorted(intents.items())), arrivals)


# ---------------------------------------------------------------- schedule sources


class ScheduleSource:
    """Supplies the present-edge set of every round.

    Adaptive sources receive a read-only ``SystemView`` and an ``Oracle``
    and may set ``reason`` to annotate the trace.
    """

    name = "source"
    declared = ConnectivityClass("any")
    reason: str | None = None

    def snapshot(self, round: int, f: Footprint, view: "SystemView", oracle: "Oracle") -> Snapshot:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


class FixedSequence(ScheduleSource):
    """Replays a list of edge subsets; rounds past the end repeat cyclically or stay full."""

    name = "fixed"

    def __init__(self, snapshots: Sequence[Iterable[Sequence[int]]], cycle: bool = True, declared: ConnectivityClass | None = None):
        self.snapshots = [frozenset(tuple(sorted(e)) for e in s) for s in snapshots]
        self.cycle = cycle
        if declared is not None:
            self.declared = declared

    def snapshot(self, round, f, view, oracle):
        if not self.snapshots:
            return Snapshot(round, f.edge_set)
        i = round - 1
        if i >= len(self.snapshots):
            if not self.cycle:
                return Snapshot(round, f.edge_set)
            i %= len(self.snapshots)
        return Snapshot(round, self.snapshots[i])

    def describe(self):
        return {"name": self.name, "snapshots": [sorted(map(list, s)) for s in self.snapshots], "cycle": self.cycle}


class StaticSchedule(ScheduleSource):
    name = "static"
    declared = ConnectivityClass("always_full")

    def snapshot(self, round, f, view, oracle):
        return Snapshot(round, f.edge_set)


@dataclass
class SystemView:
    """What an adversary may read at the beginning of a round."""

    round: int
    footprint: Footprint
    configuration: Configuration
    k: int
    n: int
    model: ModelSpec
    _engine: "Engine" = field(repr=False)

    def state(self, agent: AgentId) -> Any:
        return self._engine.current_state(agent)

    @property
    def states(self) -> dict[AgentId, Any]:
        return {a: self._engine.current_state(a) for a in self.configuration.agents}

    @property
    def terminated(self) -> frozenset[AgentId]:
        return frozenset(self._engine.terminated)


class Oracle:
    """Forward simulation of the current round against a hypothetical snapshot.

    Shares the engine's own computation, so the answer equals what the engine
    would commit for that snapshot. Nothing is committed.
    """

    def __init__(self, engine: "Engine", budget: int | None):
        self._engine = engine
        self.budget = budget
        self.calls = 0

    def __call__(self, present: Snapshot | Iterable[Edge]) -> Outcome:
        self.calls += 1
        if self.budget is not None and self.calls > self.budget:
            raise OracleBudgetExceeded(f"more than {self.budget} oracle calls in one round")
        p = present.present if isinstance(present, Snapshot) else frozenset(present)
        return self._engine.outcome_for(p)


# ---------------------------------------------------------------- trace


@dataclass(slots=True)
class RoundRecord:
    round: int
    present: frozenset[Edge]
    before: Configuration
    intents: tuple[tuple[AgentId, Intent], ...]
    failed: tuple[AgentId, ...]
    after: Configuration
    memory: tuple[tuple[AgentId, int], ...]  # agents evaluated this round
    terminated: frozenset[AgentId]
    moves: tuple[tuple[AgentId, int, int], ...] = ()
    note: str | None = None

    @property
    def success(self) -> dict[AgentId, bool]:
        out = {a: True for a in self.before.position}
        for a in self.failed:
            out[a] = False
        return out


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def _ints(xs: Iterable[Any]) -> str:
    return "[" + ",".join(map(str, xs)) + "]"


def _pairs(xs: Iterable[Sequence[int]]) -> str:
    return "[" + ",".join("[" + ",".join(map(str, x)) + "]" for x in xs) + "]"


def record_line(f: Footprint, rec: RoundRecord, prev_terminated: frozenset[AgentId]) -> str:
    """Canonical compact form of a round, as hashed into the trace digest.

    Same text as ``json.dumps`` with sorted keys and compact separators,
    written out by hand because it runs once per round.
    """
    missing = [f.edge_index[e] for e in f.edges if e not in rec.present] if len(rec.present) != f.m else ()
    term = sorted(rec.terminated - prev_terminated) if rec.terminated is not prev_terminated else ()
    return (
        '{"failed":' + _ints(rec.failed)
        + ',"intents":' + _pairs((a, p) for a, p in rec.intents if p is not None)
        + ',"mem":' + _pairs(rec.memory)
        + ',"missing":' + _ints(missing)
        + ',"moves":' + _pairs(rec.moves)
        + ',"note":' + json.dumps(rec.note)
        + ',"r":' + str(rec.round)
        + ',"term":' + _ints(term)
        + "}"
    )


@dataclass
class Trace:
    footprint: Footprint
    model: ModelSpec
    algorithm: str
    initial: Configuration
    header: dict
    records: list[RoundRecord] = field(default_factory=list)
    final: Configuration | None = None
    final_states: dict[AgentId, Any] = field(default_factory=dict)
    terminated: frozenset[AgentId] = frozenset()
    rounds: int = 0
    status: str = "running"  # all_terminated | stopped | timeout | adversary_class_violation
    violation: str | None = None
    digest: str = ""
    max_memory_bits: int = 0
    kept_records: bool = True

    @property
    def configuration(self) -> Configuration:
        return self.final if self.final is not None else self.initial


def trace_hash(trace: Trace) -> str:
    """sha256 over the canonical header and per-round lines.

    When records were kept this recomputes the digest from them; otherwise it
    returns the digest accumulated while the run streamed.
    """
    if not trace.kept_records:
        return trace.digest
    h = hashlib.sha256(_dumps(trace.header).encode())
    prev: frozenset[AgentId] = frozenset()
    for rec in trace.records:
        h.update(b"\n")
        h.update(record_line(trace.footprint, rec, prev).encode())
        prev = rec.terminated
    tail = {"status": trace.status, "violation": trace.violation, "rounds": trace.rounds}
    h.update(b"\n")
    h.update(_dumps(tail).encode())
    return h.hexdigest()


# ---------------------------------------------------------------- engine


class Engine:
    """Owns all run state. ``step`` performs one CCM round."""

    def __init__(
        self,
        footprint: Footprint,
        model: ModelSpec,
        algorithm: Algorithm,
        source: ScheduleSource,
        initial: Configuration,
        *,
        oracle_budget: int | None = 2,
        keep_records: bool = True,
        header: dict | None = None,
        use_dormancy: bool = True,
        check_class: bool = True,
    ):
        if initial.n != footprint.n:
            raise ValueError("configuration and footprint disagree on n")
        self.f = footprint
        self.model = model
        self.algo = algorithm
        self.source = source
        self.config = initial
        self.k = initial.k
        self.round = 0
        self.oracle_budget = oracle_budget
        self.check_class = check_class
        self.keep_records = keep_records
        self.states: dict[AgentId, Any] = {a: algorithm.initial_state(a) for a in initial.agents}
        self.as_of: dict[AgentId, int] = {a: 0 for a in initial.agents}
        self.last_success: dict[AgentId, bool] = {a: True for a in initial.agents}
        self.arrival: dict[AgentId, int | None] = {a: None for a in initial.agents}
        self.terminated: set[AgentId] = set()
        self.dormancy = (
            use_dormancy
            and algorithm.supports_dormancy
            and model.visibility == "zero_hop"
            and model.communication == "f2f"
        )
        self.awake: set[AgentId] = set(initial.agents)
        self._sleepers: list[tuple[int, AgentId]] = []
        self._snapshot_free = model.visibility == "zero_hop" and model.comm_range in (0, float("inf"))
        self._memo: dict[Any, tuple[dict, Outcome]] = {}
        self.max_memory_bits = max((memory_bits(s) for s in self.states.values()), default=0)
        self.header = dict(header or {})
        self.header.setdefault("footprint", footprint.to_dict())
        self.header.setdefault("model", model.to_dict())
        self.header.setdefault("algorithm", algorithm.name)
        self.header["initial"] = [list(r) for r in initial.placement]
        self._hash = hashlib.sha256(_dumps(self.header).encode())
        self._prev_term: frozenset[AgentId] = frozenset()
        self.trace = Trace(footprint, model, algorithm.name, initial, self.header, kept_records=keep_records)
        for a in initial.agents:
            self._maybe_sleep(a, 0)

    # ------------------------------------------------------------ lazy state

    def current_state(self, a: AgentId) -> Any:
        """State of ``a`` as of the end of the last completed round."""
        self._materialize(a, self.round)
        return self.states[a]

    def _materialize(self, a: AgentId, upto: int) -> None:
        if a in self.terminated:
            return
        gap = upto - self.as_of[a]
        if gap > 0:
            self.states[a] = self.algo.advance(self.states[a], gap)
            self.as_of[a] = upto
            bits = memory_bits(self.states[a])
            if bits > self.max_memory_bits:
                self.max_memory_bits = bits

    def _maybe_sleep(self, a: AgentId, t: int) -> None:
        if not self.dormancy or a in self.terminated:
            return
        w = self.algo.dormant_until(self.states[a])
        if w is not None and w > t + 1:
            self.awake.discard(a)
            heapq.heappush(self._sleepers, (w, a))
        else:
            self.awake.add(a)

    def _wake_due(self, t: int) -> None:
        while self._sleepers and self._sleepers[0][0] <= t:
            _, a = heapq.heappop(self._sleepers)
            if a not in self.terminated:
                self.awake.add(a)

    # ------------------------------------------------------------ round computation

    def _eval_nodes(self) -> list[int] | None:
        if not self.dormancy:
            return None
        pos = self.config.position
        return sorted({pos[a] for a in self.awake})

    def _decide(self, present: frozenset[Edge]) -> dict[AgentId, tuple[Any, Intent, bool]]:
        nodes = self._eval_nodes()
        t = self.round + 1
        if nodes is not None:
            for v in nodes:
                for a in self.config.placement[v]:
                    self._materialize(a, t - 1)
        obs = build_observations(
            self.config,
            self.f,
            present,
            self.model,
            self.last_success,
            self.states,
            algo=self.algo,
            arrival=self.arrival,
            terminated=self.terminated,
            nodes=nodes,
        )
        transition = self.algo.transition
        states = self.states
        return {a: transition(a, states[a], o) for a, o in obs.items()}

    def outcome_for(self, present: frozenset[Edge]) -> Outcome:
        return self._compute(present)[1]

    def _compute(self, present: frozenset[Edge]) -> tuple[dict, Outcome]:
        key = None if self._snapshot_free else present
        hit = self._memo.get(key)
        if hit is not None:
            decisions = hit[0]
        else:
            decisions = self._decide(present)
        intents = {a: d[1] for a, d in decisions.items()}
        out = _resolve(self.config, self.f, present, intents)
        self._memo[key] = (decisions, out)
        return decisions, out

    def view(self) -> SystemView:
        return SystemView(self.round + 1, self.f, self.config, self.k, self.f.n, self.model, self)

    def step(self) -> RoundRecord:
        t = self.round + 1
        self._memo = {}
        self._wake_due(t)
        oracle = Oracle(self, self.oracle_budget)
        self.source.reason = None
        snap = self.source.snapshot(t, self.f, self.view(), oracle)
        present = snap.present if isinstance(snap, Snapshot) else frozenset(snap)
        note = self.source.reason
        if not present <= self.f.edge_set:
            raise AdversaryClassViolation(t, "snapshot contains non-footprint edges")
        if self.check_class:
            why = self.source.declared.check(self.f, present)
            if why is not None:
                raise AdversaryClassViolation(t, why)
        decisions, out = self._compute(present)
        before = self.config
        failed = set(out.failed)
        memory = []
        for a, (st, intent, term) in decisions.items():
            self.states[a] = st
            self.as_of[a] = t
            self.last_success[a] = a not in failed
            self.arrival[a] = out.arrivals.get(a)
            bits = memory_bits(st)
            memory.append((a, bits))
            if bits > self.max_memory_bits:
                self.max_memory_bits = bits
            if term:
                self.terminated.add(a)
                self.awake.discard(a)
        self.config = out.after
        self.round = t
        for a in decisions:
            if a not in self.terminated:
                self._maybe_sleep(a, t)
        term_now = self._prev_term if len(self.terminated) == len(self._prev_term) else frozenset(self.terminated)
        rec = RoundRecord(
            round=t,
            present=present,
            before=before,
            intents=out.intents,
            failed=out.failed,
            after=out.after,
            memory=tuple(sorted(memory)),
            terminated=term_now,
            moves=out.moves,
            note=note,
        )
        self._hash.update(b"\n")
        self._hash.update(record_line(self.f, rec, self._prev_term).encode())
        self._prev_term = term_now
        if self.keep_records:
            self.trace.records.append(rec)
        return rec

    @property
    def all_terminated(self) -> bool:
        return len(self.terminated) == self.k

    def finish(self, status: str, violation: str | None = None) -> Trace:
        for a in self.config.agents:
            self._materialize(a, self.round)
        tr = self.trace
        tr.final = self.config
        tr.final_states = dict(self.states)
        tr.terminated = frozenset(self.terminated)
        tr.rounds = self.round
        tr.status = status
        tr.violation = violation
        tr.max_memory_bits = self.max_memory_bits
        tail = {"status": status, "violation": violation, "rounds": self.round}
        h = self._hash.copy()
        h.update(b"\n")
        h.update(_dumps(tail).encode())
        tr.digest = h.hexdigest()
        return tr

    def run(
        self,
        max_rounds: int,
        stop: Callable[[RoundRecord], bool] | None = None,
        on_round: Callable[[RoundRecord], None] | None = None,
    ) -> Trace:
        """Step until every agent terminated, ``stop`` fires, or ``max_rounds`` pass."""
        if self.all_terminated:
            return self.finish("all_terminated")
        while self.round < max_rounds:
            try:
                rec = self.step()
            except AdversaryClassViolation as exc:
                return self.finish("adversary_class_violation", str(exc))
            if on_round is not None:
                on_round(rec)
            if self.all_terminated:
                return self.finish("all_terminated")
            if stop is not None and stop(rec):
                return self.finish("stopped")
        return self.finish("timeout")


def step(
    cfg: Configuration,
    f: Footprint,
    source: ScheduleSource,
    algo: Algorithm,
    m: ModelSpec,
    round: int,
    states: Mapping[AgentId, Any],
    last_success: Mapping[AgentId, bool],
    arrival: Mapping[AgentId, int | None] | None = None,
    terminated: Iterable[AgentId] = (),
) -> tuple[RoundRecord, dict[AgentId, Any]]:
    """Functional single round: returns the record and the new states."""
    eng = Engine(f, m, algo, source, cfg, use_dormancy=False, oracle_budget=None)
    eng.round = round - 1
    eng.states = dict(states)
    eng.as_of = {a: round - 1 for a in states}
    eng.last_success = {a: last_success.get(a, True) for a in cfg.agents}
    if arrival is not None:
        eng.arrival = {a: arrival.get(a) for a in cfg.agents}
    eng.terminated = set(terminated)
    rec = eng.step()
    return rec, dict(eng.states)
