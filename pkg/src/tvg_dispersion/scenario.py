"""Scenario documents, experiment runs, and their serialized outputs.

A scenario is a JSON object::

    {
      "id": "ring4-rooted",
      "footprint": {"kind": "ring", "n": 4},          # or {"n": 4, "edges": [[0, 1], ...]}
                                                      # or {"ports": [[1, 3], [0, 2], ...]}
      "k": 5,
      "placement": {"kind": "rooted", "node": 0},     # or counts / ids / random
      "algorithm": {"name": "rooted_n_plus_1", "params": {}},
      "model": {"visibility": "zero_hop", "communication": "f2f"},
      "schedule": {"name": "static"},                 # or random / fixed / an adversary
      "max_rounds": 1000,
      "stop": "all_terminated",                       # balanced | all_terminated | rounds
      "seed": 0
    }

Footprints may carry ``"seed"`` (random kind) and ``"port_seed"`` (shuffle
port labels). Agents get IDs ``0..k-1``; ``counts`` and ``random`` placements
hand them out in ascending order over the nodes.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import asdict, dataclass, field
from typing import IO, Any, Iterable, Mapping

from .adversaries import (
    AdversaryPreconditionError,
    BlockLargestGroup,
    PathSort,
    RandomSchedule,
    RingOneEdge,
    TemporalSplitMax,
    TemporalSplitMin,
)
from .algorithms import ALGORITHMS, get_algorithm
from .engine import (
    Configuration,
    ConnectivityClass,
    Engine,
    FixedSequence,
    ModelSpec,
    RoundRecord,
    ScheduleSource,
    StaticSchedule,
    Trace,
    _dumps,
    is_balanced,
    record_line,
)
from .graph_core import (
    Footprint,
    Snapshot,
    first_temporal_violation,
    is_snapshot_connected,
    make_footprint,
    permute_ports,
)

STOP_CONDITIONS = ("balanced", "all_terminated", "rounds")
OUTCOMES = ("balanced", "terminated_balanced", "terminated_unbalanced", "timeout", "adversary_class_violation")
SCHEDULES = (
    "static",
    "fixed",
    "random",
    "temporal_split_max",
    "temporal_split_min",
    "ring_one_edge",
    "path_sort",
    "block_largest_group",
)
CSV_COLUMNS = (
    "scenario_id",
    "n",
    "k",
    "p",
    "q",
    "algorithm",
    "adversary",
    "rounds",
    "outcome",
    "max_memory_bits",
    "trace_digest",
)


class ScenarioError(ValueError):
    """Malformed scenario or a violated precondition."""


@dataclass
class Scenario:
    footprint: dict
    k: int
    placement: dict
    algorithm: dict
    model: dict
    schedule: dict = field(default_factory=lambda: {"name": "static"})
    max_rounds: int = 10_000
    stop: str = "all_terminated"
    seed: int = 0
    id: str = "scenario"

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # derived objects -------------------------------------------------

    def build_footprint(self) -> Footprint:
        spec = self.footprint
        if "ports" in spec:
            f = Footprint.from_ports(spec["ports"])
        elif "edges" in spec:
            f = Footprint.from_edges(int(spec["n"]), spec["edges"])
        else:
            f = make_footprint(spec["kind"], int(spec["n"]), seed=spec.get("seed"), extra_edges=spec.get("extra_edges"))
        if spec.get("port_seed") is not None:
            f = permute_ports(f, int(spec["port_seed"]))
        return f

    def build_model(self) -> ModelSpec:
        m = self.model
        return ModelSpec(m.get("visibility", "zero_hop"), m.get("communication", "f2f"), int(m.get("hops", 0)))

    def build_configuration(self, n: int) -> Configuration:
        pl = self.placement
        kind = pl.get("kind")
        if kind == "rooted":
            rows: list[list[int]] = [[] for _ in range(n)]
            rows[int(pl.get("node", 0))] = list(range(self.k))
            return Configuration.from_lists(rows)
        if kind == "counts":
            counts = [int(c) for c in pl["counts"]]
            if len(counts) != n:
                raise ScenarioError(f"placement lists {len(counts)} nodes, footprint has {n}")
            return _from_counts(counts)
        if kind == "ids":
            return Configuration.from_lists(pl["nodes"])
        if kind == "random":
            rng = random.Random(pl.get("seed", self.seed))
            counts = [0] * n
            for _ in range(self.k):
                counts[rng.randrange(n)] += 1
            return _from_counts(counts)
        raise ScenarioError(f"unknown placement kind {kind!r}")

    def build_source(self) -> ScheduleSource:
        sch = self.schedule
        name = sch.get("name", "static")
        if name == "static":
            return StaticSchedule()
        if name == "fixed":
            declared = sch.get("declared")
            cls = ConnectivityClass(declared["kind"], int(declared.get("ell", 0))) if declared else None
            return FixedSequence(sch.get("snapshots", []), cycle=sch.get("cycle", True), declared=cls)
        if name == "random":
            return RandomSchedule(sch.get("class", "one_bounded"), int(sch.get("seed", self.seed)), int(sch.get("ell", 1)))
        if name == "temporal_split_max":
            return TemporalSplitMax()
        if name == "temporal_split_min":
            return TemporalSplitMin()
        if name == "ring_one_edge":
            return RingOneEdge(sch.get("variant", "one_hop_f2f"))
        if name == "path_sort":
            return PathSort(sch.get("variant", "one_hop_f2f"), int(sch.get("ell", 36)))
        if name == "block_largest_group":
            return BlockLargestGroup()
        raise ScenarioError(f"unknown schedule {name!r}")


def _from_counts(counts: list[int]) -> Configuration:
    rows = []
    nxt = 0
    for c in counts:
        rows.append(list(range(nxt, nxt + c)))
        nxt += c
    return Configuration.from_lists(rows)


_REQUIRED = ("footprint", "k", "placement", "algorithm", "model")


def parse_scenario(document: str | Mapping[str, Any]) -> Scenario:
    """Parse and validate a scenario from JSON text or an already decoded mapping."""
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    else:
        data = dict(document)
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    missing = [key for key in _REQUIRED if key not in data]
    if missing:
        raise ScenarioError(f"scenario lacks {', '.join(missing)}")
    known = set(Scenario.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ScenarioError(f"unknown scenario fields: {', '.join(sorted(extra))}")
    try:
        sc = Scenario(**data)
        sc.k = int(sc.k)
        sc.max_rounds = int(sc.max_rounds)
        sc.seed = int(sc.seed)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    """Cross-field checks; raises ScenarioError."""
    if sc.stop not in STOP_CONDITIONS:
        raise ScenarioError(f"stop must be one of {STOP_CONDITIONS}")
    if sc.max_rounds < 0:
        raise ScenarioError("max_rounds must be non-negative")
    if sc.k < 1:
        raise ScenarioError("k must be at least 1")
    try:
        f = sc.build_footprint()
        model = sc.build_model()
        cfg = sc.build_configuration(f.n)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if cfg.n != f.n:
        raise ScenarioError(f"placement covers {cfg.n} nodes, footprint has {f.n}")
    if cfg.k != sc.k:
        raise ScenarioError(f"placement holds {cfg.k} agents, scenario says k={sc.k}")
    if sorted(cfg.agents) != list(range(sc.k)):
        raise ScenarioError("agent IDs must be 0..k-1")
    name = sc.algorithm.get("name")
    if name not in ALGORITHMS:
        raise ScenarioError(f"unknown algorithm {name!r}")
    algo = get_algorithm(name, f.n, sc.k, sc.algorithm.get("params"))
    if not model.covers(algo.requires):
        if name in ("balanced_global", "weak_disp") and model.visibility == "zero_hop":
            raise ScenarioError(
                f"{name} needs one-hop visibility: with 0-hop visibility and global communication "
                "k-balanced dispersion is impossible even on 1-bounded 1-interval connected graphs"
            )
        raise ScenarioError(f"{name} requires model {algo.requires.label()}, scenario offers {model.label()}")
    rooted = cfg.occupied == 1
    if name == "rooted_n_plus_1":
        if sc.k != f.n + 1 or not rooted:
            raise ScenarioError("rooted_n_plus_1 needs k = n+1 agents on a single node")
    if name == "pnq":
        p, q = divmod(sc.k, f.n)
        if not rooted:
            raise ScenarioError("pnq needs a rooted start (all agents on one node)")
        if q == 0:
            raise ScenarioError(
                f"pnq handles k = pn+q with q in {{1, 2}}; got q=0. k = pn agents cannot reach "
                "balanced dispersion on 1-bounded 1-interval connected graphs with 0-hop visibility"
            )
        if q not in (1, 2):
            raise ScenarioError(
                f"pnq handles k = pn+q with q in {{1, 2}}; got p={p}, q={q}. "
                "Rooted balanced dispersion for q >= 3 is an open problem"
            )
    sched = sc.schedule.get("name", "static")
    if sched not in SCHEDULES:
        raise ScenarioError(f"unknown schedule {sched!r}")
    if sched == "fixed":
        for i, snap in enumerate(sc.schedule.get("snapshots", [])):
            for e in snap:
                if tuple(sorted(e)) not in f.edge_set:
                    raise ScenarioError(f"fixed snapshot {i} contains non-footprint edge {list(e)}")


# ---------------------------------------------------------------- runs


@dataclass
class RunSummary:
    scenario_id: str
    n: int
    k: int
    p: int
    q: int
    algorithm: str
    adversary: str
    rounds: int  # engine rounds, one CCM cycle each
    outcome: str
    max_memory_bits: int
    trace_digest: str
    first_balanced_round: int | None = None
    # change points [round, holes, multinodes]; round 0 is the start
    occupancy: list = field(default_factory=list)
    violation: str | None = None

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


class _Sweep:
    """Per-round verification done while the run streams."""

    def __init__(self, cfg: Configuration, k: int, n: int):
        self.k, self.n = k, n
        self.last = (cfg.holes, cfg.multinodes)
        self.occupancy = [[0, *self.last]]
        self.first_balanced = 0 if is_balanced(cfg, k, n) else None

    def __call__(self, rec: RoundRecord) -> None:
        after = rec.after
        cur = (after.holes, after.multinodes)
        if cur != self.last:
            self.occupancy.append([rec.round, *cur])
            self.last = cur
        if self.first_balanced is None and is_balanced(after, self.k, self.n):
            self.first_balanced = rec.round


def build_engine(sc: Scenario, keep_records: bool = True) -> Engine:
    f = sc.build_footprint()
    cfg = sc.build_configuration(f.n)
    algo = get_algorithm(sc.algorithm["name"], f.n, sc.k, sc.algorithm.get("params"))
    header = {"scenario": sc.to_dict()}
    return Engine(f, sc.build_model(), algo, sc.build_source(), cfg, keep_records=keep_records, header=header)


def outcome_of(trace: Trace, stop: str, k: int, n: int) -> str:
    balanced = is_balanced(trace.configuration, k, n)
    if trace.status == "adversary_class_violation":
        return "adversary_class_violation"
    if trace.status == "all_terminated":
        return "terminated_balanced" if balanced else "terminated_unbalanced"
    if trace.status == "stopped":
        return "balanced"
    if stop == "rounds" and balanced:
        return "balanced"
    return "timeout"


def run_experiment(
    sc: Scenario,
    *,
    keep_records: bool = True,
    trace_sink: IO[str] | None = None,
    max_rounds: int | None = None,
) -> tuple[Trace, RunSummary]:
    """Run a scenario to its stop condition and summarize it.

    With ``trace_sink`` set, trace lines are written while the run streams,
    so long runs need not keep their records.
    """
    eng = build_engine(sc, keep_records=keep_records)
    f = eng.f
    sweep = _Sweep(eng.config, sc.k, f.n)
    prev = [frozenset()]
    if trace_sink is not None:
        trace_sink.write(_dumps(eng.header) + "\n")

    def on_round(rec: RoundRecord) -> None:
        sweep(rec)
        if trace_sink is not None:
            trace_sink.write(record_line(f, rec, prev[0]) + "\n")
            prev[0] = rec.terminated

    stop = None
    if sc.stop == "balanced":
        stop = lambda rec: is_balanced(rec.after, sc.k, f.n)  # noqa: E731
    limit = sc.max_rounds if max_rounds is None else max_rounds
    try:
        trace = eng.run(limit, stop=stop, on_round=on_round)
    except AdversaryPreconditionError as exc:
        raise ScenarioError(str(exc)) from exc
    if trace_sink is not None:
        trace_sink.write(_tail(trace) + "\n")
    p, q = divmod(sc.k, f.n)
    summary = RunSummary(
        scenario_id=sc.id,
        n=f.n,
        k=sc.k,
        p=p,
        q=q,
        algorithm=sc.algorithm["name"],
        adversary=sc.schedule.get("name", "static"),
        rounds=trace.rounds,
        outcome=outcome_of(trace, sc.stop, sc.k, f.n),
        max_memory_bits=trace.max_memory_bits,
        trace_digest=trace.digest,
        first_balanced_round=sweep.first_balanced,
        occupancy=sweep.occupancy,
        violation=trace.violation,
    )
    return trace, summary


def _tail(trace: Trace) -> str:
    return _dumps({"status": trace.status, "violation": trace.violation, "rounds": trace.rounds})


def trace_lines(trace: Trace) -> Iterable[str]:
    """The lines whose newline-joined bytes hash to the trace digest."""
    if not trace.kept_records:
        raise ValueError("trace was run without keeping records")
    yield _dumps(trace.header)
    prev: frozenset = frozenset()
    for rec in trace.records:
        yield record_line(trace.footprint, rec, prev)
        prev = rec.terminated
    yield _tail(trace)


def emit_trace(trace: Trace, sink: IO[str]) -> None:
    """Write the trace as JSON lines: header, one line per round, then a status line."""
    for line in trace_lines(trace):
        sink.write(line + "\n")


def emit_summary_csv(summaries: Iterable[RunSummary], sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in summaries:
        w.writerow(s.csv_row())


def summary_json(s: RunSummary) -> str:
    return json.dumps(asdict(s), sort_keys=True)


# ---------------------------------------------------------------- schedule verification


@dataclass
class ScheduleReport:
    declared: str
    rounds: int
    failures: list  # [round, reason]
    snapshots_connected: int

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "declared": self.declared,
            "rounds": self.rounds,
            "ok": self.ok,
            "failures": self.failures,
            "snapshots_connected": self.snapshots_connected,
        }


def realized_schedule(sc: Scenario, prefix_rounds: int) -> tuple[Footprint, ConnectivityClass, list[Snapshot]]:
    """Run the scenario for a prefix without class enforcement and return its snapshots."""
    eng = build_engine(sc, keep_records=True)
    eng.check_class = False
    snaps = []
    for _ in range(prefix_rounds):
        rec = eng.step()
        snaps.append(Snapshot(rec.round, rec.present))
    return eng.f, eng.source.declared, snaps


def verify_schedule(sc: Scenario, prefix_rounds: int, horizon: int = 3) -> ScheduleReport:
    """Check the declared connectivity class over a realized schedule prefix, round by round.

    Per-round classes (one_bounded, ell_bounded, always_full) are checked on
    every snapshot. The temporal class is checked for journeys started at
    each round whose ``horizon`` window fits inside the prefix.
    """
    f, declared, snaps = realized_schedule(sc, prefix_rounds)
    failures = []
    if declared.kind == "temporal":
        for s in snaps:
            if s.round + horizon > prefix_rounds:
                break
            bad = first_temporal_violation(f, snaps, [s.round], horizon)
            if bad is not None:
                failures.append([s.round, f"node {bad[1]} cannot reach every node within {horizon} rounds"])
    else:
        for s in snaps:
            why = declared.check(f, s.present)
            if why is not None:
                failures.append([s.round, why])
    connected = sum(1 for s in snaps if is_snapshot_connected(f, s.present))
    return ScheduleReport(declared.label(), len(snaps), failures, connected)
