from __future__ import annotations

import random

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from tvg_dispersion.adversaries import BlockLargestGroup, RandomSchedule
from tvg_dispersion.algorithms import get_algorithm
from tvg_dispersion.algorithms.rooted import RootedState, Site, g1_odd, g2_odd, in_g1
from tvg_dispersion.engine import (
    Configuration,
    Engine,
    FixedSequence,
    ModelSpec,
    ScheduleSource,
    build_observations,
    is_balanced,
)
from tvg_dispersion.graph_core import (
    Snapshot,
    _connected,
    check_ell_bounded,
    check_temporal_connectivity,
    find_journey,
    is_valid_journey,
    make_footprint,
    neighbor_via_port,
    permute_ports,
)

from conftest import ZERO_F2F, rooted

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

footprints = st.builds(
    lambda kind, n, seed, ps: permute_ports(make_footprint(kind, n, seed=seed), ps),
    st.sampled_from(["clique", "ring", "path", "star", "random"]),
    st.integers(3, 8),
    st.integers(0, 10_000),
    st.integers(0, 10_000),
)


def random_prefix(f, rounds, seed, keep=0.6):
    rng = random.Random(seed)
    return [Snapshot(r, frozenset(e for e in f.edges if rng.random() < keep)) for r in range(1, rounds + 1)]


def connected_prefix(f, rounds, seed):
    """Random spanning subgraph each round: a random spanning tree plus a few extra edges."""
    rng = random.Random(seed)
    out = []
    for r in range(1, rounds + 1):
        order = list(f.edges)
        rng.shuffle(order)
        parent = list(range(f.n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        keep = set()
        for u, v in order:
            a, b = find(u), find(v)
            if a != b:
                parent[a] = b
                keep.add((u, v))
            elif rng.random() < 0.2:
                keep.add((u, v))
        out.append(Snapshot(r, frozenset(keep)))
    return out


def reachable_brute(f, sched, u, v, start, horizon=None):
    """Earliest-arrival oracle over the time-expanded graph."""
    by_round = {s.round: s.present for s in sched}
    last = max(by_round) if horizon is None else min(max(by_round), start + horizon - 1)
    reached = {u}
    for r in range(start, last + 1):
        if v in reached:
            return True
        present = by_round.get(r, frozenset())
        reached = reached | {b for a, b in present if a in reached} | {a for a, b in present if b in reached}
    return v in reached


# ---------------------------------------------------------------- graph_core


@given(footprints)
@settings(max_examples=80, deadline=None)
def test_port_bijectivity(f):
    for v in range(f.n):
        nbrs = [neighbor_via_port(f, v, p) for p in range(f.degree(v))]
        assert len(set(nbrs)) == f.degree(v)
        for p, u in enumerate(nbrs):
            assert neighbor_via_port(f, u, f.port_of[u][v]) == v


@given(footprints, st.integers(0, 10_000), st.integers(1, 4))
@FAST
def test_find_journey_valid_and_complete(f, seed, start):
    sched = random_prefix(f, 12, seed, keep=0.3)
    for u in range(f.n):
        for v in range(f.n):
            j = find_journey(f, sched, u, v, start)
            assert (j is not None) == reachable_brute(f, sched, u, v, start)
            if j is not None:
                assert is_valid_journey(f, sched, j, u, v)
                rounds = [r for _, r in j.steps]
                assert rounds == sorted(set(rounds)) and all(r >= start for r in rounds)


@given(footprints, st.integers(0, 10_000), st.integers(0, 6))
@FAST
def test_ell_bounded_monotone(f, seed, ell):
    sched = random_prefix(f, 8, seed, keep=0.85)
    if check_ell_bounded(f, sched, ell):
        for extra in range(1, 4):
            assert check_ell_bounded(f, sched, ell + extra)


@given(footprints, st.integers(0, 10_000))
@FAST
def test_interval_connected_prefix_is_temporally_connected_within_n(f, seed):
    sched = connected_prefix(f, 3 * f.n, seed)
    assert check_temporal_connectivity(f, sched, range(1, 2 * f.n + 1), f.n)


# ---------------------------------------------------------------- engine


algorithms_any = st.sampled_from(["random_walker", "greedy", "balanced_global", "weak_disp"])


@st.composite
def runs(draw):
    f = draw(footprints)
    k = draw(st.integers(1, 2 * f.n))
    seed = draw(st.integers(0, 10_000))
    rng = random.Random(seed)
    rows = [[] for _ in range(f.n)]
    for a in range(k):
        rows[rng.randrange(f.n)].append(a)
    name = draw(algorithms_any)
    return f, Configuration.from_lists(rows), name, seed


def _engine(f, cfg, name, seed, model=None):
    algo = get_algorithm(name, f.n, cfg.k, {"seed": seed})
    model = model or algo.requires
    return Engine(f, model, algo, RandomSchedule("ell_bounded", seed, ell=2), cfg, check_class=False)


@given(runs())
@FAST
def test_agent_conservation_and_move_legality(run):
    f, cfg, name, seed = run
    eng = _engine(f, cfg, name, seed)
    for _ in range(15):
        rec = eng.step()
        assert sorted(rec.after.agents) == sorted(rec.before.agents) == list(range(cfg.k))
        moved = {a for a, _, _ in rec.moves}
        for a, src, dst in rec.moves:
            assert rec.before.position[a] == src and rec.after.position[a] == dst
            assert (min(src, dst), max(src, dst)) in rec.present
        for a in rec.after.agents:
            if a not in moved:
                assert rec.after.position[a] == rec.before.position[a]
        if eng.all_terminated:
            break


@given(runs())
@FAST
def test_success_feedback_arrives_exactly_one_round_later(run):
    f, cfg, name, seed = run
    eng = _engine(f, cfg, name, seed)
    seen = {}

    orig = eng.algo.transition

    def spy(agent_id, state, obs):
        seen.setdefault(eng.round, {})[agent_id] = obs.last_move_success
        return orig(agent_id, state, obs)

    eng.algo.transition = spy
    prev = None
    for _ in range(10):
        rec = eng.step()
        if prev is not None:
            for a, ok in seen.get(rec.round, {}).items():
                assert ok == (a not in prev.failed)
        prev = rec
        if eng.all_terminated:
            break


@given(runs(), st.integers(0, 10_000))
@FAST
def test_zero_hop_observations_ignore_the_snapshot(run, seed):
    f, cfg, _, _ = run
    states = {a: ("s", a) for a in cfg.agents}
    last = {a: bool(a % 2) for a in cfg.agents}
    a_snap = random_prefix(f, 1, seed)[0].present
    b_snap = random_prefix(f, 1, seed + 1)[0].present
    for model in (ZERO_F2F, ModelSpec("zero_hop", "global")):
        oa = build_observations(cfg, f, a_snap, model, last, states)
        ob = build_observations(cfg, f, b_snap, model, last, states)
        assert oa == ob


@given(runs())
@FAST
def test_balanced_global_terminates_only_when_balanced(run):
    f, cfg, _, seed = run
    eng = _engine(f, cfg, "balanced_global", seed)
    for _ in range(4 * (f.n + cfg.k)):
        rec = eng.step()
        if rec.terminated and rec.terminated == frozenset(rec.after.agents):
            assert is_balanced(rec.after)
            break


@given(runs())
@FAST
def test_weak_disp_hole_monotonicity(run):
    f, cfg, _, seed = run
    eng = _engine(f, cfg, "weak_disp", seed)
    for _ in range(3 * f.n):
        before = eng.config
        rec = eng.step()
        if before.holes and before.multinodes and _connected(f.n, rec.present):
            assert rec.after.occupied > before.occupied
        if eng.all_terminated:
            break


# ---------------------------------------------------------------- rooted algorithm


@st.composite
def rooted_runs(draw):
    n = draw(st.integers(3, 6))
    f = permute_ports(make_footprint(draw(st.sampled_from(["ring", "clique", "random", "path"])), n, seed=draw(st.integers(0, 999))), draw(st.integers(0, 999)))
    adv = draw(st.sampled_from(["random", "block"]))
    seed = draw(st.integers(0, 999))
    return f, adv, seed


@given(rooted_runs())
@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_rooted_invariants(run):
    f, adv, seed = run
    src = RandomSchedule("one_bounded", seed) if adv == "random" else BlockLargestGroup()
    algo = get_algorithm("rooted_n_plus_1", f.n, f.n + 1)
    eng = Engine(f, ZERO_F2F, algo, src, rooted(f.n, f.n + 1), use_dormancy=False)
    settled_at = {}
    for _ in range(300):
        rec = eng.step()
        for a, node in settled_at.items():
            assert rec.after.position[a] == node
        labels = set()
        for a in rec.after.agents:
            s = eng.current_state(a)
            if s.settled and a not in settled_at:
                settled_at[a] = rec.after.position[a]
            if not s.settled:
                labels.add(s.grp_label)
        assert len(labels) <= 2
        for x in labels:
            for y in labels:
                assert x == y or not y.startswith(x)


label_st = st.text(alphabet="01", min_size=0, max_size=4).map(lambda t: "1" + t)
state_st = st.builds(
    RootedState,
    grp_label=label_st,
    state=st.integers(0, 1),
    success=st.just(True),
    prt_in=st.integers(0, 2),
    prt_out=st.integers(0, 2),
    count_1=st.integers(0, 50),
    count_2=st.integers(0, 50),
    count_3=st.integers(0, 50),
    dfs_label=st.integers(1, 5),
    skip=st.integers(-1, 2),
)


@given(state_st, st.integers(0, 2), st.booleans())
@settings(max_examples=200, deadline=None)
def test_counters_reset_after_a_successful_move(s, cap, occupied):
    holder = RootedState(settled=1) if occupied else None
    site = Site(4, 3, holder, ((0, s), (1, s)), cap)
    if in_g1(s.grp_label):
        assert g1_odd(0, s, site)[0].count_1 == 0
    else:
        assert g2_odd(0, s, site)[0].count_2 == 0


@given(state_st, st.integers(1, 4))
@settings(max_examples=200, deadline=None)
def test_co_located_group_moves_together(s, size):
    units = tuple((a, s) for a in range(size))
    site = Site(4, 3, RootedState(settled=1), units, 0)
    fn = g1_odd if in_g1(s.grp_label) else g2_odd
    outs = [fn(a, st_, site) for a, st_ in units]
    if len({ns.grp_label for ns, _, _ in outs}) == 1:
        assert len({port for _, port, _ in outs}) == 1


def test_bfs_oracle_sanity():
    f = make_footprint("path", 3)
    sched = [Snapshot(1, frozenset({(0, 1)})), Snapshot(2, frozenset({(1, 2)}))]
    assert reachable_brute(f, sched, 0, 2, 1)
    assert not reachable_brute(f, sched, 0, 2, 2)


class Probe(ScheduleSource):
    """Asks the oracle about two snapshots and commits the second."""

    def __init__(self, first, second):
        self.first, self.second = first, second
        self.answers = []

    def snapshot(self, round, f, view, oracle):
        self.answers = [oracle(self.first), oracle(self.second)]
        return Snapshot(round, self.second)


@given(runs(), st.integers(0, 10_000), st.integers(0, 6))
@FAST
def test_oracle_fidelity(run, seed, warmup):
    f, cfg, name, _ = run
    a_snap = random_prefix(f, 1, seed)[0].present
    b_snap = random_prefix(f, 1, seed + 7)[0].present

    def fresh(source):
        algo = get_algorithm(name, f.n, cfg.k, {"seed": seed})
        warm = FixedSequence([f.edge_set] * warmup, cycle=False)
        eng = Engine(f, algo.requires, algo, warm, cfg, check_class=False)
        for _ in range(warmup):
            eng.step()
        eng.source = source
        return eng

    probe = Probe(a_snap, b_snap)
    rec_b = fresh(probe).step()
    # the first probe is never committed, so compare it with an engine that really plays it
    rec_a = fresh(Probe(a_snap, a_snap)).step()
    for rec, out in ((rec_a, probe.answers[0]), (rec_b, probe.answers[1])):
        assert out.after == rec.after
        assert out.moves == rec.moves and out.failed == rec.failed and out.intents == rec.intents
