from __future__ import annotations

import pytest

from tvg_dispersion.adversaries import clique_split
from tvg_dispersion.graph_core import (
    Footprint,
    Journey,
    Snapshot,
    check_ell_bounded,
    check_temporal_connectivity,
    find_journey,
    first_ell_violation,
    first_temporal_violation,
    is_snapshot_connected,
    is_valid_journey,
    make_footprint,
    missing_edge_count,
    neighbor_via_port,
    norm_edge,
    permute_ports,
)
from tvg_dispersion.scenario import parse_scenario, realized_schedule

from conftest import scenario_dict


def static(f, rounds, start=1):
    return [Snapshot(r, f.edge_set) for r in range(start, start + rounds)]


def bfs_connected(n, edges):
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen, todo = {0}, [0]
    while todo:
        x = todo.pop()
        for y in adj[x] - seen:
            seen.add(y)
            todo.append(y)
    return len(seen) == n


# ---------------------------------------------------------------- footprints


@pytest.mark.parametrize(
    "kind,n,m,degrees",
    [
        ("clique", 4, 6, [3, 3, 3, 3]),
        ("ring", 3, 3, [2, 2, 2]),
        ("path", 5, 4, [1, 2, 2, 2, 1]),
    ],
)
def test_make_footprint_shapes(kind, n, m, degrees):
    f = make_footprint(kind, n)
    assert f.m == m
    assert [f.degree(v) for v in range(n)] == degrees


def test_canonical_ports_ascend_by_neighbor():
    f = make_footprint("clique", 5)
    for v in range(5):
        assert list(f.ports[v]) == sorted(u for u in range(5) if u != v)


@pytest.mark.parametrize("kind,n", [("ring", 2), ("clique", 1), ("path", 1), ("torus", 4)])
def test_make_footprint_rejects_bad_input(kind, n):
    with pytest.raises(ValueError):
        make_footprint(kind, n)


def test_footprint_rejects_non_bijective_ports():
    with pytest.raises(ValueError):
        Footprint(3, ((0, 1), (1, 2)), ((1,), (0, 0), (1,)))
    with pytest.raises(ValueError):
        Footprint.from_edges(3, [(0, 0)])


def test_from_ports_roundtrip():
    f = permute_ports(make_footprint("ring", 5), seed=3)
    g = Footprint.from_ports(f.to_dict()["ports"])
    assert g == f


def test_neighbor_via_port_examples():
    assert neighbor_via_port(make_footprint("clique", 4), 0, 0) == 1
    ring3 = make_footprint("ring", 3)
    assert neighbor_via_port(ring3, 2, 1) == max(u for u in range(3) if u != 2)
    assert neighbor_via_port(make_footprint("path", 5), 0, 0) == 1


def test_neighbor_via_port_out_of_range():
    with pytest.raises(ValueError):
        neighbor_via_port(make_footprint("path", 5), 0, 1)


def test_bridges():
    assert make_footprint("path", 4).bridges == {(0, 1), (1, 2), (2, 3)}
    assert make_footprint("ring", 5).bridges == frozenset()
    assert make_footprint("star", 4).bridges == {(0, 1), (0, 2), (0, 3)}


# ---------------------------------------------------------------- snapshots


def test_snapshot_connected_examples(clique4, ring4):
    assert is_snapshot_connected(clique4, clique4.edge_set)
    # node 0 cut off from a triangle, as at round 0 of the max split
    assert not is_snapshot_connected(clique4, clique_split(clique4, [0]))
    for e in ring4.edges:
        present = ring4.edge_set - {e}
        assert is_snapshot_connected(ring4, present) == bfs_connected(4, present) is True


def test_missing_edge_count_examples(clique4):
    assert missing_edge_count(clique4, clique4.edge_set) == 0
    assert missing_edge_count(clique4, clique_split(clique4, [0])) == 3
    with pytest.raises(ValueError):
        missing_edge_count(clique4, {(0, 9)})


@pytest.mark.parametrize("n", [6, 7, 8])
def test_missing_edges_of_a_spanning_path_on_a_clique(n):
    f = make_footprint("clique", n)
    path = {norm_edge(i, i + 1) for i in range(n - 1)}
    missing = missing_edge_count(f, path)
    assert missing == n * (n - 1) // 2 - (n - 1) == (n - 1) * (n - 2) // 2
    # the closed form printed with the construction over-counts but still bounds it
    assert missing <= (n * (n - 2) + 2) // 2 <= n * n


# ---------------------------------------------------------------- journeys


def test_empty_journey_for_same_node(clique4):
    j = find_journey(clique4, static(clique4, 3), 2, 2, 1)
    assert j == Journey((), (2,))
    assert is_valid_journey(clique4, static(clique4, 3), j, 2, 2)


def test_static_clique_journey_is_one_direct_step(clique4):
    j = find_journey(clique4, static(clique4, 5, start=3), 0, 3, 3)
    assert j.steps == (((0, 3), 3),)


def test_journey_waits_for_edges():
    f = make_footprint("path", 3)
    sched = [Snapshot(1, {(0, 1)}), Snapshot(2, set()), Snapshot(3, {(1, 2)})]
    sched = [Snapshot(s.round, frozenset(s.present)) for s in sched]
    j = find_journey(f, sched, 0, 2, 1)
    assert j.steps == (((0, 1), 1), ((1, 2), 3))
    assert j.arrival == 3
    assert find_journey(f, sched, 0, 2, 2) is None
    assert find_journey(f, sched, 0, 2, 1, horizon=1) is None


def test_journey_cannot_use_two_edges_in_one_round():
    f = make_footprint("path", 3)
    sched = [Snapshot(1, f.edge_set)]
    assert find_journey(f, sched, 0, 2, 1) is None


def test_invalid_journeys_rejected():
    f = make_footprint("path", 3)
    sched = static(f, 3)
    assert not is_valid_journey(f, sched, Journey((((0, 1), 2), ((1, 2), 2))), 0, 2)
    assert not is_valid_journey(f, sched, Journey((((1, 2), 1),)), 0, 2)
    assert is_valid_journey(f, sched, Journey((((0, 1), 1), ((1, 2), 3))), 0, 2)


def _split_prefix(rounds):
    sc = parse_scenario(
        scenario_dict(
            k=7,
            placement={"kind": "counts", "counts": [3, 2, 1, 1]},
            model={"visibility": "full", "communication": "global"},
            schedule={"name": "temporal_split_max"},
        )
    )
    return realized_schedule(sc, rounds)


def test_split_schedule_isolated_node_reaches_everyone_within_two_rounds():
    f, declared, snaps = _split_prefix(30)
    assert declared.kind == "temporal"
    for s in snaps[:-2]:
        comps = [c for c in _components(f, s.present) if len(c) == 1]
        if s.round % 2 == 1 and comps:
            (u,) = comps[0]
            for v in range(f.n):
                j = find_journey(f, snaps, u, v, s.round)
                assert j is not None and (j.arrival or s.round) <= s.round + 2


def _components(f, present):
    from tvg_dispersion.graph_core import components

    return components(f.n, present)


def test_temporal_connectivity_examples(clique4):
    assert check_temporal_connectivity(clique4, static(clique4, 25), range(1, 21), 3)
    cut = [Snapshot(r, clique_split(clique4, [0])) for r in range(1, 10)]
    assert not check_temporal_connectivity(clique4, cut, range(1, 5), 3)
    assert first_temporal_violation(clique4, cut, range(1, 5), 3) == (1, 0)


def test_split_schedule_is_temporally_connected_on_prefix():
    f, _, snaps = _split_prefix(24)
    assert check_temporal_connectivity(f, snaps, range(1, 21), 3)


def test_temporal_check_needs_covered_prefix(clique4):
    with pytest.raises(ValueError):
        check_temporal_connectivity(clique4, static(clique4, 3), range(1, 3), 3)


def test_ell_bounded_examples(clique4, ring4):
    assert check_ell_bounded(clique4, static(clique4, 10), 0)
    sched = [Snapshot(r, ring4.edge_set - {ring4.edges[r % 4]}) for r in range(1, 20)]
    assert check_ell_bounded(ring4, sched, 1)
    assert not check_ell_bounded(ring4, sched, 0)
    cut = [Snapshot(1, clique4.edge_set), Snapshot(2, clique_split(clique4, [0]))]
    assert not check_ell_bounded(clique4, cut, 6)
    assert first_ell_violation(clique4, cut, 6) == 2
