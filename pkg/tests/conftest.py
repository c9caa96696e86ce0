from __future__ import annotations

import itertools

import pytest

from tvg_dispersion.algorithms import get_algorithm
from tvg_dispersion.engine import Configuration, Engine, ModelSpec, StaticSchedule, is_balanced
from tvg_dispersion.graph_core import make_footprint

ZERO_F2F = ModelSpec("zero_hop", "f2f")
ONE_GLOBAL = ModelSpec("one_hop", "global")
FULL_GLOBAL = ModelSpec("full", "global")


def compositions(k: int, n: int):
    """All count vectors of length n summing to k (brute force)."""
    for cuts in itertools.combinations(range(k + n - 1), n - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(k + n - 1 - prev - 1)
        yield tuple(out)


def balanced_by_bounds(counts) -> bool:
    k, n = sum(counts), len(counts)
    lo = k // n
    hi = lo if k % n == 0 else lo + 1
    return all(lo <= c <= hi for c in counts)


def rooted(n: int, k: int, node: int = 0) -> Configuration:
    rows = [[] for _ in range(n)]
    rows[node] = list(range(k))
    return Configuration.from_lists(rows)


def from_counts(counts) -> Configuration:
    rows, nxt = [], 0
    for c in counts:
        rows.append(list(range(nxt, nxt + c)))
        nxt += c
    return Configuration.from_lists(rows)


def make_engine(f, name, cfg, source=None, model=None, params=None, **kw) -> Engine:
    algo = get_algorithm(name, f.n, cfg.k, params)
    return Engine(f, model or algo.requires, algo, source or StaticSchedule(), cfg, **kw)


def scenario_dict(**over) -> dict:
    base = {
        "id": "t",
        "footprint": {"kind": "clique", "n": 4},
        "k": 9,
        "placement": {"kind": "counts", "counts": [3, 3, 3, 0]},
        "algorithm": {"name": "balanced_global"},
        "model": {"visibility": "one_hop", "communication": "global"},
        "schedule": {"name": "static"},
        "max_rounds": 200,
        "stop": "all_terminated",
        "seed": 0,
    }
    base.update(over)
    return base


@pytest.fixture
def clique4():
    return make_footprint("clique", 4)


@pytest.fixture
def ring4():
    return make_footprint("ring", 4)


__all__ = [
    "ZERO_F2F",
    "ONE_GLOBAL",
    "FULL_GLOBAL",
    "compositions",
    "balanced_by_bounds",
    "rooted",
    "from_counts",
    "make_engine",
    "scenario_dict",
    "is_balanced",
]
