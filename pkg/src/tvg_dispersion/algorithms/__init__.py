"""Agent algorithms and a small registry to build them by name."""

from __future__ import annotations

from typing import Any, Mapping

from ..engine import Algorithm
from .balanced_global import BalancedGlobal
from .baselines import GreedyHoleSeeker, RandomWalker
from .pnq import PnqDispersion
from .rooted import RootedDispersion
from .weak_disp import WeakDispersion

ALGORITHMS = ("weak_disp", "balanced_global", "rooted_n_plus_1", "pnq", "random_walker", "greedy")


def get_algorithm(name: str, n: int, k: int, params: Mapping[str, Any] | None = None) -> Algorithm:
    """Instantiate the algorithm ``name`` for ``n`` nodes and ``k`` agents."""
    params = dict(params or {})
    if name == "weak_disp":
        return WeakDispersion()
    if name == "balanced_global":
        return BalancedGlobal()
    if name == "rooted_n_plus_1":
        return RootedDispersion(n, stop_round=params.get("stop_round"))
    if name == "pnq":
        return PnqDispersion(n, k)
    if name == "random_walker":
        return RandomWalker(seed=int(params.get("seed", 0)))
    if name == "greedy":
        return GreedyHoleSeeker(n, k)
    raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


__all__ = [
    "ALGORITHMS",
    "BalancedGlobal",
    "GreedyHoleSeeker",
    "PnqDispersion",
    "RandomWalker",
    "RootedDispersion",
    "WeakDispersion",
    "get_algorithm",
]
