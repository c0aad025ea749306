"""Group-selection lift: choices become non-empty subsets of the base hops.

A play activates every hop in the chosen subset and earns the sum of their
rewards, normalized by the base hop count so recorded values stay in [0, 1].
The design/gradient machinery runs unchanged with the subset incidence map;
the subset count grows as 2^m - 1, so the base set is capped.
"""

from __future__ import annotations

from typing import Optional, Sequence

from ..errors import RangeError, UnsupportedSizeError
from .policy import GameConfig, PolicyEngine, candidate_set

MAX_BASE_HOPS = 5


def subset_choices(base_count: int) -> list[tuple[int, ...]]:
    """All non-empty subsets in mask order; index i has mask i+1."""
    if base_count < 1:
        raise RangeError("need at least one base hop")
    if base_count > MAX_BASE_HOPS:
        raise UnsupportedSizeError(
            f"{base_count} base hops exceed the supported maximum of {MAX_BASE_HOPS}"
        )
    return [
        tuple(i for i in range(base_count) if mask >> i & 1)
        for mask in range(1, 1 << base_count)
    ]


def group_reward(subset: Sequence[int], per_hop: Sequence[float], base_count: int) -> float:
    """Sum of the chosen hops' rewards scaled into [0, 1]."""
    total = sum(per_hop[i] for i in subset)
    return total / base_count


def lift_engine(
    base_count: int,
    cfg: Optional[GameConfig] = None,
    grid: int = 10,
    max_candidates: int = 500,
    start: Optional[Sequence[float]] = None,
) -> PolicyEngine:
    """Policy engine over the subset choices of ``base_count`` hops."""
    incidence = subset_choices(base_count)
    cfg = cfg or GameConfig()
    candidates = candidate_set(
        len(incidence), grid=grid, floor=cfg.floor, max_candidates=max_candidates
    )
    return PolicyEngine(candidates, cfg=cfg, incidence=incidence, start=start)
