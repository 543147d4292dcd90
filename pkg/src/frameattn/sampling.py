"""Segment-based frame selection.

Training instances use K frames drawn one-per-segment from a video split
into K contiguous index ranges; evaluation enumerates every frame. All
randomness comes through an explicit numpy Generator so samples are
reproducible, and independent streams are derived from (seed, epoch,
instance index) tuples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SegmentPlan:
    """K half-open index ranges covering [0, n), in order, non-overlapping."""

    n: int
    k: int
    boundaries: list[tuple[int, int]]


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 stream for a (seed, key...) tuple.

    The entropy is the full integer tuple, so streams for different epochs
    or instances never collide.
    """
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


def plan_segments(n: int, k: int) -> SegmentPlan:
    """Split [0, n) into k floor-rounded ranges; range s is
    [floor(s*n/k), floor((s+1)*n/k)). Ranges may be empty when n < k."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    bounds = [(s * n // k, (s + 1) * n // k) for s in range(k)]
    return SegmentPlan(n=n, k=k, boundaries=bounds)


def sample_training(n: int, k: int, rng: np.random.Generator) -> list[int]:
    """One uniformly random frame index per segment, length exactly k.

    Empty segments (only possible when n < k) repeat the nearest preceding
    segment's sample; empty segments before the first non-empty one copy the
    first sample instead, so the output is always non-decreasing.
    """
    plan = plan_segments(n, k)
    picks: list[int | None] = []
    for lo, hi in plan.boundaries:
        if hi > lo:
            picks.append(int(rng.integers(lo, hi)))
        else:
            picks.append(picks[-1] if picks else None)
    first = next(p for p in picks if p is not None)
    return [first if p is None else p for p in picks]


def frames_for_eval(n: int) -> list[int]:
    """Every frame index of an n-frame video, in order."""
    if n < 1:
        raise ValueError("n must be positive")
    return list(range(n))
