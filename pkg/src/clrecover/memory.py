"""Construction of the availability index sets over past tasks.

Policies never touch the current task, which always keeps all of its
samples. A policy is pure given its seed, so repeated application at
successive task boundaries is consistent: the reservoir pass over a longer
stream replays the same decisions it made on the shorter prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import SampleStore, stream

KINDS = ("full", "fixed", "random", "reservoir")

_TAG_RANDOM = 10
_TAG_RESERVOIR = 11


@dataclass(frozen=True, eq=False)
class MemoryPolicy:
    kind: str
    fixed_sets: tuple[tuple[int, ...], ...] | None = None  # fixed: per-task indices
    budget: int | None = None  # random: kept samples per past task
    capacity: int | None = None  # reservoir: total buffer size over past tasks
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown memory policy kind {self.kind!r}")
        if self.kind == "fixed" and not self.fixed_sets:
            raise ValueError("fixed policy needs index sets")
        if self.kind == "random" and (self.budget is None or self.budget < 1):
            raise ValueError("random policy needs a per-task budget >= 1")
        if self.kind == "reservoir" and (self.capacity is None or self.capacity < 1):
            raise ValueError("reservoir policy needs a capacity >= 1")


def reservoir_pass(n_items: int, capacity: int, rng: np.random.Generator) -> np.ndarray:
    """Single-pass uniform buffer over a stream of n_items; returns kept
    stream positions. Every item survives with probability capacity/n_items."""
    if n_items <= capacity:
        return np.arange(n_items)
    buf = list(range(capacity))
    for j in range(capacity, n_items):
        r = int(rng.integers(0, j + 1))
        if r < capacity:
            buf[r] = j
    return np.asarray(sorted(buf))


def restrict(store: SampleStore, policy: MemoryPolicy, current_t: int | None = None) -> SampleStore:
    """Partial view of a full store as seen when task ``current_t`` is being
    trained. Rows past current_t are dropped; past rows are subsampled per
    the policy; the current row is kept whole. Never adds samples."""
    if current_t is None:
        current_t = store.T
    if not 1 <= current_t <= store.T:
        raise IndexError(f"current task {current_t} outside 1..{store.T}")
    m = store.m
    mask = np.zeros((current_t, m), dtype=bool)
    mask[current_t - 1] = store.mask[current_t - 1]

    if policy.kind == "full":
        mask[: current_t - 1] = store.mask[: current_t - 1]
    elif policy.kind == "fixed":
        if len(policy.fixed_sets) < current_t - 1:
            raise ValueError("fixed policy does not cover all past tasks")
        for t in range(1, current_t):
            idx = np.asarray(policy.fixed_sets[t - 1], dtype=int)
            if idx.size and (idx.min() < 0 or idx.max() >= m):
                raise ValueError(f"fixed indices for task {t} outside 0..{m - 1}")
            mask[t - 1, idx] = True
    elif policy.kind == "random":
        if policy.budget > m:
            raise ValueError(f"budget {policy.budget} exceeds m={m}")
        for t in range(1, current_t):
            rng = stream(policy.seed, _TAG_RANDOM, t)
            keep = rng.choice(m, size=policy.budget, replace=False)
            mask[t - 1, keep] = True
    else:  # reservoir over the concatenated past stream, task-major order
        n_past = (current_t - 1) * m
        rng = stream(policy.seed, _TAG_RESERVOIR)
        kept = reservoir_pass(n_past, policy.capacity, rng)
        mask[kept // m, kept % m] = True

    mask &= store.mask[:current_t]
    mask[current_t - 1] = store.mask[current_t - 1]

    x = np.where(mask[:, :, None], store.x[:current_t], np.nan)
    y = np.where(mask[:, :, None], store.y[:current_t], np.nan)
    return SampleStore(x=x, y=y, mask=mask)


def balance_report(store: SampleStore) -> tuple[int, int, float]:
    """(min n_t, max n_t, max/min) over tasks that hold at least one sample."""
    counts = store.n_t
    counts = counts[counts > 0]
    lo, hi = int(counts.min()), int(counts.max())
    return lo, hi, hi / lo
