"""Associative scans: sequential reference and work-parallel Blelloch engine.

Two implementations of the all-prefix (and all-suffix) computation under an
associative operator:

* ``seq_scan`` / ``par_scan`` operate on a list of arbitrary Python elements
  and a binary combine callable.
* ``par_scan_stacked`` operates on element sequences stored as tuples of
  numpy arrays with a leading time axis, executing every combine of a tree
  level as one vectorized call.

Both parallel engines run the identical up-sweep / down-sweep tree for a
given length (padded to a power of two with the identity element), so the
set of combined pairs, and hence the result, never depends on how many
workers execute a level. Scans are inclusive: the exclusive down-sweep
result is folded with the saved input in a final pass.

Depth accounting tags every produced node with
``depth(parent) = max(depth(children)) + 1`` and reports the maximum, a
span surrogate: for T elements the parallel depth is at most
``2*ceil(log2 T) + 1`` while the sequential scan has depth ``T - 1``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence, TypeVar

import numpy as np

E = TypeVar("E")

__all__ = [
    "ScanDirection",
    "ScanStats",
    "seq_scan",
    "par_scan",
    "par_scan_stacked",
]


class ScanDirection(Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


@dataclass
class ScanStats:
    """Operator-call accounting for one scan.

    combine_count: total number of combine invocations (vectorized engines
        count one per combined pair).
    combine_depth: longest chain of dependent combine calls.
    """

    combine_count: int = 0
    combine_depth: int = 0


def seq_scan(
    elements: Sequence[E],
    combine: Callable[[E, E], E],
    direction: ScanDirection = ScanDirection.FORWARD,
) -> tuple[list[E], ScanStats]:
    """Reference scan.

    Forward returns s_k = a_1 (x) ... (x) a_k; Reverse returns
    s_k = a_k (x) ... (x) a_T (folded as a_k (x) s_{k+1}, the classic
    backward recursion).
    """
    n = len(elements)
    if n == 0:
        raise ValueError("empty scan")
    out = list(elements)
    if direction is ScanDirection.FORWARD:
        for k in range(1, n):
            out[k] = combine(out[k - 1], elements[k])
    else:
        for k in range(n - 2, -1, -1):
            out[k] = combine(elements[k], out[k + 1])
    return out, ScanStats(combine_count=n - 1, combine_depth=n - 1)


def _tree_levels(p: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(j, k) index vectors per up-sweep level for power-of-two length p."""
    levels = []
    d = 0
    while (1 << (d + 1)) <= p:
        half = 1 << d
        j = np.arange(half - 1, p, 2 * half)
        levels.append((j, j + half))
        d += 1
    return levels


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def par_scan(
    elements: Sequence[E],
    combine: Callable[[E, E], E],
    identity: E,
    direction: ScanDirection = ScanDirection.FORWARD,
    workers: int = 1,
) -> tuple[list[E], ScanStats]:
    """Blelloch scan over Python elements.

    ``combine`` must be associative and pure; ``identity`` must be a
    two-sided neutral element. ``workers > 1`` evaluates each tree level in
    a thread pool; the combined pairs are a function of len(elements) only,
    so results are deterministic for any worker count.
    """
    n = len(elements)
    if n == 0:
        raise ValueError("empty scan")
    if direction is ScanDirection.REVERSE:
        flipped, stats = par_scan(
            list(reversed(elements)),
            lambda x, y: combine(y, x),
            identity,
            ScanDirection.FORWARD,
            workers=workers,
        )
        flipped.reverse()
        return flipped, stats

    p = _next_pow2(n)
    a: list[E] = list(elements) + [identity] * (p - n)
    saved = list(a)
    depth = [0] * p
    stats = ScanStats()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def apply(jobs: list[tuple[E, E]]) -> list[E]:
        if pool is None:
            return [combine(x, y) for x, y in jobs]
        return list(pool.map(lambda xy: combine(xy[0], xy[1]), jobs))

    try:
        levels = _tree_levels(p)
        for jv, kv in levels:  # up-sweep
            results = apply([(a[j], a[k]) for j, k in zip(jv, kv)])
            for j, k, r in zip(jv, kv, results):
                a[k] = r
                depth[k] = max(depth[j], depth[k]) + 1
                stats.combine_depth = max(stats.combine_depth, depth[k])
            stats.combine_count += len(jv)
        a[p - 1] = identity
        depth[p - 1] = 0
        for jv, kv in reversed(levels):  # down-sweep
            results = apply([(a[k], a[j]) for j, k in zip(jv, kv)])
            for j, k, r in zip(jv, kv, results):
                dj, dk = depth[j], depth[k]
                a[j] = a[k]
                depth[j] = dk
                a[k] = r
                depth[k] = max(dj, dk) + 1
                stats.combine_depth = max(stats.combine_depth, depth[k])
            stats.combine_count += len(jv)
        # final pass: exclusive prefix (x) original element -> inclusive
        a = apply(list(zip(a, saved)))
        stats.combine_count += p
        stats.combine_depth = max(stats.combine_depth, max(depth) + 1)
    finally:
        if pool is not None:
            pool.shutdown()
    return a[:n], stats


Stack = tuple[np.ndarray, ...]


def par_scan_stacked(
    arrays: Stack,
    combine: Callable[[Stack, Stack], Stack],
    identity: Stack,
    direction: ScanDirection = ScanDirection.FORWARD,
) -> tuple[Stack, ScanStats]:
    """Blelloch scan over a time-stacked element sequence.

    ``arrays`` is a tuple of ndarrays sharing leading axis T (one slot per
    element); ``identity`` is a matching tuple without the time axis;
    ``combine`` maps two equally-batched stacks to their combination. The
    tree and the instrumentation are identical to :func:`par_scan`, but all
    combines of one level run as a single batched call.
    """
    n = int(arrays[0].shape[0])
    if n == 0:
        raise ValueError("empty scan")
    if any(int(x.shape[0]) != n for x in arrays[1:]):
        raise ValueError("stacked arrays disagree on length")
    if direction is ScanDirection.REVERSE:
        flipped = tuple(np.flip(x, axis=0) for x in arrays)
        out, stats = par_scan_stacked(
            flipped, lambda x, y: combine(y, x), identity, ScanDirection.FORWARD
        )
        return tuple(np.flip(x, axis=0) for x in out), stats

    p = _next_pow2(n)
    work = []
    for x, ident in zip(arrays, identity):
        buf = np.empty((p,) + x.shape[1:], dtype=x.dtype)
        buf[:n] = x
        buf[n:] = ident
        work.append(buf)
    saved = tuple(x.copy() for x in work)
    depth = np.zeros(p, dtype=np.int64)
    stats = ScanStats()

    levels = _tree_levels(p)
    for jv, kv in levels:  # up-sweep
        left = tuple(x[jv] for x in work)
        right = tuple(x[kv] for x in work)
        res = combine(left, right)
        for x, r in zip(work, res):
            x[kv] = r
        depth[kv] = np.maximum(depth[jv], depth[kv]) + 1
        stats.combine_count += len(jv)
        stats.combine_depth = max(stats.combine_depth, int(depth[kv].max()))
    for x, ident in zip(work, identity):
        x[p - 1] = ident
    depth[p - 1] = 0
    for jv, kv in reversed(levels):  # down-sweep
        t = tuple(x[jv] for x in work)
        ak = tuple(x[kv] for x in work)
        for x, r in zip(work, ak):
            x[jv] = r
        res = combine(ak, t)
        for x, r in zip(work, res):
            x[kv] = r
        dj = depth[jv].copy()
        depth[jv] = depth[kv]
        depth[kv] = np.maximum(depth[kv], dj) + 1
        stats.combine_count += len(jv)
        stats.combine_depth = max(stats.combine_depth, int(depth[kv].max()))
    out = combine(tuple(work), saved)  # final pass
    stats.combine_count += p
    stats.combine_depth = max(stats.combine_depth, int(depth.max()) + 1)
    return tuple(x[:n] for x in out), stats
