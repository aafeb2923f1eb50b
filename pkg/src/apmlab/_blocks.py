"""Order-fixed block reductions, optionally fanned out over threads.

Sample reductions (means, gradients, second moments) are computed per
fixed-size row block and the block partials are combined in block order
with compensated summation.  The block partition never depends on the
worker count, and the final fsum over partials is exact, so any thread
schedule produces bit-identical results.  numpy releases the GIL inside
the per-block kernels, which is where all the arithmetic lives.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 1 << 16


def block_ranges(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + block_size, n)) for lo in range(0, max(n, 0), block_size)]


def map_blocks(fn: Callable[[int, int], object], n: int, threads: int = 1) -> list:
    """Apply ``fn(lo, hi)`` to every block, returning results in block order."""
    ranges = block_ranges(n)
    if threads <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def fsum_partials(partials: Sequence) -> float | np.ndarray:
    """Exact sum of scalar or vector block partials, in block order."""
    first = partials[0]
    if np.ndim(first) == 0:
        return math.fsum(float(p) for p in partials)
    stacked = np.stack(partials)
    return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])])


def ordered_sum(x: np.ndarray, threads: int = 1) -> float:
    """Thread-count-invariant sum of a 1-D array."""
    if x.size == 0:
        return 0.0
    partials = map_blocks(lambda lo, hi: float(np.sum(x[lo:hi])), x.shape[0], threads)
    return math.fsum(partials)


def ordered_mean(x: np.ndarray, threads: int = 1) -> float:
    if x.size == 0:
        raise ValueError("mean of an empty array")
    return ordered_sum(x, threads) / x.shape[0]


def mean_and_se(x: np.ndarray, threads: int = 1) -> tuple[float, float]:
    """Sample mean and its standard error, order-fixed."""
    n = x.shape[0]
    if n == 0:
        raise ValueError("mean of an empty array")
    total = ordered_sum(x, threads)
    total_sq = math.fsum(
        map_blocks(lambda lo, hi: float(np.sum(x[lo:hi] * x[lo:hi])), n, threads)
    )
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    se = math.sqrt(var / n)
    return mean, se
