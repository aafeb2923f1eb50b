"""Portfolio valuation against frozen shock pools.

A :class:`SamplePool` freezes a Monte Carlo draw of the shock matrix for
assets 1..k.  Valuing a strategy phi on the pool means forming

    V_j = sum_{i<=k} phi_i (eps_{j,i} - b_i)

for every sample row j.  Analytic moments come for free from the model:
E V = -sum phi_i b_i and Var V = sum phi_i^2, both computed with
compensated summation over the coordinates.  Strategies with live
analytic tails are valued on a truncation horizon together with a
Cauchy-Schwarz bound |sum_{i>n} phi_i b_i| <= l2-tail(phi) * l2-tail(b)
on the dropped mean, so the caller can drive the horizon from a
tolerance instead of guessing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _blocks
from .market import ReducedParams, Strategy
from .shocks import ShockFamily, sample


@dataclass(frozen=True)
class SamplePool:
    """A frozen (n_samples x k) draw of shock columns for assets 1..k."""

    shocks: np.ndarray
    family: ShockFamily
    seed: int
    antithetic: bool = False

    def __post_init__(self) -> None:
        arr = np.asarray(self.shocks, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("pool shocks must be a 2-D matrix")
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "shocks", arr)

    @property
    def n_samples(self) -> int:
        return int(self.shocks.shape[0])

    @property
    def k(self) -> int:
        return int(self.shocks.shape[1])

    def centered(self, reduced: ReducedParams) -> np.ndarray:
        """Shock matrix minus the drift row b_1..b_k."""
        return self.shocks - reduced.b.dense(self.k)[None, :]

    def restrict(self, k: int) -> "SamplePool":
        """The same pool on the first k columns (common random numbers)."""
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot restrict a {self.k}-column pool to k={k}")
        return SamplePool(self.shocks[:, :k], self.family, self.seed, self.antithetic)

    def describe(self) -> dict:
        return {
            "family": self.family.label(),
            "seed": self.seed,
            "n_samples": self.n_samples,
            "k": self.k,
            "antithetic": self.antithetic,
        }


def build_pool(family: ShockFamily, k: int, n: int, seed: int,
               antithetic: bool = False) -> SamplePool:
    """Draw and freeze a pool for assets 1..k.

    Antithetic pairing mirrors consecutive Gaussian draws (z, -z); it is
    refused for other families, whose laws are not symmetric in the
    uniform input.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < 1:
        raise ValueError("n must be at least 1")
    if not antithetic:
        return SamplePool(sample(family, range(1, k + 1), n, seed), family, seed, False)
    if family.kind != "gaussian":
        raise ValueError("antithetic pairing is supported for the gaussian family only")
    half = (n + 1) // 2
    base = sample(family, range(1, k + 1), half, seed)
    paired = np.empty((2 * half, k))
    paired[0::2] = base
    paired[1::2] = -base
    return SamplePool(paired[:n], family, seed, True)


def value_samples(strategy: Strategy, reduced: ReducedParams, pool: SamplePool,
                  allow_truncation: bool = False) -> np.ndarray:
    """Sample values V_j of the strategy on the pool.

    Strategies supported past the pool's columns are refused unless
    ``allow_truncation`` is set, in which case the value of the truncated
    strategy is returned and :func:`truncation_bounds` quantifies what
    was dropped.
    """
    if not strategy.support_is_finite or strategy.segment > pool.k:
        if not allow_truncation:
            raise ValueError(
                f"strategy support exceeds the pool's {pool.k} columns; "
                "pass allow_truncation=True to value the truncated strategy"
            )
    k_eff = min(int(min(strategy.segment, pool.k)), pool.k)
    if k_eff == 0:
        return np.zeros(pool.n_samples)
    phi = strategy.dense(k_eff)
    b = reduced.b.dense(k_eff)
    drift = math.fsum(phi * b)
    return pool.shocks[:, :k_eff] @ phi - drift


def truncation_bounds(strategy: Strategy, reduced: ReducedParams, n: int) -> tuple[float, float]:
    """(mean bound, tail variance) for dropping coordinates past n.

    The mean of the dropped piece satisfies |E sum_{i>n} phi_i (eps_i - b_i)|
    <= sqrt(sum_{i>n} phi_i^2) * sqrt(sum_{i>n} b_i^2); its variance is
    exactly sum_{i>n} phi_i^2.
    """
    phi_tail = strategy.coords.sum_sq_past(n)
    if phi_tail is None:
        raise ValueError("strategy tail is unknown; no truncation bound available")
    if math.isinf(phi_tail):
        raise ValueError("strategy is not admissible: infinite l2 norm")
    b_tail = reduced.b.sum_sq_past(n)
    if b_tail is None:
        raise ValueError("b tail is unknown; no truncation bound available")
    if math.isinf(b_tail):
        raise ValueError("b tail diverges; the dropped mean is unbounded")
    return math.sqrt(phi_tail * b_tail), phi_tail


@dataclass(frozen=True)
class Moments:
    """Analytic mean/variance of V(phi), with the truncation bookkeeping."""

    mean: float
    variance: float
    mean_tail_bound: float
    horizon: int

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def value_moments(strategy: Strategy, reduced: ReducedParams,
                  truncate_at: int | None = None) -> Moments:
    """E V = -sum phi_i b_i and Var V = sum phi_i^2, compensated.

    Finite-support strategies are evaluated exactly.  A live tail is
    summed explicitly up to the horizon (defaulting to both prefixes)
    and the remaining mean is bounded via Cauchy-Schwarz; the variance
    keeps its exact analytic tail.
    """
    norm_sq = strategy.norm_sq()
    if norm_sq is None:
        raise ValueError("strategy tail is unknown; moments are undetermined")
    if math.isinf(norm_sq):
        raise ValueError("strategy is not admissible: infinite l2 norm")
    if strategy.support_is_finite:
        horizon = int(strategy.segment)
    else:
        horizon = max(strategy.coords.prefix_len, reduced.b.prefix_len, truncate_at or 0)
    phi = strategy.dense(horizon)
    b = reduced.b.dense(horizon)
    mean = -math.fsum(phi * b)
    if strategy.support_is_finite and strategy.segment <= horizon:
        bound = 0.0
    else:
        bound, _ = truncation_bounds(strategy, reduced, horizon)
    return Moments(mean=mean, variance=norm_sq, mean_tail_bound=bound, horizon=horizon)


def expectation_under_density(values: np.ndarray, weights, threads: int = 1) -> float:
    """Weighted sample mean E_Q[V] for a change-of-measure weight vector.

    ``weights`` may be a bare array or anything exposing ``.weights``.
    The weights must average to 1 (within 1e-8): they represent a
    probability density with respect to the sampling measure.
    """
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if w.shape != v.shape or w.ndim != 1:
        raise ValueError("values and weights must be matching 1-D vectors")
    w_mean = _blocks.ordered_mean(w, threads)
    if abs(w_mean - 1.0) > 1e-8:
        raise ValueError(f"weights average to {w_mean!r}, not 1; not a density")
    return _blocks.ordered_mean(w * v, threads)


def value_samples_streamed(phi: np.ndarray, reduced: ReducedParams, family: ShockFamily,
                           n: int, seed: int, chunk: int = 256) -> np.ndarray:
    """V_j for a dense weight vector without materializing the pool.

    Streams shock columns in index chunks, so strategies over 10^4+
    assets stay inside memory.  Columns are keyed by (seed, index), so
    the draw agrees with a built pool of the same seed: bit-identical
    when k fits in one chunk, and up to summation rounding otherwise
    (the chunked accumulation orders the additions differently).
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 1:
        raise ValueError("phi must be a dense 1-D weight vector")
    k = phi.shape[0]
    out = np.zeros(n)
    drift = math.fsum(phi * reduced.b.dense(k))
    for lo in range(0, k, chunk):
        hi = min(lo + chunk, k)
        cols = sample(family, range(lo + 1, hi + 1), n, seed)
        out += cols @ phi[lo:hi]
    return out - drift
