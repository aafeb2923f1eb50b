"""Arbitrage-pricing market with countably many assets.

The market holds a riskless bond (asset 0, zero rate) and risky assets
i = 1, 2, ... whose excess returns follow a factor structure driven by
independent standardized shocks eps_1, eps_2, ...:

    R_i = mu_i + bar_beta_i * eps_i                          for i <= m,
    R_i = mu_i + sum_{j<=m} beta_i^j eps_j + bar_beta_i eps_i  for i > m,

with every bar_beta_i nonzero.  The first m assets span the systematic
factors; later assets load on those factors plus their own idiosyncratic
shock.  Substituting the mean parameters

    b_i = -mu_i / bar_beta_i                                          (i <= m)
    b_i = -mu_i / bar_beta_i + sum_{j<=m} mu_j beta_i^j / (bar_beta_j bar_beta_i)  (i > m)

turns every portfolio value into a weighted sum of centered shocks:

    V = sum_i psi_i R_i = sum_i phi_i (eps_i - b_i),

where psi are raw asset positions (psi_0 the bond position, with
sum_i psi_i = 0 for self-financing) and phi are the factor coordinates.
The map psi <-> phi is linear and invertible, so all pricing questions
reduce to the sequence b.  In particular b_i is the Sharpe ratio of the
one-shock portfolio exposed to -eps_i, and the partial sums
S_k = sum_{i<=k} b_i^2 decide between asymptotic arbitrage (S_k -> inf)
and its absence (S_k bounded).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sequences import PrefixSequence, TailRule, ZERO_TAIL

_SELF_FINANCING_TOL = 1e-10


@dataclass(frozen=True)
class MarketParams:
    """Raw market description.

    Parameters
    ----------
    m : int
        Number of systematic factors (assets 1..m carry them).
    mu : PrefixSequence
        Mean excess returns mu_i.
    bar_beta : PrefixSequence
        Own-shock loadings bar_beta_i; must be nonzero at every index.
    beta : numpy.ndarray
        Cross loadings beta_i^j for the diversified assets, one row per
        asset starting at i = m + 1, shape ``(n_rows, m)``.  Assets past
        the table carry no cross loadings.
    """

    m: int
    mu: PrefixSequence
    bar_beta: PrefixSequence
    beta: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be at least 1")
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.size == 0:
            beta = beta.reshape(0, self.m)
        if beta.ndim != 2 or beta.shape[1] != self.m:
            raise ValueError(f"beta must have shape (n_rows, {self.m}), got {beta.shape}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta entries must be finite")
        beta = np.array(beta, copy=True)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        # Spot-check the nonzero-loading requirement where values are explicit.
        if np.any(self.bar_beta.prefix == 0.0):
            bad = int(np.flatnonzero(self.bar_beta.prefix == 0.0)[0]) + 1
            raise ValueError(f"bar_beta[{bad}] is zero; every asset needs its own shock")
        if self.bar_beta.tail is not None and self.bar_beta.tail.is_identically_zero:
            raise ValueError("bar_beta tail rule vanishes; every asset needs its own shock")

    @property
    def beta_rows_end(self) -> int:
        """Largest asset index covered by the beta table."""
        return self.m + int(self.beta.shape[0])

    def beta_row(self, i: int) -> np.ndarray:
        """Cross loadings (beta_i^1 .. beta_i^m) for asset i > m."""
        if i <= self.m:
            raise IndexError(f"asset {i} is a factor asset and has no cross-loading row")
        if i <= self.beta_rows_end:
            return self.beta[i - self.m - 1]
        return np.zeros(self.m)


@dataclass
class ReducedParams:
    """The sequence b plus memoized Sharpe partial sums S_k."""

    b: PrefixSequence
    m: int = 1
    _cum_sq: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False, compare=False)

    @classmethod
    def from_b(cls, values, tail: TailRule | None = ZERO_TAIL, m: int = 1) -> "ReducedParams":
        return cls(b=PrefixSequence.from_values(values, tail), m=m)

    def sharpe_partial(self, k: int) -> float:
        """S_k = sum_{i<=k} b_i^2, memoized."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        if k == 0:
            return 0.0
        if self._cum_sq.shape[0] < k:
            vals = self.b.dense(k)
            self._cum_sq = np.cumsum(vals * vals)
        return float(self._cum_sq[k - 1])

    def tail_sum_sq(self, n: int) -> float | None:
        return self.b.sum_sq_past(n)


@dataclass(frozen=True)
class Strategy:
    """Factor-coordinate portfolio weights phi, prefix plus tail."""

    coords: PrefixSequence

    @classmethod
    def from_weights(cls, weights, tail: TailRule | None = ZERO_TAIL) -> "Strategy":
        return cls(PrefixSequence.from_values(weights, tail))

    @property
    def prefix(self) -> np.ndarray:
        return self.coords.prefix

    @property
    def tail(self) -> TailRule | None:
        return self.coords.tail

    def dense(self, k: int) -> np.ndarray:
        return self.coords.dense(k)

    def norm_sq(self) -> float | None:
        """Squared l2 norm including the tail; None when the tail is unknown."""
        return self.coords.sum_sq_total()

    @property
    def segment(self) -> float:
        """Largest index with a nonzero weight (inf for live tails)."""
        if self.coords.tail is None or not self.coords.tail.is_identically_zero:
            return math.inf
        nz = np.flatnonzero(self.prefix)
        return float(nz[-1] + 1) if nz.size else 0.0

    @property
    def support_is_finite(self) -> bool:
        return self.coords.support_is_finite

    def is_admissible(self) -> bool:
        """Admissible means square-summable factor weights."""
        total = self.norm_sq()
        return total is not None and math.isfinite(total)


@dataclass(frozen=True)
class SharpeSums:
    """Partial sums of b_i^2 on a grid, with the analytic tail when known."""

    k_grid: tuple[int, ...]
    partials: tuple[float, ...]
    tail_past_grid: float | None
    verdict: str  # "summable" | "diverging" | "unknown"

    @property
    def total(self) -> float | None:
        if self.verdict == "summable":
            return self.partials[-1] + self.tail_past_grid
        if self.verdict == "diverging":
            return math.inf
        return None


def reduce_params(market: MarketParams, k: int) -> ReducedParams:
    """Derive the Sharpe sequence b for assets 1..k from raw parameters.

    Past the explicit prefix the rule for b is attached only when it stays
    inside the closed tail family: all irregular indices (explicit mu or
    bar_beta values, beta table rows) must fall inside 1..k and the
    bar_beta tail must be constant.  Otherwise the tail is left unknown.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    mu = market.mu.dense(k)
    bar = market.bar_beta.dense(k)
    if np.any(bar == 0.0):
        bad = int(np.flatnonzero(bar == 0.0)[0]) + 1
        raise ValueError(f"bar_beta[{bad}] is zero; cannot reduce")
    b = -mu / bar
    m = market.m
    if k > m:
        # Cross-loading correction for diversified assets.
        mu_f = market.mu.dense(m)
        bar_f = market.bar_beta.dense(m)
        factor_term = mu_f / bar_f  # mu_j / bar_beta_j, j <= m
        last = min(k, market.beta_rows_end)
        for i in range(m + 1, last + 1):
            row = market.beta_row(i)
            b[i - 1] += math.fsum(factor_term * row) / bar[i - 1]
    tail = _reduced_tail(market, k)
    return ReducedParams(b=PrefixSequence(b, tail), m=m)


def _reduced_tail(market: MarketParams, k: int) -> TailRule | None:
    mu_tail = market.mu.tail
    bar_tail = market.bar_beta.tail
    if mu_tail is None or bar_tail is None:
        return None
    irregular_end = max(market.mu.prefix_len, market.bar_beta.prefix_len, market.beta_rows_end)
    if k < irregular_end:
        return None
    if mu_tail.is_identically_zero:
        return ZERO_TAIL
    if bar_tail.kind == "constant" and bar_tail.coeff != 0.0:
        return mu_tail.scaled(-1.0 / bar_tail.coeff)
    return None


def raw_to_factor(psi, market: MarketParams) -> Strategy:
    """Convert raw positions (psi_0, psi_1, ..., psi_k) to factor weights.

    Requires self-financing: the positions must sum to zero.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 1 or psi.shape[0] < 1:
        raise ValueError("psi must be a one-dimensional vector (psi_0, psi_1, ...)")
    if not np.all(np.isfinite(psi)):
        raise ValueError("psi entries must be finite")
    if abs(math.fsum(psi)) > _SELF_FINANCING_TOL * max(1.0, np.abs(psi).max()):
        raise ValueError(f"psi is not self-financing: positions sum to {math.fsum(psi):.3e}")
    k = psi.shape[0] - 1
    if k == 0:
        return Strategy.from_weights(np.zeros(0))
    m = market.m
    bar = market.bar_beta.dense(k)
    phi = np.zeros(k)
    risky = psi[1:]
    top = min(m, k)
    phi[:top] = risky[:top] * bar[:top]
    for i in range(m + 1, k + 1):
        w = risky[i - 1]
        phi[i - 1] = w * bar[i - 1]
        if w != 0.0:
            phi[:m] += w * market.beta_row(i)
    return Strategy.from_weights(phi)


def factor_to_raw(strategy: Strategy, market: MarketParams) -> np.ndarray:
    """Invert :func:`raw_to_factor`; only finite-support strategies qualify.

    Returns (psi_0, psi_1, ..., psi_k) with psi_0 the bond position that
    makes the portfolio self-financing.
    """
    if not strategy.support_is_finite:
        raise ValueError("cannot realize an infinite-support strategy as a raw portfolio")
    phi = strategy.prefix
    k = phi.shape[0]
    if k == 0:
        return np.zeros(1)
    m = market.m
    bar = market.bar_beta.dense(k)
    risky = np.zeros(k)
    for i in range(k, m, -1):
        risky[i - 1] = phi[i - 1] / bar[i - 1]
    top = min(m, k)
    adjusted = np.array(phi[:top], copy=True)
    for i in range(m + 1, k + 1):
        if risky[i - 1] != 0.0:
            adjusted -= risky[i - 1] * market.beta_row(i)[:top]
    risky[:top] = adjusted / bar[:top]
    psi = np.empty(k + 1)
    psi[1:] = risky
    psi[0] = -math.fsum(risky)
    return psi


def sharpe_sum(reduced: ReducedParams, k_grid) -> SharpeSums:
    """Partial sums S_k on an ascending grid, plus the tail past the grid.

    The grid partials are computed with compensated summation.  When the
    sequence carries a tail rule the result also reports the exact sum of
    squares past the largest grid point, or divergence; without a rule the
    verdict is "unknown".
    """
    grid = [int(k) for k in k_grid]
    if not grid:
        raise ValueError("k_grid must be nonempty")
    if any(k < 1 for k in grid):
        raise ValueError("grid entries must be >= 1")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("k_grid must be strictly ascending")
    vals = reduced.b.dense(grid[-1])
    sq = vals * vals
    partials: list[float] = []
    running = 0.0
    prev = 0
    for k in grid:
        running += math.fsum(sq[prev:k])
        partials.append(running)
        prev = k
    tail = reduced.b.sum_sq_past(grid[-1])
    if tail is None:
        verdict = "unknown"
    elif math.isinf(tail):
        verdict = "diverging"
    else:
        verdict = "summable"
    return SharpeSums(tuple(grid), tuple(partials), tail, verdict)
