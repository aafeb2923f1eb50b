"""Expected-utility maximization over growing market segments.

The program is sample-average approximation on a frozen pool: maximize

    F(phi) = (1/n) sum_j u(V_j(phi)),   V_j(phi) = sum_{i<=k} phi_i J_{j,i},

over phi in R^k, where J_{j,i} = eps_{j,i} - b_i are the centered shock
draws.  F is concave because u is, so a quasi-Newton ascent with a
backtracking Armijo line search converges globally; every accepted step
increases the objective.  Iterates where u(V) overflows to -inf are
rejected inside the line search, which is how membership in the
finite-expected-utility class is enforced empirically.

Stopping is first-order: the run reports "converged" exactly when every
gradient component satisfies |g_l| <= max(tau_g * u'(0), 3 * SE_l),
i.e. the first-order conditions hold up to the configured tolerance or
up to Monte Carlo resolution, whichever is coarser.  Internally the
solver keeps polishing toward the deterministic tolerance so downstream
density residuals inherit as little optimizer slack as possible.
Objectives that keep improving as ||phi|| grows past the divergence
radius are reported as "diverging-objective" - with an unbounded-gain
utility and a rich enough pool that is evidence of an empirical
arbitrage direction, not a solver failure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _blocks
from .market import ReducedParams, Strategy
from .shocks import ShockFamily
from .utility import UtilityFunction
from .valuation import SamplePool, build_pool, value_samples

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"
STATUS_DIVERGING = "diverging-objective"

STATUS_MESSAGES = {
    STATUS_CONVERGED: "first-order conditions met within tolerance",
    STATUS_MAX_ITER: "iteration budget exhausted before the FOC check passed",
    STATUS_DIVERGING: "objective still improving past the divergence radius",
}

_OVERFLOW_ABORT_FRACTION = 1e-3
_MIN_STEP = 1e-14


class UnboundedObjectiveError(ValueError):
    """An affine utility makes the expected-utility program unbounded."""


@dataclass
class OptimizationProblem:
    """One segment problem: market, shocks, utility, pool size and seed."""

    reduced: ReducedParams
    family: ShockFamily
    utility: UtilityFunction
    k: int
    n_samples: int
    seed: int
    grad_tol: float = 1e-6
    max_iter: int = 200
    armijo_c1: float = 1e-4
    radius: float | None = None
    antithetic: bool = False
    threads: int = 1
    initial: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.n_samples < 2:
            raise ValueError("need at least 2 samples")
        if not self.grad_tol > 0.0:
            raise ValueError("grad_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        u = self.utility
        if u.is_affine:
            raise UnboundedObjectiveError(
                f"{u.label()} is affine: expected utility grows without bound "
                "along any direction with positive drift; refusing to solve"
            )
        if not u.bounded_above:
            if u.growth is None:
                raise UnboundedObjectiveError(
                    f"{u.label()} is unbounded above and carries no growth "
                    "certificate; the segment problem may have no maximizer"
                )
            _, alpha = u.growth
            if not alpha < 1.0:
                raise UnboundedObjectiveError(
                    f"{u.label()} growth exponent {alpha} is not < 1; "
                    "sublinear gains are required for a maximizer to exist"
                )
        if self.initial is not None:
            init = np.asarray(self.initial, dtype=np.float64)
            if init.shape != (self.k,) or not np.all(np.isfinite(init)):
                raise ValueError(f"initial point must be a finite vector of length {self.k}")
            self.initial = init

    def default_radius(self) -> float:
        if self.radius is not None:
            return float(self.radius)
        return 1e3 * (1.0 + math.sqrt(self.reduced.sharpe_partial(self.k)))


@dataclass(frozen=True)
class EvalStats:
    """Objective and gradient estimates with their Monte Carlo errors."""

    value: float
    value_se: float
    grad: np.ndarray
    grad_se: np.ndarray
    flagged: int

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.grad).max()) if self.grad.size else 0.0


class _Evaluator:
    """Blockwise objective/gradient sums over a fixed centered matrix."""

    def __init__(self, J: np.ndarray, utility: UtilityFunction, threads: int = 1):
        self.J = J
        self.u = utility
        self.threads = max(int(threads), 1)
        self.n, self.k = J.shape

    def value_only(self, phi: np.ndarray) -> tuple[float, int]:
        def worker(lo: int, hi: int):
            v = self.J[lo:hi] @ phi
            uv = self.u(v)
            bad = int(np.size(uv) - np.count_nonzero(np.isfinite(uv)))
            return (float(np.sum(uv)) if bad == 0 else math.nan, bad)

        parts = _blocks.map_blocks(worker, self.n, self.threads)
        flagged = sum(p[1] for p in parts)
        if flagged:
            return math.nan, flagged
        return math.fsum(p[0] for p in parts) / self.n, 0

    def full(self, phi: np.ndarray) -> EvalStats:
        def worker(lo: int, hi: int):
            block = self.J[lo:hi]
            v = block @ phi
            uv = self.u(v)
            w = self.u.deriv(v)
            bad = int(np.size(uv) - np.count_nonzero(np.isfinite(uv)))
            bad += int(np.size(w) - np.count_nonzero(np.isfinite(w)))
            if bad:
                return None
            g = block.T @ w
            g_sq = (block * block).T @ (w * w)
            return (float(np.sum(uv)), float(np.sum(uv * uv)), g, g_sq)

        parts = _blocks.map_blocks(worker, self.n, self.threads)
        if any(p is None for p in parts):
            flagged = sum(1 for p in parts if p is None) * _blocks.BLOCK_SIZE
            return EvalStats(math.nan, math.nan, np.full(self.k, math.nan),
                             np.full(self.k, math.nan), flagged)
        n = self.n
        total = math.fsum(p[0] for p in parts)
        total_sq = math.fsum(p[1] for p in parts)
        grad = _blocks.fsum_partials([p[2] for p in parts]) / n
        grad_sq = _blocks.fsum_partials([p[3] for p in parts]) / n
        value = total / n
        var = max(total_sq / n - value * value, 0.0)
        grad_var = np.maximum(grad_sq - grad * grad, 0.0)
        return EvalStats(value, math.sqrt(var / n), grad, np.sqrt(grad_var / n), 0)


def objective_and_gradient(phi, utility: UtilityFunction, pool: SamplePool,
                           reduced: ReducedParams, threads: int = 1) -> EvalStats:
    """SAA objective, gradient, and standard errors at one point.

    More than 0.1 percent non-finite utility values abort with a
    diagnostic: the strategy sits far outside the region where the pool
    can represent the expectation.
    """
    if isinstance(phi, Strategy):
        if not phi.support_is_finite or phi.segment > pool.k:
            raise ValueError("strategy support must fit inside the pool")
        vec = phi.dense(pool.k)
    else:
        vec = np.asarray(phi, dtype=np.float64)
        if vec.shape != (pool.k,):
            raise ValueError(f"phi must have length {pool.k}")
    stats = _Evaluator(pool.centered(reduced), utility, threads).full(vec)
    if stats.flagged > _OVERFLOW_ABORT_FRACTION * pool.n_samples:
        raise OverflowError(
            f"{stats.flagged} of {pool.n_samples} samples overflow u(V); "
            "the strategy is outside the representable region of this pool"
        )
    return stats


@dataclass
class OptimizationResult:
    """Solved segment problem with convergence diagnostics."""

    phi_star: np.ndarray
    value: float
    value_se: float
    foc_residuals: np.ndarray
    foc_se: np.ndarray
    status: str
    iterations: int
    trace: tuple
    u_minus_mean: float
    problem: OptimizationProblem = field(repr=False)
    pool: SamplePool = field(repr=False)

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.foc_residuals).max())

    @property
    def strategy(self) -> Strategy:
        return Strategy.from_weights(self.phi_star)

    def foc_pass(self, grad_tol: float | None = None) -> bool:
        """Componentwise |g_l| <= max(tol * u'(0), 3 SE_l)."""
        tol = self.problem.grad_tol if grad_tol is None else grad_tol
        scale = _foc_scale(self.problem.utility)
        bound = np.maximum(tol * scale, 3.0 * self.foc_se)
        return bool(np.all(np.abs(self.foc_residuals) <= bound))


def _foc_scale(u: UtilityFunction) -> float:
    d0 = u.deriv(0.0)
    if not (math.isfinite(d0) and d0 > 0.0):
        return 1.0
    return float(d0)


def maximize_segment(problem: OptimizationProblem,
                     pool: SamplePool | None = None) -> OptimizationResult:
    """Solve one segment problem by BFGS ascent on the frozen pool.

    A pool built elsewhere (e.g. shared across a sweep) can be passed in;
    it must match the problem's k and sample count.
    """
    if pool is None:
        pool = build_pool(problem.family, problem.k, problem.n_samples,
                          problem.seed, problem.antithetic)
    if pool.k != problem.k or pool.n_samples != problem.n_samples:
        raise ValueError("pool shape does not match the problem")
    ev = _Evaluator(pool.centered(problem.reduced), problem.utility, problem.threads)
    scale = _foc_scale(problem.utility)
    tight_tol = problem.grad_tol * scale
    radius = problem.default_radius()

    x = np.zeros(problem.k) if problem.initial is None else problem.initial.copy()
    stats = ev.full(x)
    if stats.flagged:
        raise OverflowError("initial point already overflows u(V) on the pool")
    H = np.eye(problem.k)
    trace = []
    status = STATUS_MAX_ITER
    iterations = 0

    for it in range(1, problem.max_iter + 1):
        iterations = it
        resid = stats.max_residual
        trace.append((it, stats.value, resid))
        if resid <= tight_tol:
            status = STATUS_CONVERGED
            break
        if float(np.linalg.norm(x)) > radius:
            status = STATUS_DIVERGING
            break

        direction = H @ stats.grad
        slope = float(stats.grad @ direction)
        if slope <= 0.0:
            H = np.eye(problem.k)
            direction = stats.grad.copy()
            slope = float(stats.grad @ stats.grad)
            if slope == 0.0:
                status = STATUS_CONVERGED
                break

        step = 1.0
        new_x = None
        while step >= _MIN_STEP:
            cand = x + step * direction
            val, flagged = ev.value_only(cand)
            if flagged == 0 and val >= stats.value + problem.armijo_c1 * step * slope:
                new_x = cand
                break
            step *= 0.5
        if new_x is None:
            # Line search exhausted: the iterate is as polished as this
            # pool allows; fall through to the statistical FOC verdict.
            break

        new_stats = ev.full(new_x)
        if new_stats.flagged:
            break
        s = new_x - x
        y = stats.grad - new_stats.grad  # curvature pair for the concave objective
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * max(float(np.linalg.norm(y)), 1e-300):
            rho = 1.0 / sy
            sy_outer = np.outer(s, y)
            H = H - rho * (sy_outer @ H + H @ sy_outer.T) \
                + rho * rho * float(y @ H @ y) * np.outer(s, s) + rho * np.outer(s, s)
        x, stats = new_x, new_stats

    if status == STATUS_MAX_ITER:
        bound = np.maximum(tight_tol, 3.0 * stats.grad_se)
        if bool(np.all(np.abs(stats.grad) <= bound)):
            status = STATUS_CONVERGED

    v = ev.J @ x
    uv = problem.utility(v)
    u_minus = _blocks.ordered_mean(np.maximum(-uv, 0.0), problem.threads)
    return OptimizationResult(
        phi_star=x,
        value=stats.value,
        value_se=stats.value_se,
        foc_residuals=stats.grad,
        foc_se=stats.grad_se,
        status=status,
        iterations=iterations,
        trace=tuple(trace),
        u_minus_mean=u_minus,
        problem=problem,
        pool=pool,
    )


@dataclass(frozen=True)
class SweepRow:
    k: int
    value: float
    value_se: float
    max_residual: float
    status: str
    distance_from_prev: float


@dataclass(frozen=True)
class SweepReport:
    """Optimal values v_k along nested segments, with stabilization verdict."""

    rows: tuple[SweepRow, ...]
    verdict: str
    value_tol: float
    dist_tol: float

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])


def segment_sweep(problem: OptimizationProblem, k_list, value_tol: float = 1e-4,
                  dist_tol: float = 1e-2) -> tuple[SweepReport, list[OptimizationResult]]:
    """Solve the segment problems for ascending k on one shared pool.

    Columns are keyed by (seed, index), so the k-column pool is literally
    the first k columns of the k_max pool: common random numbers across
    segments.  Each solve warm-starts from the previous optimum padded
    with zeros, which keeps v_k monotone up to solver tolerance.
    """
    ks = [int(k) for k in k_list]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] < 1:
        raise ValueError("k_list must be strictly ascending positive integers")
    if ks[-1] != problem.k:
        raise ValueError(f"problem.k ({problem.k}) must equal the largest k in the sweep")
    big_pool = build_pool(problem.family, ks[-1], problem.n_samples,
                          problem.seed, problem.antithetic)
    rows: list[SweepRow] = []
    results: list[OptimizationResult] = []
    prev_phi: np.ndarray | None = None
    for k in ks:
        sub = OptimizationProblem(
            reduced=problem.reduced, family=problem.family, utility=problem.utility,
            k=k, n_samples=problem.n_samples, seed=problem.seed,
            grad_tol=problem.grad_tol, max_iter=problem.max_iter,
            armijo_c1=problem.armijo_c1, radius=problem.radius,
            antithetic=problem.antithetic, threads=problem.threads,
            initial=None if prev_phi is None else np.pad(prev_phi, (0, k - prev_phi.shape[0])),
        )
        res = maximize_segment(sub, big_pool.restrict(k))
        if prev_phi is None:
            dist = float(np.linalg.norm(res.phi_star))
        else:
            dist = float(np.linalg.norm(res.phi_star - np.pad(prev_phi, (0, k - prev_phi.shape[0]))))
        rows.append(SweepRow(k, res.value, res.value_se, res.max_residual, res.status, dist))
        results.append(res)
        prev_phi = res.phi_star
    if len(rows) >= 2:
        gain = rows[-1].value - rows[-2].value
        se = math.hypot(rows[-1].value_se, rows[-2].value_se)
        stable = gain <= max(value_tol, 3.0 * se) and rows[-1].distance_from_prev <= dist_tol
        verdict = "converged" if stable else f"not converged at k={ks[-1]}"
    else:
        verdict = f"single segment k={ks[-1]}"
    return SweepReport(tuple(rows), verdict, value_tol, dist_tol), results


@dataclass(frozen=True)
class GapRow:
    n: int
    gap: float
    gap_se: float


@dataclass(frozen=True)
class GapReport:
    """Value lost by truncating the optimum to its first n coordinates."""

    rows: tuple[GapRow, ...]
    full_value: float


def truncation_gap(result: OptimizationResult, n_list) -> GapReport:
    """Per-sample utility gap between phi* and its prefix truncations.

    Gaps are differences on the shared pool, so their standard errors
    reflect the (small) spread of the per-sample difference, not of the
    two values separately.  Concavity plus first-order optimality makes
    every gap nonnegative up to solver and Monte Carlo tolerance, and
    decreasing in n whenever the dropped tail shrinks.
    """
    ns = [int(n) for n in n_list]
    if any(n < 0 or n > result.problem.k for n in ns):
        raise ValueError(f"truncation points must lie in [0, {result.problem.k}]")
    u = result.problem.utility
    reduced = result.problem.reduced
    full = value_samples(result.strategy, reduced, result.pool)
    u_full = u(full)
    rows = []
    for n in ns:
        trunc = Strategy.from_weights(result.phi_star[:n])
        v_n = value_samples(trunc, reduced, result.pool)
        diff = u_full - u(v_n)
        gap, se = _blocks.mean_and_se(diff, result.problem.threads)
        rows.append(GapRow(n, gap, se))
    return GapReport(tuple(rows), result.value)


@dataclass(frozen=True)
class EscalationRow:
    n_samples: int
    value: float
    value_se: float
    phi_distance_to_largest: float


def pool_escalation_report(problem: OptimizationProblem,
                           factors=(1, 4, 16)) -> tuple[EscalationRow, ...]:
    """Re-solve on nested pools n, 4n, 16n to expose Monte Carlo bias.

    Row prefixes of a column are draw-stable, so the smaller pools are
    literally the leading rows of the largest one.
    """
    fs = sorted(set(int(f) for f in factors))
    if any(f < 1 for f in fs):
        raise ValueError("factors must be positive integers")
    n_max = problem.n_samples * fs[-1]
    big = build_pool(problem.family, problem.k, n_max, problem.seed, problem.antithetic)
    solves = []
    for f in fs:
        n = problem.n_samples * f
        sub = OptimizationProblem(
            reduced=problem.reduced, family=problem.family, utility=problem.utility,
            k=problem.k, n_samples=n, seed=problem.seed, grad_tol=problem.grad_tol,
            max_iter=problem.max_iter, armijo_c1=problem.armijo_c1, radius=problem.radius,
            antithetic=problem.antithetic, threads=problem.threads,
        )
        sub_pool = SamplePool(big.shocks[:n], big.family, big.seed, big.antithetic)
        solves.append(maximize_segment(sub, sub_pool))
    ref = solves[-1].phi_star
    return tuple(
        EscalationRow(s.problem.n_samples, s.value, s.value_se,
                      float(np.linalg.norm(s.phi_star - ref)))
        for s in solves
    )
