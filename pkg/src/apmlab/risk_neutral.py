"""Equivalent risk-neutral densities built from marginal utility.

A converged segment optimum phi* yields candidate density weights

    w_j = u'(V_j(phi*)) / mean(u'(V(phi*)))

on the sample pool.  First-order optimality makes the weighted mean of
every centered shock vanish, which is exactly the empirical martingale
property: under the reweighted measure each shock has mean b_i, so every
admissible portfolio has weighted mean value zero.  The module
constructs these densities, verifies the martingale residuals against
Monte Carlo error, reports moment diagnostics for both dQ/dP and dP/dQ,
and implements the recursive exponent schedule that bootstraps density
existence from kappa just below 2/3 up to any growth exponent below 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _blocks
from .market import ReducedParams, Strategy
from .optimizer import OptimizationProblem, OptimizationResult, maximize_segment
from .shocks import ShockFamily, check_assumption_relevant
from .utility import UtilityFunction, make_proof_un
from .valuation import SamplePool, build_pool, value_samples

_UNIT_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class DensityEstimate:
    """Sample-weight representation of a candidate risk-neutral measure."""

    weights: np.ndarray = field(repr=False)
    raw_mean: float
    n_samples: int
    k: int
    linf_bound: float | None
    utility: UtilityFunction | None = field(repr=False, default=None)
    phi_star: np.ndarray | None = field(repr=False, default=None)

    @property
    def max_weight(self) -> float:
        return float(self.weights.max())

    @property
    def min_weight(self) -> float:
        return float(self.weights.min())

    def label(self) -> str:
        src = self.utility.label() if self.utility is not None else "explicit weights"
        return f"density[{src}, n={self.n_samples}, k={self.k}]"

    @classmethod
    def from_weights(cls, weights, k: int, utility: UtilityFunction | None = None,
                     phi_star=None) -> "DensityEstimate":
        """Normalize explicitly supplied positive weights (oracle densities)."""
        raw = np.asarray(weights, dtype=np.float64)
        _require_positive_finite(raw)
        mean = _blocks.ordered_mean(raw)
        w = raw / mean
        w.flags.writeable = False
        phi = None if phi_star is None else np.asarray(phi_star, dtype=np.float64)
        linf = None
        if utility is not None and math.isfinite(utility.sup_deriv):
            linf = utility.sup_deriv / mean
        return cls(w, mean, raw.shape[0], int(k), linf, utility, phi)


def _require_positive_finite(raw: np.ndarray) -> None:
    finite = np.isfinite(raw)
    if not finite.all():
        n_bad = int(raw.size - np.count_nonzero(finite))
        raise ValueError(
            f"marginal utility is non-finite on {n_bad} of {raw.size} samples; "
            "no density can be formed from this optimum"
        )
    if not (raw > 0.0).all():
        n_bad = int(np.count_nonzero(raw <= 0.0))
        raise ValueError(
            f"marginal utility is <= 0 on {n_bad} of {raw.size} samples; the "
            "reweighted measure would not be equivalent to the sampling measure"
        )


def _weighted_column_stats(w: np.ndarray, J: np.ndarray, threads: int = 1):
    """Mean and SE of w * J_l for every column l, blockwise and ordered."""
    n, k = J.shape

    def worker(lo: int, hi: int):
        prod = J[lo:hi] * w[lo:hi, None]
        return prod.sum(axis=0), (prod * prod).sum(axis=0)

    parts = _blocks.map_blocks(worker, n, threads)
    means = _blocks.fsum_partials([p[0] for p in parts]) / n
    sq = _blocks.fsum_partials([p[1] for p in parts]) / n
    var = np.maximum(sq - means * means, 0.0)
    return means, np.sqrt(var / n)


def construct_density(phi_star, utility: UtilityFunction, pool: SamplePool,
                      reduced: ReducedParams, *, check_foc: bool = True,
                      grad_tol: float = 1e-6, threads: int = 1) -> DensityEstimate:
    """Weights u'(V_j(phi*)) normalized to unit mean on the pool.

    By default the point is required to satisfy the first-order
    conditions on this pool (up to `grad_tol` times u'(0) or Monte Carlo
    error, whichever is larger); a density built at a non-stationary
    point fails the martingale check by construction, so asking for one
    is almost always a mistake.  Pass check_foc=False to build it
    anyway, e.g. for negative controls.
    """
    if isinstance(phi_star, Strategy):
        strategy = phi_star
    else:
        strategy = Strategy.from_weights(np.asarray(phi_star, dtype=np.float64))
    if not strategy.support_is_finite or strategy.segment > pool.k:
        raise ValueError("phi_star support must fit inside the pool")
    v = value_samples(strategy, reduced, pool)
    raw = np.asarray(utility.deriv(v), dtype=np.float64)
    _require_positive_finite(raw)
    raw_mean = _blocks.ordered_mean(raw, threads)

    if check_foc:
        J = pool.centered(reduced)
        foc, foc_se = _weighted_column_stats(raw, J, threads)
        d0 = utility.deriv(0.0)
        scale = d0 if math.isfinite(d0) and d0 > 0.0 else 1.0
        bound = np.maximum(grad_tol * scale, 3.0 * foc_se)
        worst = int(np.argmax(np.abs(foc) - bound))
        if np.any(np.abs(foc) > bound):
            raise ValueError(
                f"phi_star fails the first-order check on this pool: "
                f"|g_{worst + 1}| = {abs(foc[worst]):.3e} exceeds "
                f"{bound[worst]:.3e}; pass check_foc=False to override"
            )

    w = raw / raw_mean
    w.flags.writeable = False
    linf = utility.sup_deriv / raw_mean if math.isfinite(utility.sup_deriv) else None
    return DensityEstimate(w, raw_mean, pool.n_samples, pool.k, linf,
                           utility, strategy.dense(pool.k))


@dataclass(frozen=True)
class VerificationReport:
    """Martingale residuals of a density on its pool."""

    residuals: np.ndarray
    residual_ses: np.ndarray
    index_lo: int
    index_hi: int
    tol: float
    direction_values: np.ndarray
    direction_ses: np.ndarray
    direction_seed: int
    passed_marginals: bool
    passed_directions: bool

    @property
    def passed(self) -> bool:
        return self.passed_marginals and self.passed_directions

    @property
    def worst_residual(self) -> float:
        return float(np.abs(self.residuals).max()) if self.residuals.size else 0.0

    def summary(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"risk-neutral check [{verdict}]: max |rho| = {self.worst_residual:.3e} "
                f"over indices {self.index_lo}..{self.index_hi}, "
                f"{self.direction_values.size} direction checks")


def verify_risk_neutral(density: DensityEstimate, pool: SamplePool,
                        reduced: ReducedParams, index_range=None, *,
                        tol: float = 1e-3, n_directions: int = 10,
                        direction_seed: int = 0,
                        threads: int = 1) -> VerificationReport:
    """Check E_Q[eps_i] = b_i per index plus E_Q[V(phi)] = 0 in random directions.

    Residuals rho_i are weighted means of the centered shocks; the
    verdict is pass when every |rho_i| <= max(tol, 3 SE_i) and every
    direction value is zero to the same standard.  Directions are unit
    vectors drawn from a dedicated seeded generator so reports are
    reproducible.
    """
    if density.n_samples != pool.n_samples:
        raise ValueError("density was not built on a pool of this size")
    if index_range is None:
        lo, hi = 1, pool.k
    else:
        lo, hi = int(index_range[0]), int(index_range[1])
        if not (1 <= lo <= hi <= pool.k):
            raise ValueError(f"index_range must satisfy 1 <= lo <= hi <= {pool.k}")
    J = pool.centered(reduced)[:, lo - 1:hi]
    w = density.weights
    residuals, ses = _weighted_column_stats(w, J, threads)
    passed_marginals = bool(np.all(np.abs(residuals) <= np.maximum(tol, 3.0 * ses)))

    rng = np.random.default_rng(direction_seed)
    dvals = np.empty(n_directions)
    dses = np.empty(n_directions)
    ok = True
    for t in range(n_directions):
        direction = rng.standard_normal(hi - lo + 1)
        direction /= np.linalg.norm(direction)
        per_sample = (J @ direction) * w
        dvals[t], dses[t] = _blocks.mean_and_se(per_sample, threads)
        ok = ok and abs(dvals[t]) <= max(tol, 3.0 * dses[t])

    return VerificationReport(residuals, ses, lo, hi, tol, dvals, dses,
                              direction_seed, passed_marginals, bool(ok))


@dataclass(frozen=True)
class MomentReport:
    """Empirical dQ/dP and dP/dQ moments with any analytic prediction."""

    p_grid: tuple[float, ...]
    dq_dp_moments: tuple[float, ...]
    dp_dq_moments: tuple[float, ...]
    max_weight: float
    min_weight: float
    linf_bound: float | None
    predicted_dp_dq_exponent: float | None
    caveat: str


def _predicted_exponent(utility: UtilityFunction | None) -> float | None:
    # V(phi*) has two moments, so dP/dQ ~ (1+V)^q lands in L^(2/q):
    # q = 1 - kappa for the kappa family, q = 1 + eps for the bounded one.
    if utility is None:
        return None
    if utility.kind == "proof_un":
        return 2.0 / (1.0 - float(utility.params["kappa"]))
    if utility.kind == "proof_u1":
        return 2.0 / (1.0 + float(utility.params["eps"]))
    return None


def density_moment_report(density: DensityEstimate,
                          p_list=(1.0, 2.0, 4.0)) -> MomentReport:
    """Table of mean(w^p) and mean(w^-p) over the pool.

    Finite sample moments are evidence, not proof, of integrability;
    the caveat field says which kind each entry is.
    """
    ps = tuple(float(p) for p in p_list)
    if any(p <= 0.0 for p in ps):
        raise ValueError("moment exponents must be positive")
    w = density.weights
    log_w = np.log(w)
    dq = tuple(float(np.exp(p * log_w).mean()) for p in ps)
    dp = tuple(float(np.exp(-p * log_w).mean()) for p in ps)
    predicted = _predicted_exponent(density.utility)
    if predicted is not None:
        caveat = (f"dP/dQ is predicted integrable up to exponent "
                  f"{predicted:.6g} by the growth of 1/u'; sample moments "
                  "corroborate but cannot certify it")
    elif density.linf_bound is not None:
        caveat = ("dQ/dP is certified bounded by sup u' / mean u'; dP/dQ "
                  "moments are empirical evidence only")
    else:
        caveat = "empirical evidence only: no analytic moment data for this source"
    return MomentReport(ps, dq, dp, density.max_weight, density.min_weight,
                        density.linf_bound, predicted, caveat)


@dataclass(frozen=True)
class PSchedule:
    """Exponent ladder p_1=2, p_{j+1} = 2 p_j + 2 and its kappa sequence."""

    ps: tuple[int, ...]
    alpha_ceilings: tuple[float, ...]
    kappas: tuple[float, ...]
    eps: float


def p_schedule(n: int, eps: float = 0.05) -> PSchedule:
    """First n rungs of the ladder; kappa_j = p_j/(p_j+1) - eps.

    eps must lie in (0, 2/3) so that every kappa_j is a valid exponent
    in (0, 1).
    """
    if n < 1:
        raise ValueError("schedule length must be at least 1")
    if not (0.0 < eps < 2.0 / 3.0):
        raise ValueError("eps must lie in (0, 2/3) to keep every kappa in (0, 1)")
    ps = [2]
    for _ in range(n - 1):
        ps.append(2 * ps[-1] + 2)
    ceilings = tuple(p / (p + 1) for p in ps)
    kappas = tuple(c - eps for c in ceilings)
    return PSchedule(tuple(ps), ceilings, kappas, eps)


class StageError(RuntimeError):
    """A stage of the recursive build failed its optimization or verification."""

    def __init__(self, stage: int, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class StageResult:
    stage: int
    kappa: float
    utility_label: str
    phi_star: np.ndarray
    value: float
    status: str
    density: DensityEstimate
    verification: VerificationReport
    moments: MomentReport


@dataclass(frozen=True)
class CertificationResult:
    """Final solvability certificate at the target growth exponent."""

    target_alpha: float
    utility_label: str
    status: str
    value: float
    phi_star: np.ndarray
    moments: MomentReport


@dataclass(frozen=True)
class RecursiveBuildReport:
    schedule: PSchedule
    stages: tuple[StageResult, ...]
    certification: CertificationResult

    @property
    def n_stages(self) -> int:
        return len(self.stages)


def stages_needed(target_alpha: float) -> int:
    """Minimal n with p_n/(p_n+1) > target_alpha."""
    if not (0.0 < target_alpha < 1.0):
        raise ValueError("target_alpha must lie strictly between 0 and 1")
    p, n = 2, 1
    while p / (p + 1) <= target_alpha:
        p, n = 2 * p + 2, n + 1
        if n > 60:  # p grows like 2^n; unreachable for any float target < 1
            raise RuntimeError("schedule failed to clear target_alpha")
    return n


def recursive_density_builder(reduced: ReducedParams, family: ShockFamily,
                              target_alpha: float, eps: float = 0.05, *,
                              k: int, n_samples: int, seed: int,
                              threads: int = 1, grad_tol: float = 1e-6,
                              residual_tol: float = 1e-3, max_iter: int = 200,
                              check_assumption: bool = True) -> RecursiveBuildReport:
    """Bootstrap a density for growth exponent target_alpha in stages.

    Stage j solves the segment problem for the kappa_j proof utility,
    builds and verifies its density, and hands its optimum to the next
    stage as a warm start.  All stages share one pool, so stage results
    are comparable path by path.  After the last scheduled stage the
    target problem itself (growth exponent target_alpha) is solved once
    more as the solvability certificate, carrying the final stage's
    moment report.

    Markets with a diverging or unknown shock-ratio tail are refused, as
    are shock families that fail the relevance screen.
    """
    n_stages = stages_needed(target_alpha)
    schedule = p_schedule(n_stages, eps)
    tail_total = reduced.tail_sum_sq(k)
    if tail_total is None:
        raise ValueError(
            "the squared-ratio tail of b is unknown; the recursive build "
            "needs a summable tail certificate"
        )
    if not math.isfinite(reduced.sharpe_partial(k) + tail_total):
        raise ValueError("sum of b_i^2 diverges: no equivalent risk-neutral density exists")
    if check_assumption:
        screen = check_assumption_relevant(family)
        if screen.verdict == "violated":
            raise ValueError(
                f"shock family {family.label()} fails the relevance screen: "
                + "; ".join(screen.reasons)
            )

    pool = build_pool(family, k, n_samples, seed)
    stages: list[StageResult] = []
    warm: np.ndarray | None = None
    for j, kappa in enumerate(schedule.kappas, start=1):
        utility = make_proof_un(kappa)
        problem = OptimizationProblem(
            reduced=reduced, family=family, utility=utility, k=k,
            n_samples=n_samples, seed=seed, grad_tol=grad_tol,
            max_iter=max_iter, threads=threads, initial=warm,
        )
        result = maximize_segment(problem, pool)
        if result.status != "converged":
            raise StageError(j, f"optimizer status {result.status} "
                                f"(max residual {result.max_residual:.3e})")
        try:
            density = construct_density(result.phi_star, utility, pool, reduced,
                                        grad_tol=grad_tol, threads=threads)
        except ValueError as exc:
            raise StageError(j, str(exc)) from exc
        verification = verify_risk_neutral(density, pool, reduced,
                                           tol=residual_tol, threads=threads)
        if not verification.passed:
            raise StageError(j, verification.summary())
        stages.append(StageResult(j, kappa, utility.label(), result.phi_star,
                                  result.value, result.status, density,
                                  verification, density_moment_report(density)))
        warm = result.phi_star

    target_utility = make_proof_un(target_alpha)
    target_problem = OptimizationProblem(
        reduced=reduced, family=family, utility=target_utility, k=k,
        n_samples=n_samples, seed=seed, grad_tol=grad_tol,
        max_iter=max_iter, threads=threads, initial=warm,
    )
    target_result = maximize_segment(target_problem, pool)
    if target_result.status != "converged":
        raise StageError(n_stages + 1,
                         f"certification solve status {target_result.status}")
    certification = CertificationResult(
        target_alpha, target_utility.label(), target_result.status,
        target_result.value, target_result.phi_star, stages[-1].moments,
    )
    return RecursiveBuildReport(schedule, tuple(stages), certification)


def result_density(result: OptimizationResult, *, check_foc: bool = True,
                   threads: int = 1) -> DensityEstimate:
    """Density straight from a solved segment problem (pool reused)."""
    return construct_density(result.phi_star, result.problem.utility,
                             result.pool, result.problem.reduced,
                             check_foc=check_foc,
                             grad_tol=result.problem.grad_tol, threads=threads)
