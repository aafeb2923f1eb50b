"""Segment maximization: closed-form agreement, statuses, and sweeps."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apmlab import shocks
from apmlab.market import ReducedParams, Strategy
from apmlab.optimizer import (OptimizationProblem, UnboundedObjectiveError,
                              maximize_segment, objective_and_gradient,
                              pool_escalation_report, segment_sweep,
                              truncation_gap)
from apmlab.sequences import TailRule
from apmlab.utility import (exponential_bounded, from_callables,
                            make_proof_u1, make_proof_un, piecewise_linear,
                            power_moderate)
from apmlab.valuation import build_pool

B3 = [0.3, -0.2, 0.1]


def gaussian_problem(**overrides) -> OptimizationProblem:
    kwargs = dict(
        reduced=ReducedParams.from_b(B3),
        family=shocks.gaussian(),
        utility=exponential_bounded(),
        k=3,
        n_samples=40_000,
        seed=101,
    )
    kwargs.update(overrides)
    return OptimizationProblem(**kwargs)


def closed_form_value(s_k: float) -> float:
    return 1.0 - math.exp(-0.5 * s_k)


class TestObjectiveAndGradient:
    def test_gradient_matches_analytic_at_zero(self, gaussian_pool_small):
        # At phi = 0 the exponential-Gaussian gradient is exactly -b.
        pool = gaussian_pool_small.restrict(3)
        reduced = ReducedParams.from_b(B3)
        stats = objective_and_gradient(np.zeros(3), exponential_bounded(),
                                       pool, reduced)
        assert stats.value == 0.0
        for l in range(3):
            assert abs(stats.grad[l] + B3[l]) < 4 * stats.grad_se[l]

    def test_gradient_matches_analytic_off_origin(self, gaussian_pool_small):
        # d/dphi of 1 - exp(phi b + phi^2/2) is -(b + phi) exp(...).
        pool = gaussian_pool_small.restrict(1)
        reduced = ReducedParams.from_b([0.3])
        for phi0 in (-0.6, 0.2, 0.5):
            stats = objective_and_gradient(np.array([phi0]), exponential_bounded(),
                                           pool, reduced)
            want = -(0.3 + phi0) * math.exp(0.3 * phi0 + 0.5 * phi0 * phi0)
            assert abs(stats.grad[0] - want) < 5 * stats.grad_se[0]

    def test_accepts_strategy_or_dense_vector(self, gaussian_pool_small):
        pool = gaussian_pool_small.restrict(3)
        reduced = ReducedParams.from_b(B3)
        phi = np.array([0.1, -0.2, 0.05])
        a = objective_and_gradient(phi, exponential_bounded(), pool, reduced)
        b = objective_and_gradient(Strategy.from_weights(phi),
                                   exponential_bounded(), pool, reduced)
        assert a.value == b.value
        np.testing.assert_array_equal(a.grad, b.grad)

    def test_overflow_aborts_loudly(self, gaussian_pool_small):
        pool = gaussian_pool_small.restrict(1)
        reduced = ReducedParams.from_b([0.0])
        with pytest.raises(OverflowError, match="overflow"):
            objective_and_gradient(np.array([1e6]), exponential_bounded(),
                                   pool, reduced)

    def test_thread_count_does_not_change_bits(self, gaussian_pool_small):
        pool = gaussian_pool_small.restrict(3)
        reduced = ReducedParams.from_b(B3)
        phi = np.array([0.2, -0.1, 0.3])
        one = objective_and_gradient(phi, exponential_bounded(), pool, reduced,
                                     threads=1)
        many = objective_and_gradient(phi, exponential_bounded(), pool, reduced,
                                      threads=8)
        assert one.value == many.value
        np.testing.assert_array_equal(one.grad, many.grad)


class TestFiniteDifferenceProperty:
    POOL = build_pool(shocks.gaussian(), k=4, n=3000, seed=55)
    REDUCED = ReducedParams.from_b([0.2, -0.1, 0.15, 0.05])
    UTILITIES = [exponential_bounded(), make_proof_un(0.6), make_proof_u1(0.1)]

    @settings(max_examples=100, deadline=None)
    @given(which=st.integers(0, 2),
           phi=st.lists(st.floats(-0.8, 0.8, allow_nan=False),
                        min_size=4, max_size=4))
    def test_gradient_against_central_difference(self, which, phi):
        u = self.UTILITIES[which]
        phi = np.asarray(phi)
        stats = objective_and_gradient(phi, u, self.POOL, self.REDUCED)
        h = 1e-5
        for l in range(4):
            step = np.zeros(4)
            step[l] = h
            up = objective_and_gradient(phi + step, u, self.POOL, self.REDUCED)
            dn = objective_and_gradient(phi - step, u, self.POOL, self.REDUCED)
            fd = (up.value - dn.value) / (2 * h)
            assert stats.grad[l] == pytest.approx(fd, rel=2e-4, abs=2e-6)


class TestConcavityProperty:
    POOL = build_pool(shocks.student_t(6), k=4, n=2000, seed=66)
    REDUCED = ReducedParams.from_b([0.2, -0.1, 0.15, 0.05])

    @settings(max_examples=100, deadline=None)
    @given(a=st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=4, max_size=4),
           b=st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=4, max_size=4),
           lam=st.floats(0.0, 1.0, allow_nan=False))
    def test_frozen_pool_objective_is_concave(self, a, b, lam):
        u = make_proof_un(0.5)
        a, b = np.asarray(a), np.asarray(b)
        mid = lam * a + (1 - lam) * b
        f = lambda p: objective_and_gradient(p, u, self.POOL, self.REDUCED).value
        assert f(mid) >= lam * f(a) + (1 - lam) * f(b) - 1e-9


class TestMaximizeSegment:
    def test_gaussian_closed_form(self):
        result = maximize_segment(gaussian_problem())
        assert result.status == "converged"
        s3 = 0.14
        assert np.linalg.norm(result.phi_star + np.asarray(B3)) < 2e-2
        assert abs(result.value - closed_form_value(s3)) < 3 * result.value_se
        assert result.foc_pass()
        assert result.max_residual < 1e-6

    def test_deterministic_across_threads_and_reruns(self):
        a = maximize_segment(gaussian_problem())
        b = maximize_segment(gaussian_problem())
        c = maximize_segment(gaussian_problem(threads=6))
        np.testing.assert_array_equal(a.phi_star, b.phi_star)
        np.testing.assert_array_equal(a.phi_star, c.phi_star)
        assert a.value == c.value

    def test_warm_start_from_solution_converges_immediately(self):
        first = maximize_segment(gaussian_problem())
        again = maximize_segment(gaussian_problem(initial=first.phi_star))
        assert again.status == "converged"
        assert again.iterations <= 2

    def test_zero_b_optimum_is_origin(self):
        result = maximize_segment(gaussian_problem(
            reduced=ReducedParams.from_b([0.0, 0.0, 0.0])))
        assert result.status == "converged"
        assert np.linalg.norm(result.phi_star) < 2e-2

    def test_proof_utilities_converge(self):
        for u in (make_proof_un(0.6), make_proof_u1(0.1)):
            result = maximize_segment(gaussian_problem(utility=u))
            assert result.status == "converged", u.label()
            assert result.foc_pass()

    def test_tiny_radius_flags_divergence(self):
        result = maximize_segment(gaussian_problem(radius=1e-4))
        assert result.status == "diverging-objective"

    def test_max_iter_status(self):
        result = maximize_segment(gaussian_problem(
            max_iter=1, grad_tol=1e-13, n_samples=30_000))
        assert result.status in ("max-iter", "converged")
        strict = maximize_segment(gaussian_problem(
            max_iter=1, grad_tol=1e-13, n_samples=30_000,
            reduced=ReducedParams.from_b([2.0, -1.5, 1.0])))
        assert strict.status == "max-iter"

    def test_trace_records_progress(self):
        result = maximize_segment(gaussian_problem())
        assert len(result.trace) == result.iterations
        assert [t[0] for t in result.trace] == list(range(1, result.iterations + 1))
        values = [t[1] for t in result.trace]
        assert values[-1] >= values[0]


class TestRefusals:
    def test_affine_utility_refused(self):
        with pytest.raises(UnboundedObjectiveError, match="affine"):
            gaussian_problem(utility=piecewise_linear([], [1.0]))

    def test_unbounded_without_certificate_refused(self):
        sneaky = from_callables(
            "sqrtish", lambda x: np.sign(x) * np.sqrt(np.abs(np.asarray(x, dtype=float))),
            lambda x: 0.5 / np.sqrt(np.abs(np.asarray(x, dtype=float)) + 1e-12),
            bounded_above=False, sup_deriv=math.inf, growth=None)
        with pytest.raises(UnboundedObjectiveError, match="certificate"):
            gaussian_problem(utility=sneaky)

    def test_superlinear_growth_refused(self):
        hot = from_callables(
            "linear_gains", lambda x: np.asarray(x, dtype=float) * 1.0,
            lambda x: np.ones_like(np.asarray(x, dtype=float)),
            bounded_above=False, sup_deriv=1.0, growth=(1.0, 1.0))
        with pytest.raises(UnboundedObjectiveError, match="not < 1"):
            gaussian_problem(utility=hot)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            gaussian_problem(k=0)
        with pytest.raises(ValueError):
            gaussian_problem(n_samples=1)
        with pytest.raises(ValueError):
            gaussian_problem(initial=np.zeros(5))


class TestSweep:
    def test_values_track_closed_form(self):
        problem = gaussian_problem(n_samples=20_000)
        report, results = segment_sweep(problem, [1, 2, 3])
        assert len(results) == 3
        for row, k in zip(report.rows, [1, 2, 3]):
            s_k = math.fsum(b * b for b in B3[:k])
            assert abs(row.value - closed_form_value(s_k)) < 4 * row.value_se
        # First row measures movement away from the cold start at the origin.
        assert report.rows[0].distance_from_prev == pytest.approx(
            np.linalg.norm(results[0].phi_star))

    def test_values_nondecreasing_within_noise(self):
        problem = gaussian_problem(n_samples=20_000)
        report, _ = segment_sweep(problem, [1, 2, 3])
        for prev, nxt in zip(report.rows, report.rows[1:]):
            band = 3.0 * math.hypot(prev.value_se, nxt.value_se)
            assert nxt.value >= prev.value - band

    def test_grid_validation(self):
        problem = gaussian_problem()
        with pytest.raises(ValueError, match="ascending"):
            segment_sweep(problem, [2, 1, 3])
        with pytest.raises(ValueError, match="largest"):
            segment_sweep(problem, [1, 2])


class TestTruncationGap:
    def test_gaps_nonnegative_and_shrinking(self):
        tail = TailRule(kind="geometric", coeff=1.0, ratio=0.5)
        problem = gaussian_problem(
            reduced=ReducedParams.from_b(
                [0.5 ** i for i in range(1, 21)], tail),
            k=20, n_samples=30_000, seed=7)
        result = maximize_segment(problem)
        assert result.status == "converged"
        report = truncation_gap(result, [5, 10, 15])
        gaps = [r.gap for r in report.rows]
        ses = [r.gap_se for r in report.rows]
        for g, se in zip(gaps, ses):
            assert g >= -3 * se
        # Oracle: gap(n) ~ e^{-S_n/2} - e^{-S_20/2}, shrinking 4^5-fold per step.
        s = lambda n: (1.0 / 3.0) * (1.0 - 4.0 ** (-n))
        for n, g, se in zip([5, 10, 15], gaps, ses):
            want = math.exp(-0.5 * s(n)) - math.exp(-0.5 * s(20))
            assert abs(g - want) < max(3 * se, 1e-6)

    def test_out_of_range_rejected(self):
        result = maximize_segment(gaussian_problem())
        with pytest.raises(ValueError):
            truncation_gap(result, [4])


class TestEscalation:
    def test_se_shrinks_with_pool_size(self):
        problem = gaussian_problem(n_samples=4_000)
        rows = pool_escalation_report(problem, factors=(1, 4, 16))
        assert [r.n_samples for r in rows] == [4_000, 16_000, 64_000]
        # Quadrupling samples should roughly halve the SE.
        assert rows[1].value_se < 0.75 * rows[0].value_se
        assert rows[2].value_se < 0.75 * rows[1].value_se
        assert rows[-1].phi_distance_to_largest == 0.0

    def test_bad_factors(self):
        with pytest.raises(ValueError):
            pool_escalation_report(gaussian_problem(), factors=(0, 2))
