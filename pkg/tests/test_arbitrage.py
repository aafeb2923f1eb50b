"""Arbitrage construction, the two-point counterexamples, and the CLT check."""
import json
import math

import numpy as np
import pytest
from scipy.special import ndtr

from apmlab import shocks
from apmlab.arbitrage import (arbitrage_strategy,
                              asymptotic_arbitrage_construct,
                              clt_normalized_check, closedness_failure_demo,
                              free_lunch_demo_aba)
from apmlab.market import ReducedParams
from apmlab.sequences import TailRule
from apmlab.valuation import value_moments

UNIT_B = ReducedParams.from_b([1.0], tail=TailRule(kind="constant", coeff=1.0))
GEOMETRIC_B = ReducedParams.from_b(
    [0.5], tail=TailRule(kind="geometric", coeff=1.0, ratio=0.5))


class TestConstruction:
    def test_moments_exact_at_powers_of_sixteen(self):
        # With every b_i = 1 the running Sharpe sum is k.  At k = 16^j all
        # quantities are dyadic, so the identities EV = S_k^(1/4) and
        # var = S_k^(-1/2) hold to the last bit, not merely to tolerance.
        for j in (1, 2, 3):
            k = 16 ** j
            moments = value_moments(arbitrage_strategy(UNIT_B, k), UNIT_B)
            assert moments.mean == 2.0 ** j
            assert moments.variance == 2.0 ** (-2 * j)

    def test_moments_at_general_k(self):
        for k in (7, 100, 1234):
            moments = value_moments(arbitrage_strategy(UNIT_B, k), UNIT_B)
            assert moments.mean == pytest.approx(k ** 0.25, rel=1e-12)
            assert moments.variance == pytest.approx(k ** -0.5, rel=1e-12)

    def test_report_rows_match_direct_moments(self):
        report = asymptotic_arbitrage_construct(UNIT_B, [16, 256, 4096])
        assert report.verdict == "diverging"
        assert report.k0 == 16
        for row, j in zip(report.rows, (1, 2, 3)):
            assert row.k == 16 ** j
            assert row.sharpe_partial == float(16 ** j)
            assert row.expected_value == 2.0 ** j
            assert row.variance == 2.0 ** (-2 * j)
        assert "diverges" in report.note

    def test_summable_market_reports_no_arbitrage(self):
        report = asymptotic_arbitrage_construct(GEOMETRIC_B, [5, 10, 20])
        assert report.verdict == "summable"
        assert report.total == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert report.rows is None and report.k0 is None
        assert "no asymptotic arbitrage" in report.note

    def test_prefix_only_market_is_inconclusive(self):
        report = asymptotic_arbitrage_construct(
            ReducedParams.from_b([0.3, 0.2], tail=None), [1, 2])
        assert report.verdict == "inconclusive"
        assert report.total is None and report.rows is None
        assert "tail rule" in report.note

    def test_zero_prefix_has_no_direction(self):
        flat = ReducedParams.from_b([0.0, 0.0],
                                    tail=TailRule(kind="constant", coeff=1.0))
        with pytest.raises(ValueError, match="no direction"):
            arbitrage_strategy(flat, 2)
        report = asymptotic_arbitrage_construct(flat, [1, 2, 3])
        assert report.verdict == "diverging"
        assert report.k0 == 3
        assert report.rows[0].k == 3


@pytest.fixture(scope="module")
def free_lunch_oracle(fixtures_dir):
    with open(fixtures_dir / "oracle_free_lunch.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def free_lunch_report(free_lunch_oracle):
    run = free_lunch_oracle["test_run"]
    return free_lunch_demo_aba(run["k_grid"], run["seed"], run["n_paths"],
                               threshold=free_lunch_oracle["threshold"])


@pytest.fixture(scope="module")
def closedness_oracle(fixtures_dir):
    with open(fixtures_dir / "oracle_closedness.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def closedness_report(closedness_oracle):
    return closedness_failure_demo(closedness_oracle["k_grid"],
                                   closedness_oracle["seed"],
                                   closedness_oracle["n_paths"])


class TestFreeLunchDemo:
    @pytest.fixture
    def oracle(self, free_lunch_oracle):
        return free_lunch_oracle

    @pytest.fixture
    def report(self, free_lunch_report):
        return free_lunch_report

    def test_fractions_match_frozen_run(self, report, oracle):
        assert list(report.fraction_above) == oracle["test_run"]["expected_fractions"]
        assert report.final_fraction >= oracle["pre_registered"]["bound"]

    def test_fraction_grows_along_grid(self, report):
        assert report.fraction_above[0] == 0.0
        for a, b in zip(report.fraction_above, report.fraction_above[1:]):
            assert b > a

    def test_q01_matches_frozen_run_and_stabilizes(self, report, oracle):
        run = oracle["test_run"]
        q01 = report.quantiles[:, report.q_levels.index(0.01)]
        np.testing.assert_array_equal(q01, run["expected_q01"])
        j0 = report.k_grid.index(run["stabilization_k"])
        for a, b in zip(q01[j0:], q01[j0 + 1:]):
            assert b >= a

    def test_median_marches_upward(self, report):
        med = report.quantiles[:, report.q_levels.index(0.50)]
        assert list(med) == sorted(med)
        assert med[-1] > report.threshold

    def test_threads_do_not_change_results(self):
        a = free_lunch_demo_aba([50, 100], seed=3, n_paths=200)
        b = free_lunch_demo_aba([50, 100], seed=3, n_paths=200, threads=4)
        np.testing.assert_array_equal(a.quantiles, b.quantiles)
        assert a.fraction_above == b.fraction_above

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="ascending"):
            free_lunch_demo_aba([100, 100], seed=1, n_paths=10)
        with pytest.raises(ValueError, match="ascending"):
            free_lunch_demo_aba([1, 50], seed=1, n_paths=10)
        with pytest.raises(ValueError, match="path"):
            free_lunch_demo_aba([10, 50], seed=1, n_paths=0)


class TestClosednessDemo:
    @pytest.fixture
    def oracle(self, closedness_oracle):
        return closedness_oracle

    @pytest.fixture
    def report(self, closedness_report):
        return closedness_report

    def test_medians_match_frozen_run(self, report, oracle):
        assert list(report.medians) == oracle["expected_medians"]
        # The frozen medians sit on the principal atom trajectory (paths
        # that never saw a down move); the atoms were computed separately
        # with exact summation, so agreement is to rounding, not bitwise.
        np.testing.assert_allclose(report.medians, oracle["atom_values"],
                                   rtol=0.0, atol=1e-9)

    def test_medians_approach_one(self, report, oracle):
        lo, hi = oracle["band"]
        dist = report.distance_to_one
        for a, b in zip(dist, dist[1:]):
            assert b < a
        assert all(lo <= m <= hi for m in report.medians)

    def test_variance_explodes_while_paths_settle(self, report):
        var = report.analytic_variance
        for k, v in zip(report.k_grid, var):
            assert v == pytest.approx((k - 1) / math.log(k) ** 2)
        for a, b in zip(var, var[1:]):
            assert b > a
        assert var[-1] > 5e3

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError, match="ln"):
            closedness_failure_demo([2, 10], seed=1, n_paths=5)


class TestCLTCheck:
    ZERO_B = ReducedParams.from_b([0.0], tail=TailRule(kind="zero"))

    def test_rademacher_equal_weights(self):
        report = clt_normalized_check("equal", [100, 1000, 10000], self.ZERO_B,
                                      shocks.rademacher(), n_samples=20_000,
                                      seed=5)
        assert report.ks_band == pytest.approx(2.0 / math.sqrt(20_000))
        for row in report.rows:
            assert row.drift == 0.0
            assert row.gaussian_f == 0.5
            assert abs(row.p_negative - 0.5) <= 0.02
        # Coin sums live on a lattice of spacing 2/sqrt(n), so the distance
        # to the Gaussian shrinks as n grows and only the fine-lattice end
        # of the grid is genuinely close.
        assert report.ks_nonincreasing
        assert report.rows[-1].ks_statistic <= 0.02
        assert report.rows[0].max_coordinate == pytest.approx(0.1)
        assert report.family_label == "rademacher"

    def test_gaussian_weights_are_exactly_normal(self):
        # Equal weights on standard Gaussians give exactly N(0, 1), so the
        # KS statistic is pure sampling noise at every n.
        report = clt_normalized_check("equal", [10, 100], self.ZERO_B,
                                      shocks.gaussian(), n_samples=20_000,
                                      seed=6)
        for row in report.rows:
            assert row.ks_statistic <= 0.015

    def test_settling_drift_is_accepted(self):
        report = clt_normalized_check("equal", [100, 1000], GEOMETRIC_B,
                                      shocks.gaussian(), n_samples=10_000,
                                      seed=7)
        for row in report.rows:
            assert 0.0 < row.drift < 0.2
            assert row.gaussian_f == pytest.approx(float(ndtr(row.drift)))
            assert abs(row.p_negative - row.gaussian_f) < 0.03

    def test_non_vanishing_coordinates_rejected(self):
        spike = lambda n: np.eye(n)[0]
        with pytest.raises(ValueError, match="vanish"):
            clt_normalized_check(spike, [10, 100], self.ZERO_B,
                                 shocks.gaussian(), n_samples=100, seed=1)

    def test_growing_drift_rejected(self):
        with pytest.raises(ValueError, match="no finite limit"):
            clt_normalized_check("equal", [100, 400, 1600, 6400], UNIT_B,
                                 shocks.gaussian(), n_samples=100, seed=1)

    def test_huge_drift_rejected(self):
        # Two grid points cannot show growth, but |d| > 1e3 still trips.
        big = ReducedParams.from_b([2e3],
                                   tail=TailRule(kind="constant", coeff=2e3))
        with pytest.raises(ValueError, match="no finite limit"):
            clt_normalized_check(lambda n: np.eye(n)[0] if n < 2 else
                                 np.full(n, n ** -0.5),
                                 [4, 16], big, shocks.gaussian(),
                                 n_samples=100, seed=1)

    def test_rule_output_validation(self):
        short = lambda n: np.full(n - 1, (n - 1) ** -0.5)
        with pytest.raises(ValueError, match="length"):
            clt_normalized_check(short, [10, 20], self.ZERO_B,
                                 shocks.gaussian(), n_samples=100, seed=1)
        unnormalized = lambda n: np.full(n, 1.0)
        with pytest.raises(ValueError, match="norm"):
            clt_normalized_check(unnormalized, [10, 20], self.ZERO_B,
                                 shocks.gaussian(), n_samples=100, seed=1)
        with pytest.raises(ValueError, match="ascending"):
            clt_normalized_check("equal", [100, 10], self.ZERO_B,
                                 shocks.gaussian(), n_samples=100, seed=1)
