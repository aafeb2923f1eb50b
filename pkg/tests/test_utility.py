"""Utility families: certificates, conjugates, and concavity properties."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apmlab.utility import (ConstantUtilityError, check_concave_nondecreasing,
                            check_growth_certificate, check_loss_domination,
                            exponential_bounded, from_callables,
                            lena_constants, make_proof_u1, make_proof_un,
                            piecewise_linear, power_moderate, young_pair)

ALL_MAKERS = [
    ("proof_u1", lambda: make_proof_u1(0.05)),
    ("proof_un", lambda: make_proof_un(0.6)),
    ("exponential", exponential_bounded),
    ("power", lambda: power_moderate(2.3, 1.0, 0.4)),
    ("power_pure_loss", lambda: power_moderate(3.0, 0.7)),
    ("polyline", lambda: piecewise_linear([-1.0, 1.0], [3.0, 1.0, 0.5])),
]


@pytest.mark.parametrize("name,maker", ALL_MAKERS)
class TestEveryFamily:
    def test_normalized_at_zero(self, name, maker):
        u = maker()
        assert u(0.0) == 0.0

    def test_concave_nondecreasing_on_grid(self, name, maker):
        ok, worst = check_concave_nondecreasing(maker())
        assert ok, f"{name}: violation {worst}"

    def test_derivative_matches_finite_difference(self, name, maker):
        u = maker()
        h = 1e-6
        xs = np.array([-5.0, -0.7, 0.3, 2.0, 40.0])  # clear of any kinks
        fd = (u(xs + h) - u(xs - h)) / (2 * h)
        np.testing.assert_allclose(u.deriv(xs), fd, rtol=5e-5, atol=5e-6)

    def test_loss_domination_constants_hold(self, name, maker):
        u = maker()
        c, big_c = lena_constants(u)
        assert c > 0
        ok, worst = check_loss_domination(u, c, big_c)
        assert ok, f"{name}: u(x) + c|x| - C reaches {worst}"


class TestProofFamilies:
    def test_u1_branches(self):
        eps = 0.05
        u = make_proof_u1(eps)
        # Raw form: eps*x - 1 on losses, -(1+x)^-eps on gains; the
        # instance is shifted so u(0) = 0.
        assert u.raw(-2.0) == pytest.approx(eps * -2.0 - 1.0)
        assert u.raw(3.0) == pytest.approx(-((4.0) ** -eps))
        assert u(5.0) == pytest.approx(1.0 - 6.0**-eps)
        assert u.sup_deriv == eps
        assert u.bounded_above
        assert u.deriv(-10.0) == eps
        assert u.deriv(0.5) < eps

    def test_un_branches_and_growth(self):
        kappa = 0.6
        u = make_proof_un(kappa)
        assert u.raw(-3.0) == pytest.approx(kappa * -3.0 + 1.0)
        assert u.raw(2.0) == pytest.approx(3.0**kappa)
        assert not u.bounded_above
        c1, alpha = u.growth
        assert alpha == kappa
        ok, _ = check_growth_certificate(u)
        assert ok

    def test_parameter_ranges(self):
        for bad in (0.0, 1.0, -0.3, 2.0):
            with pytest.raises(ValueError):
                make_proof_u1(bad)
            with pytest.raises(ValueError):
                make_proof_un(bad)


class TestExponential:
    def test_closed_form(self):
        u = exponential_bounded()
        xs = np.array([-2.0, 0.0, 1.5])
        np.testing.assert_allclose(u(xs), 1.0 - np.exp(-xs), rtol=1e-15)
        np.testing.assert_allclose(u.deriv(xs), np.exp(-xs), rtol=1e-15)
        assert u.bounded_above and u.sup_value == 1.0
        assert u.strictly_concave


class TestPowerModerate:
    def test_pure_loss_form(self):
        u = power_moderate(2.0, 1.5)
        assert u(-2.0) == pytest.approx(-1.5 * 4.0)
        assert u(3.0) == 0.0  # gains branch collapses when alpha = 0
        assert u.bounded_above

    def test_mixed_form(self):
        u = power_moderate(2.5, 1.0, 0.3)
        assert u(-1.0) == pytest.approx(-0.3 - 1.0)
        assert u(1.0) == pytest.approx(2.0**0.3 - 1.0)
        assert not u.bounded_above

    def test_validation(self):
        with pytest.raises(ValueError):
            power_moderate(1.0, 1.0)
        with pytest.raises(ValueError):
            power_moderate(2.0, 0.0)
        with pytest.raises(ValueError):
            power_moderate(2.0, 1.0, alpha=1.0)


class TestPiecewiseLinear:
    def test_polyline_evaluation(self):
        u = piecewise_linear([-1.0, 2.0], [2.0, 1.0, 0.0])
        assert u(0.0) == 0.0
        assert u(-1.0) == pytest.approx(-1.0)
        assert u(-3.0) == pytest.approx(-1.0 - 2.0 * 2.0)
        assert u(2.0) == pytest.approx(2.0)
        assert u(10.0) == pytest.approx(2.0)  # flat outer piece
        assert u.bounded_above
        assert u.kinks == (-1.0, 2.0)

    def test_kink_derivative_averages_slopes(self):
        u = piecewise_linear([0.5], [2.0, 1.0])
        assert u.deriv(0.5) == 1.5
        assert u.deriv(0.49) == 2.0
        assert u.deriv(0.51) == 1.0

    def test_affine_detection(self):
        assert piecewise_linear([], [1.0]).is_affine
        assert piecewise_linear([0.0], [2.0, 2.0]).is_affine
        assert not piecewise_linear([0.0], [2.0, 1.0]).is_affine

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="one more slope"):
            piecewise_linear([0.0], [1.0])
        with pytest.raises(ValueError, match="nonincreasing"):
            piecewise_linear([0.0], [1.0, 2.0])
        with pytest.raises(ValueError, match="nonnegative"):
            piecewise_linear([0.0], [1.0, -0.5])
        with pytest.raises(ValueError, match="ascending"):
            piecewise_linear([1.0, 0.0], [3.0, 2.0, 1.0])


class TestLenaConstants:
    def test_flat_loss_branch_has_no_constants(self):
        flat = from_callables(
            "flat", lambda x: np.minimum(x, 0.0) * 0.0, lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            bounded_above=True, sup_deriv=0.0, sup_value=0.0)
        with pytest.raises(ConstantUtilityError):
            lena_constants(flat)


class TestYoungPair:
    def test_moderate_verdict_for_power_loss(self):
        pair = young_pair(power_moderate(2.3, 1.0, 0.4))
        assert pair.report.verdict == "moderate"
        assert pair.report.superlinear
        assert pair.report.phi_doubling
        assert pair.report.psi_doubling

    def test_exponential_loss_is_not_moderate(self):
        # Phi(x) = e^x - 1 doubles unboundedly; the report must say so.
        pair = young_pair(exponential_bounded())
        assert pair.report.verdict != "moderate"
        assert not pair.report.phi_doubling

    def test_conjugate_closed_form_for_quadratic(self):
        # Phi(x) = x^2 has conjugate Psi(y) = y^2/4.
        pair = young_pair(power_moderate(2.0, 1.0))
        for y in (0.5, 1.0, 3.0, 10.0):
            assert pair.psi(y) == pytest.approx(y * y / 4.0, rel=1e-6)

    def test_linear_loss_conjugate_is_indicator(self):
        # Phi(x) = c x has Psi(y) = 0 for y <= c and inf past it.
        pair = young_pair(make_proof_u1(0.05))
        assert pair.psi(0.04) == 0.0
        assert pair.psi(0.3) == math.inf

    def test_domain_validation(self):
        pair = young_pair(power_moderate(2.0, 1.0))
        with pytest.raises(ValueError):
            pair.phi(-1.0)
        with pytest.raises(ValueError):
            pair.psi(-1.0)


# ---------------------------------------------------------------------------
# Randomized property suites
# ---------------------------------------------------------------------------

PROPERTY_UTILITIES = [make_proof_u1(0.05), make_proof_un(0.6),
                      exponential_bounded(), power_moderate(2.3, 1.0, 0.4)]


class TestConcavityProperty:
    @settings(max_examples=100, deadline=None)
    @given(which=st.integers(0, len(PROPERTY_UTILITIES) - 1),
           x=st.floats(-50, 50, allow_nan=False),
           y=st.floats(-50, 50, allow_nan=False),
           lam=st.floats(0, 1, allow_nan=False))
    def test_chord_below_graph(self, which, x, y, lam):
        u = PROPERTY_UTILITIES[which]
        mid = u(lam * x + (1 - lam) * y)
        chord = lam * u(x) + (1 - lam) * u(y)
        scale = max(1.0, abs(u(x)), abs(u(y)))
        assert mid >= chord - 1e-9 * scale

    @settings(max_examples=100, deadline=None)
    @given(which=st.integers(0, len(PROPERTY_UTILITIES) - 1),
           x=st.floats(-50, 50, allow_nan=False),
           d=st.floats(1e-6, 10.0, allow_nan=False))
    def test_nondecreasing(self, which, x, d):
        u = PROPERTY_UTILITIES[which]
        assert u(x + d) >= u(x) - 1e-12


class TestFenchelYoungProperty:
    PAIR = young_pair(power_moderate(2.3, 1.0, 0.4))

    @settings(max_examples=100, deadline=None)
    @given(x=st.floats(0, 100, allow_nan=False),
           y=st.floats(0, 50, allow_nan=False))
    def test_phi_plus_psi_dominates_product(self, x, y):
        phi = self.PAIR.phi(x)
        psi = self.PAIR.psi(y)
        if math.isinf(psi):
            return
        assert phi + psi >= x * y - 1e-8 * max(1.0, phi, psi)

    @settings(max_examples=100, deadline=None)
    @given(x=st.floats(1e-3, 50.0, allow_nan=False))
    def test_equality_at_matched_slope(self, x):
        # Young's inequality is tight at y = Phi'(x).
        y = self.PAIR.phi_slope(x)
        phi, psi = self.PAIR.phi(x), self.PAIR.psi(y)
        if math.isinf(psi):
            return
        assert phi + psi == pytest.approx(x * y, rel=1e-4, abs=1e-6)
