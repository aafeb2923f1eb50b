"""Concave utility families and their growth/loss certificates.

Every utility here is concave, nondecreasing, and normalized to
u(0) = 0 at construction (the raw, unshifted formula stays reachable
through :meth:`UtilityFunction.raw`).  Three structural facts about a
utility drive the rest of the package, so each instance carries them as
data rather than leaving callers to rediscover them numerically:

* a *growth certificate* (C1, alpha): u(x) <= C1 (x**alpha + 1) for
  x >= 0 with alpha < 1, or boundedness above - one of the two is what
  the segment optimizer needs to rule out runaway objectives;
* the *loss domination constants* (c, C): u(x) <= -c|x| + C for x <= 0,
  produced constructively by :func:`lena_constants` for any nonconstant
  member - this is what makes expected utility finite exactly on the
  square-summable strategies;
* the derivative bound ``sup_deriv``, finite for the proof families,
  which later certifies that utility-gradient densities are bounded.

The catalog:

``proof_u1(eps)``
    eps*x - 1 on losses, -(1+x)**(-eps) on gains (raw form); bounded
    above, derivative at most eps.
``proof_un(kappa)``
    kappa*x + 1 on losses, (1+x)**kappa on gains (raw form); unbounded
    with sublinear growth exponent kappa in (0, 1).
``exponential_bounded``
    1 - exp(-x); the closed-form test case under Gaussian shocks.
``power_moderate(p, lam, alpha)``
    alpha*x - lam*(-x)**p on losses, (1+x)**alpha - 1 on gains.  The
    loss branch makes Phi(x) = -u(-x) = lam*x**p + alpha*x a doubling
    Young function; alpha = 0 gives the pure power Phi = lam*x**p.
    (A bare x**alpha gains branch cannot be glued concavely at 0 - its
    slope explodes - hence the shifted form.)
``piecewise_linear(breakpoints, slopes)``
    concave polyline; the affine special case is detectable so
    optimizers can refuse it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ConstantUtilityError(ValueError):
    """Raised when a loss-domination search finds no strictly rising point."""


def _vectorized(fn):
    def wrapper(x):
        arr = np.asarray(x, dtype=np.float64)
        out = fn(arr)
        return float(out) if arr.ndim == 0 else out
    return wrapper


def _split(arr: np.ndarray, neg_fn, pos_fn) -> np.ndarray:
    """Evaluate branch functions without feeding them foreign signs."""
    a = np.asarray(arr, dtype=np.float64)
    flat = np.atleast_1d(a)
    out = np.empty_like(flat)
    neg = flat < 0.0
    if np.any(neg):
        out[neg] = neg_fn(flat[neg])
    pos = ~neg
    if np.any(pos):
        out[pos] = pos_fn(flat[pos])
    return out.reshape(a.shape)


@dataclass(frozen=True)
class UtilityFunction:
    """A concave nondecreasing utility with its certificates.

    Call the instance for normalized values (u(0) = 0); ``deriv`` gives
    the derivative, with the averaged-subgradient convention at kinks.

    Attributes
    ----------
    growth : tuple or None
        (C1, alpha) with u(x) <= C1*(x**alpha + 1) on gains, alpha < 1.
    sup_deriv : float
        Supremum of the derivative (``inf`` when slopes are unbounded).
    bounded_above : bool
        Whether sup u < inf.
    is_affine : bool
        True for a globally linear utility; such members index an
        unbounded optimization problem and are refused downstream.
    """

    kind: str
    params: dict = field(default_factory=dict)
    _eval_raw: Callable = None
    _deriv: Callable = None
    raw0: float = 0.0
    bounded_above: bool = False
    sup_value: float = math.inf
    sup_deriv: float = math.inf
    growth: tuple[float, float] | None = None
    strictly_concave: bool = False
    is_affine: bool = False
    kinks: tuple[float, ...] = ()

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = self._eval_raw(arr) - self.raw0
        return float(out) if arr.ndim == 0 else out

    def raw(self, x):
        """The unshifted family formula."""
        arr = np.asarray(x, dtype=np.float64)
        out = self._eval_raw(arr)
        return float(out) if arr.ndim == 0 else out

    def deriv(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = self._deriv(arr)
        return float(out) if arr.ndim == 0 else out

    def label(self) -> str:
        if self.params:
            inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
            return f"{self.kind}({inner})"
        return self.kind


def make_proof_u1(eps: float) -> UtilityFunction:
    """The bounded proof utility: eps*x - 1 on losses, -(1+x)**(-eps) on gains."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")

    def evaluate(arr):
        return _split(arr, lambda z: eps * z - 1.0, lambda z: -((1.0 + z) ** (-eps)))

    def deriv(arr):
        return _split(arr, lambda z: np.full_like(z, eps), lambda z: eps * (1.0 + z) ** (-eps - 1.0))

    return UtilityFunction(
        kind="proof_u1",
        params={"eps": eps},
        _eval_raw=evaluate,
        _deriv=deriv,
        raw0=-1.0,
        bounded_above=True,
        sup_value=1.0,
        sup_deriv=eps,
        growth=(0.5, 0.0),
        strictly_concave=False,
    )


def make_proof_un(kappa: float) -> UtilityFunction:
    """The sublinear-growth proof utility: kappa*x + 1 on losses, (1+x)**kappa on gains."""
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")

    def evaluate(arr):
        return _split(arr, lambda z: kappa * z + 1.0, lambda z: (1.0 + z) ** kappa)

    def deriv(arr):
        return _split(arr, lambda z: np.full_like(z, kappa), lambda z: kappa * (1.0 + z) ** (kappa - 1.0))

    return UtilityFunction(
        kind="proof_un",
        params={"kappa": kappa},
        _eval_raw=evaluate,
        _deriv=deriv,
        raw0=1.0,
        bounded_above=False,
        sup_value=math.inf,
        sup_deriv=kappa,
        growth=(2.0, kappa),
        strictly_concave=False,
    )


def exponential_bounded() -> UtilityFunction:
    """u(x) = 1 - exp(-x); strictly concave, bounded above by 1."""

    def evaluate(arr):
        with np.errstate(over="ignore"):
            return 1.0 - np.exp(-arr)

    def deriv(arr):
        with np.errstate(over="ignore"):
            return np.exp(-arr)

    return UtilityFunction(
        kind="exponential_bounded",
        _eval_raw=evaluate,
        _deriv=deriv,
        raw0=0.0,
        bounded_above=True,
        sup_value=1.0,
        sup_deriv=math.inf,
        growth=(0.5, 0.0),
        strictly_concave=True,
    )


def power_moderate(p: float, lam: float, alpha: float = 0.0) -> UtilityFunction:
    """Power-loss utility whose loss branch is a doubling Young function."""
    if not p > 1.0:
        raise ValueError(f"p must exceed 1, got {p}")
    if not lam > 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")

    def evaluate(arr):
        def gains(z):
            if alpha == 0.0:
                return np.zeros_like(z)
            return (1.0 + z) ** alpha - 1.0

        return _split(arr, lambda z: alpha * z - lam * (-z) ** p, gains)

    def deriv(arr):
        def gains(z):
            if alpha == 0.0:
                return np.zeros_like(z)
            return alpha * (1.0 + z) ** (alpha - 1.0)

        return _split(arr, lambda z: alpha + lam * p * (-z) ** (p - 1.0), gains)

    return UtilityFunction(
        kind="power_moderate",
        params={"p": p, "lam": lam, "alpha": alpha},
        _eval_raw=evaluate,
        _deriv=deriv,
        raw0=0.0,
        bounded_above=(alpha == 0.0),
        sup_value=0.0 if alpha == 0.0 else math.inf,
        sup_deriv=math.inf,
        growth=(0.5, 0.0) if alpha == 0.0 else (1.0, alpha),
        strictly_concave=False,
    )


def piecewise_linear(breakpoints, slopes) -> UtilityFunction:
    """Concave polyline through u(0) = 0.

    ``slopes[j]`` applies between ``breakpoints[j-1]`` and
    ``breakpoints[j]`` (unbounded on the two outer pieces), so there must
    be one more slope than breakpoint.  Slopes must be nonincreasing and
    nonnegative.  The derivative at a breakpoint is the average of the
    adjacent slopes.
    """
    bp = np.asarray(breakpoints, dtype=np.float64)
    sl = np.asarray(slopes, dtype=np.float64)
    if bp.ndim != 1 or sl.ndim != 1 or sl.shape[0] != bp.shape[0] + 1:
        raise ValueError("need one more slope than breakpoints")
    if bp.shape[0] and np.any(np.diff(bp) <= 0):
        raise ValueError("breakpoints must be strictly ascending")
    if np.any(np.diff(sl) > 0):
        raise ValueError("slopes must be nonincreasing for concavity")
    if np.any(sl < 0):
        raise ValueError("slopes must be nonnegative for monotonicity")

    # Node values by integrating the slope field away from 0.
    def node_value(x0: float) -> float:
        pieces = np.concatenate([[-np.inf], bp, [np.inf]])
        total, lo = 0.0, 0.0
        if x0 >= 0:
            for j in range(sl.shape[0]):
                a, bnd = max(pieces[j], lo), min(pieces[j + 1], x0)
                if bnd > a:
                    total += sl[j] * (bnd - a)
            return total
        for j in range(sl.shape[0]):
            a, bnd = max(pieces[j], x0), min(pieces[j + 1], 0.0)
            if bnd > a:
                total -= sl[j] * (bnd - a)
        return total

    node_vals = np.array([node_value(x) for x in bp])

    def evaluate(arr):
        a = np.asarray(arr, dtype=np.float64)
        flat = np.atleast_1d(a)
        seg = np.searchsorted(bp, flat, side="right")
        out = np.empty_like(flat)
        for j in range(sl.shape[0]):
            mask = seg == j
            if not np.any(mask):
                continue
            if j == 0:
                x_ref, v_ref = (bp[0], node_vals[0]) if bp.size else (0.0, 0.0)
            else:
                x_ref, v_ref = bp[j - 1], node_vals[j - 1]
            out[mask] = v_ref + sl[j] * (flat[mask] - x_ref)
        return out.reshape(a.shape)

    def deriv(arr):
        a = np.asarray(arr, dtype=np.float64)
        flat = np.atleast_1d(a)
        seg = np.searchsorted(bp, flat, side="right")
        out = sl[seg].astype(np.float64)
        for j, x0 in enumerate(bp):
            at = flat == x0
            if np.any(at):
                out[at] = 0.5 * (sl[j] + sl[j + 1])
        return out.reshape(a.shape)

    affine = bool(sl.shape[0] == 1 or np.all(sl == sl[0]))
    bounded = bool(sl[-1] == 0.0)
    sup_val = float(node_vals.max()) if bounded and bp.size else (0.0 if bounded else math.inf)
    growth = (max(sup_val, 1.0), 0.0) if bounded else None
    return UtilityFunction(
        kind="piecewise_linear",
        params={"n_pieces": int(sl.shape[0])},
        _eval_raw=evaluate,
        _deriv=deriv,
        raw0=0.0,
        bounded_above=bounded,
        sup_value=sup_val if bounded else math.inf,
        sup_deriv=float(sl[0]),
        growth=growth,
        strictly_concave=False,
        is_affine=affine,
        kinks=tuple(float(x) for x in bp),
    )


def from_callables(kind: str, evaluate: Callable, deriv: Callable, *,
                   bounded_above: bool, sup_deriv: float,
                   growth: tuple[float, float] | None = None,
                   strictly_concave: bool = False,
                   sup_value: float = math.inf,
                   params: dict | None = None) -> UtilityFunction:
    """Wrap externally supplied branch formulas; caller vouches for concavity."""
    ev = _vectorized(evaluate)
    return UtilityFunction(
        kind=kind,
        params=params or {},
        _eval_raw=lambda arr: np.asarray(ev(arr), dtype=np.float64),
        _deriv=_vectorized(deriv),
        raw0=float(evaluate(np.float64(0.0))),
        bounded_above=bounded_above,
        sup_value=sup_value,
        sup_deriv=sup_deriv,
        growth=growth,
        strictly_concave=strictly_concave,
    )


# ---------------------------------------------------------------------------
# Shape checks
# ---------------------------------------------------------------------------

def check_concave_nondecreasing(u: UtilityFunction, lo: float = -1e3, hi: float = 1e3,
                                n: int = 10_001) -> tuple[bool, float]:
    """Grid evidence for concavity and monotonicity.

    Returns (ok, worst_signed_violation) where the violation is the most
    positive increase in successive chord slopes (concavity) or the most
    negative chord slope (monotonicity), whichever is worse.  Values that
    overflow to -inf deep in the loss region are trimmed away first; a
    non-contiguous finite region can never pass.
    """
    xs = np.linspace(lo, hi, n)
    vals = u(xs)
    finite = np.isfinite(vals)
    if finite.sum() < 3:
        return False, math.inf
    first, last = np.flatnonzero(finite)[[0, -1]]
    if not np.all(finite[first:last + 1]):
        return False, math.inf
    xs, vals = xs[first:last + 1], vals[first:last + 1]
    chords = np.diff(vals) / np.diff(xs)
    mono_violation = float(-chords.min()) if chords.size else 0.0
    concave_violation = float(np.diff(chords).max()) if chords.size > 1 else 0.0
    scale = max(1.0, float(np.abs(vals).max()))
    worst = max(mono_violation, concave_violation)
    return worst <= 1e-9 * scale, worst


def check_growth_certificate(u: UtilityFunction, x_max: float = 1e6,
                             n: int = 10_000) -> tuple[bool, float]:
    """Verify u(x) <= C1 (x**alpha + 1) on a log grid of gains."""
    if u.growth is None:
        raise ValueError(f"{u.label()} carries no growth certificate")
    c1, alpha = u.growth
    xs = np.concatenate([[0.0], np.geomspace(1e-9, x_max, n - 1)])
    gap = u(xs) - c1 * (xs**alpha + 1.0)
    worst = float(gap.max())
    return worst <= 1e-9 * max(1.0, c1), worst


def check_loss_domination(u: UtilityFunction, c: float, big_c: float,
                          x_max: float = 1e6, n: int = 10_000) -> tuple[bool, float]:
    """Verify u(x) <= -c|x| + C for x <= 0 on a log grid."""
    s = np.concatenate([[0.0], np.geomspace(1e-6, x_max, n - 1)])
    gap = u(-s) - (-c * s + big_c)
    worst = float(gap.max())
    return worst <= 1e-9 * max(1.0, abs(big_c), c), worst


def lena_constants(u: UtilityFunction, t_min: float = 1e-8, t_max: float = 1e6,
                   n_candidates: int = 400) -> tuple[float, float]:
    """Constructive loss-domination constants (c, C) with u(x) <= -c|x| + C.

    Walks candidate anchors x* = -t from the origin outward, keeping the
    first one where u(x*) < 0, the slope at x* is positive, and u is
    still strictly rising just left of x* + 1.  Then c is the slope at
    the anchor and C = c|x*| + |u(0)| (the last term vanishes after
    normalization).  The returned pair is certified on a log grid down
    to -x_max before it is handed back.
    """
    for t in np.geomspace(t_min, t_max, n_candidates):
        x_star = -t
        if not u(x_star) < 0.0:
            continue
        d_star = u.deriv(x_star)
        if not d_star > 0.0:
            continue
        # Concavity makes the derivative nonincreasing, so a positive slope
        # just left of x* + 1 certifies strict increase on all of (-inf, x*+1).
        if not u.deriv(x_star + 1.0 - 1e-9) > 0.0:
            continue
        c = float(d_star)
        big_c = c * t + abs(u(0.0))
        ok, _ = check_loss_domination(u, c, big_c, x_max=t_max)
        if ok:
            return c, big_c
    raise ConstantUtilityError(
        f"{u.label()}: no anchor with u(x*) < 0 and a positive slope in the window"
    )


# ---------------------------------------------------------------------------
# Young-function pair Phi / Psi
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Delta2Report:
    """Finite-grid evidence for the moderate-growth conditions.

    ``superlinear`` tracks Phi(x)/x -> inf, ``phi_doubling`` the bound on
    Phi(2x)/Phi(x), ``psi_doubling`` the bound on Psi(2y)/Psi(y).  All
    three are judged from trends across the top decades of the grid, so
    a pass is evidence, not proof; a violation is definitive on the grid.
    """

    phi_ratio_top: float
    phi_ratio_prev: float
    psi_ratio_top: float
    psi_ratio_prev: float
    growth_top: float
    growth_prev: float
    superlinear: bool
    phi_doubling: bool
    psi_doubling: bool
    verdict: str
    failed: tuple[str, ...]


@dataclass(frozen=True)
class YoungPair:
    """Phi(x) = -u(-x) and its convex conjugate Psi on the gains ray."""

    utility: UtilityFunction
    report: Delta2Report

    def phi(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if np.any(arr < 0):
            raise ValueError("Phi is defined on x >= 0")
        out = -self.utility(-arr)
        return float(out) if arr.ndim == 0 else out

    def phi_slope(self, x: float) -> float:
        return float(self.utility.deriv(-max(x, 1e-300)))

    def psi(self, y):
        arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if np.any(arr < 0):
            raise ValueError("Psi is evaluated on y >= 0")
        out = np.array([self._psi_scalar(v) for v in arr])
        return float(out[0]) if np.ndim(y) == 0 else out

    def _psi_scalar(self, y: float) -> float:
        """sup_{x>=0} (x*y - Phi(x)) by bisecting the slope equation."""
        if y <= 0.0:
            return 0.0
        if y <= self.phi_slope(1e-12):
            return 0.0
        lo, hi = 0.0, 1.0
        while self.phi_slope(hi) < y:
            hi *= 4.0
            if hi > 1e14:
                return math.inf  # slope saturates below y; conjugate blows up
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.phi_slope(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * max(1.0, hi):
                break
        x_star = 0.5 * (lo + hi)
        return x_star * y - self.phi(x_star)


def young_pair(u: UtilityFunction, x_lo: float = 1e-2, x_hi: float = 1e4,
               points_per_decade: int = 16) -> YoungPair:
    """Build the loss Young function and conjugate, with a doubling report.

    Ratios are examined on the top two decades of a log grid.  A doubling
    ratio that keeps growing decade over decade (by more than 20 percent)
    reads as unbounded; the superlinearity check wants Phi(x)/x to keep
    growing by at least 5x per decade.
    """
    if not x_hi > 10.0 * x_lo > 0.0:
        raise ValueError("need x_hi > 10 * x_lo > 0 for decade comparisons")
    pair = YoungPair(utility=u, report=None)  # temporary: psi needs the slopes only

    decades = int(math.ceil(math.log10(x_hi / x_lo)))
    n = max(decades * points_per_decade, 8)
    xs = np.geomspace(x_lo, x_hi, n)
    with np.errstate(over="ignore", invalid="ignore"):
        phi_x = np.array([-u(-x) for x in xs])
        phi_2x = np.array([-u(-2.0 * x) for x in xs])
        ratios = phi_2x / phi_x
        growth = phi_x / xs

    top = xs >= x_hi / 10.0
    prev = (xs >= x_hi / 100.0) & ~top

    def sup_on(mask, arr):
        vals = arr[mask]
        vals = vals[~np.isnan(vals)]
        return float(vals.max()) if vals.size else math.nan

    phi_top, phi_prev = sup_on(top, ratios), sup_on(prev, ratios)
    growth_top, growth_prev = sup_on(top, growth), sup_on(prev, growth)

    superlinear = bool(np.isinf(growth_top) or (np.isfinite(growth_prev)
                       and growth_prev > 0 and growth_top >= 5.0 * growth_prev))
    phi_doubling = bool(np.isfinite(phi_top) and np.isfinite(phi_prev)
                        and phi_top <= 1.2 * phi_prev)

    # Conjugate ratios on a y grid spanning the same number of decades.
    ys = np.geomspace(1e-1, 1e3, 4 * points_per_decade)
    psi_y = np.array([pair._psi_scalar(v) for v in ys])
    psi_2y = np.array([pair._psi_scalar(2.0 * v) for v in ys])
    with np.errstate(invalid="ignore", divide="ignore"):
        psi_ratios = psi_2y / psi_y
    y_top = ys >= 1e2
    y_prev = (ys >= 1e1) & ~y_top
    psi_defined = np.isfinite(psi_y) & (psi_y > 0) & np.isfinite(psi_2y)
    psi_top = sup_on(y_top & psi_defined, psi_ratios)
    psi_prev = sup_on(y_prev & psi_defined, psi_ratios)
    if math.isnan(psi_top) or math.isnan(psi_prev):
        psi_doubling = False
        failed_psi_reason = "conjugate is infinite or degenerate on the grid"
    else:
        psi_doubling = bool(psi_top <= 1.2 * psi_prev)
        failed_psi_reason = "Psi(2y)/Psi(y) grows across decades"

    failed = []
    if not superlinear:
        failed.append("Phi(x)/x stays bounded (not a Young function)")
    if not phi_doubling:
        failed.append("Phi(2x)/Phi(x) grows across decades")
    if not psi_doubling:
        failed.append(failed_psi_reason)
    verdict = "moderate" if not failed else "not moderate (finite-grid evidence)"
    report = Delta2Report(
        phi_ratio_top=phi_top,
        phi_ratio_prev=phi_prev,
        psi_ratio_top=psi_top,
        psi_ratio_prev=psi_prev,
        growth_top=growth_top,
        growth_prev=growth_prev,
        superlinear=superlinear,
        phi_doubling=phi_doubling,
        psi_doubling=psi_doubling,
        verdict=verdict,
        failed=tuple(failed),
    )
    return YoungPair(utility=u, report=report)
