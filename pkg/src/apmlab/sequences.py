"""Sequences over asset indices, stored as a dense prefix plus a tail rule.

Model parameters and portfolio weights live on a countable index set
1, 2, 3, ...  A ``PrefixSequence`` stores explicit values for the first
K indices and, optionally, a closed-form rule for every index past K.
The supported rules are exactly the ones whose squared tail sums have
closed forms, which is what the square-summability diagnostics need:

==========  ======================  =================================
kind        value at index i        tail sum of squares past n
==========  ======================  =================================
zero        0                       0
constant    c                       0 if c == 0 else divergent
geometric   c * r**i                c**2 * r**(2n+2) / (1 - r**2)
power       c * i**(-p)             c**2 * zeta(2p, n+1), Hurwitz
==========  ======================  =================================

Indices are 1-based throughout, matching the market convention that
asset 0 is the riskless bond and risky assets start at 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta as _hurwitz_zeta

TAIL_KINDS = frozenset({"zero", "constant", "geometric", "power"})


@dataclass(frozen=True)
class TailRule:
    """Closed-form values for indices past a sequence's dense prefix.

    Parameters
    ----------
    kind : str
        One of ``zero``, ``constant``, ``geometric``, ``power``.
    coeff : float
        Constant value for ``constant``; multiplier ``c`` for
        ``geometric`` and ``power``.  Ignored for ``zero``.
    ratio : float
        Geometric ratio ``r``.  Required for ``geometric``.
    exponent : float
        Power-law decay exponent ``p > 0``.  Required for ``power``.
    """

    kind: str = "zero"
    coeff: float = 0.0
    ratio: float = 0.0
    exponent: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in TAIL_KINDS:
            raise ValueError(f"tail rule kind must be one of {sorted(TAIL_KINDS)}, got {self.kind!r}")
        if self.kind == "geometric" and not 0.0 < abs(self.ratio):
            raise ValueError("geometric tail rule needs a nonzero ratio")
        if self.kind == "power" and not self.exponent > 0.0:
            raise ValueError("power tail rule needs exponent > 0")

    def values(self, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(idx)
        if self.kind == "constant":
            return np.full_like(idx, self.coeff)
        if self.kind == "geometric":
            return self.coeff * np.power(self.ratio, idx)
        return self.coeff * np.power(idx, -self.exponent)

    def value(self, index: int) -> float:
        return float(self.values(np.array([index]))[0])

    def sum_sq_past(self, n: int) -> float:
        """Exact value of sum_{i > n} rule(i)**2, possibly ``inf``."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        if self.kind == "zero" or self.coeff == 0.0:
            return 0.0
        if self.kind == "constant":
            return math.inf
        if self.kind == "geometric":
            r2 = self.ratio * self.ratio
            if r2 >= 1.0:
                return math.inf
            return self.coeff**2 * r2 ** (n + 1) / (1.0 - r2)
        if 2.0 * self.exponent <= 1.0:
            return math.inf
        return self.coeff**2 * float(_hurwitz_zeta(2.0 * self.exponent, n + 1))

    @property
    def is_identically_zero(self) -> bool:
        return self.kind == "zero" or (self.kind != "zero" and self.coeff == 0.0)

    def scaled(self, factor: float) -> "TailRule":
        """The rule for ``factor * value(i)``, staying in the closed family."""
        if self.kind == "zero":
            return self
        return TailRule(self.kind, factor * self.coeff, self.ratio, self.exponent)


ZERO_TAIL = TailRule()


@dataclass(frozen=True)
class PrefixSequence:
    """A real sequence on indices 1, 2, ... with an analytic tail.

    ``prefix[j]`` holds the value at index ``j + 1``; ``tail`` governs all
    indices past ``len(prefix)``.  A missing tail (``tail=None``) means the
    sequence is only known on its prefix, in which case square-summability
    questions come back unresolved instead of silently assuming zeros.
    """

    prefix: np.ndarray
    tail: TailRule | None = field(default=ZERO_TAIL)

    def __post_init__(self) -> None:
        arr = np.asarray(self.prefix, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("prefix must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("prefix values must be finite")
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "prefix", arr)

    @classmethod
    def from_values(cls, values, tail: TailRule | None = ZERO_TAIL) -> "PrefixSequence":
        return cls(np.asarray(values, dtype=np.float64), tail)

    @property
    def prefix_len(self) -> int:
        return int(self.prefix.shape[0])

    def value(self, index: int) -> float:
        if index < 1:
            raise IndexError(f"indices are 1-based, got {index}")
        if index <= self.prefix_len:
            return float(self.prefix[index - 1])
        if self.tail is None:
            raise IndexError(f"index {index} is past the prefix and no tail rule is set")
        return self.tail.value(index)

    def values(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        if idx.size and idx.min() < 1:
            raise IndexError("indices are 1-based")
        out = np.empty(idx.shape, dtype=np.float64)
        in_prefix = idx <= self.prefix_len
        out[in_prefix] = self.prefix[idx[in_prefix] - 1]
        past = ~in_prefix
        if np.any(past):
            if self.tail is None:
                raise IndexError("indices past the prefix and no tail rule is set")
            out[past] = self.tail.values(idx[past])
        return out

    def dense(self, k: int) -> np.ndarray:
        """Values at indices 1..k as a dense array."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        return self.values(np.arange(1, k + 1))

    def sum_sq_prefix(self, k: int) -> float:
        """Compensated sum_{i <= k} value(i)**2."""
        return math.fsum(v * v for v in self.dense(k))

    def sum_sq_past(self, n: int) -> float | None:
        """sum_{i > n} value(i)**2: exact, ``inf``, or None when unknowable."""
        if n >= self.prefix_len:
            if self.tail is None:
                return None
            return self.tail.sum_sq_past(n)
        head = math.fsum(v * v for v in self.prefix[n:])
        rest = self.sum_sq_past(self.prefix_len)
        if rest is None:
            return None
        return head + rest

    def sum_sq_total(self) -> float | None:
        return self.sum_sq_past(0)

    def scaled(self, factor: float) -> "PrefixSequence":
        tail = None if self.tail is None else self.tail.scaled(factor)
        return PrefixSequence(factor * self.prefix, tail)

    @property
    def support_is_finite(self) -> bool:
        return self.tail is not None and self.tail.is_identically_zero


def tail_rule_from_spec(spec: dict) -> TailRule:
    """Build a TailRule from a plain-dict description (config files)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("tail rule spec must be a mapping with a 'kind' key")
    kind = spec["kind"]
    known = {"kind", "coeff", "ratio", "exponent", "value"}
    extra = set(spec) - known
    if extra:
        raise ValueError(f"unknown tail rule keys: {sorted(extra)}")
    coeff = float(spec.get("coeff", spec.get("value", 0.0)))
    return TailRule(
        kind=kind,
        coeff=coeff,
        ratio=float(spec.get("ratio", 0.0)),
        exponent=float(spec.get("exponent", 0.0)),
    )
