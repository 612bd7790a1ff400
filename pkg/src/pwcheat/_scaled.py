"""Scaled floating-point values m * exp(e) for overflow-safe propagation.

Hyperbolic propagation across an interval multiplies solutions by factors up
to exp(k*q*dx), which overflows double precision near k*q*dx ~ 710.  All
solvers therefore carry a plain mantissa together with a separate natural-log
exponent and only combine them when a ratio or logarithm is requested.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple


class Scaled(NamedTuple):
    """A real number represented as mantissa * exp(exponent)."""

    mantissa: float
    exponent: float

    @property
    def value(self) -> float:
        """Collapse to a plain float (inf/0.0 when out of double range)."""
        if self.mantissa == 0.0:
            return 0.0
        try:
            return self.mantissa * math.exp(self.exponent)
        except OverflowError:
            return math.copysign(math.inf, self.mantissa)

    @property
    def log_abs(self) -> float:
        """log|value|; -inf for zero."""
        if self.mantissa == 0.0:
            return -math.inf
        return math.log(abs(self.mantissa)) + self.exponent

    @property
    def sign(self) -> int:
        return (self.mantissa > 0) - (self.mantissa < 0)

    @classmethod
    def from_value(cls, x: float) -> "Scaled":
        return cls(float(x), 0.0)

    def __mul__(self, other: "Scaled") -> "Scaled":  # type: ignore[override]
        return Scaled(self.mantissa * other.mantissa, self.exponent + other.exponent)


# Mantissas outside this band are renormalized so products of a few scaled
# values can never overflow before the exponents are merged.
_REBALANCE_HI = 1e100
_REBALANCE_LO = 1e-100


def rebalance(x: Scaled) -> Scaled:
    m, e = x
    if m == 0.0:
        return Scaled(0.0, 0.0)
    a = abs(m)
    if _REBALANCE_LO < a < _REBALANCE_HI:
        return x
    shift = math.log(a)
    return Scaled(math.copysign(1.0, m), e + shift)


def sum_scaled(terms: Iterable[Scaled]) -> Scaled:
    """Sum scaled values without leaving the scaled representation.

    Terms are aligned to the largest exponent among nonzero terms; smaller
    terms underflow gracefully exactly as they would in exact arithmetic.
    """
    items = [rebalance(t) for t in terms if t.mantissa != 0.0]
    if not items:
        return Scaled(0.0, 0.0)
    top = max(t.log_abs for t in items)
    acc = 0.0
    for t in items:
        acc += math.copysign(math.exp(t.log_abs - top), t.mantissa)
    if acc == 0.0:
        return Scaled(0.0, 0.0)
    return rebalance(Scaled(acc, top))
