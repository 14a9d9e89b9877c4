"""Exact rational arithmetic helpers.

gmpy2.mpq is used when available (much faster gcd), with fractions.Fraction
as a drop-in fallback.  Everything downstream constructs rationals through
Frac() and never touches floats except in explicitly-float cross-checks.
"""

from __future__ import annotations

try:
    from gmpy2 import mpq as Frac  # type: ignore
except ImportError:  # pragma: no cover
    from fractions import Fraction as Frac  # type: ignore

ZERO = Frac(0)
ONE = Frac(1)


def rat(x) -> "Frac":
    """Coerce ints, 'p/q' strings, and rationals to Frac. Floats are refused."""
    if isinstance(x, float):
        raise TypeError("refusing to build an exact rational from a float")
    if isinstance(x, str):
        if "/" in x:
            num, den = x.split("/", 1)
            return Frac(int(num), int(den))
        return Frac(int(x))
    return Frac(x)


def rat_str(x) -> str:
    """Canonical 'p/q' (or 'p') string for JSON output."""
    x = Frac(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def rat_pair(x) -> list[str]:
    """Numerator/denominator string pair for JSON tables."""
    x = Frac(x)
    return [str(x.numerator), str(x.denominator)]
