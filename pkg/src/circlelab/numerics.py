"""Extended-precision scalar context and log-log regression helpers.

Every operation in the package takes a :class:`PrecisionContext` and runs its
arithmetic inside ``ctx.local()``, a thread-local gmpy2 context.  Nothing here
touches global interpreter state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpfr, mpq, mpz

from .errors import DegenerateFitError, DomainError

__all__ = [
    "PrecisionContext",
    "DEFAULT_CONTEXT",
    "ScaleFitReport",
    "slope_fit",
    "log_log_fit",
    "frac",
    "circle_distance",
    "signed_displacement",
    "to_decimal",
    "chebyshev_nodes",
    "geometric_grid",
]


@dataclass(frozen=True)
class PrecisionContext:
    """Binary mantissa precision shared by a computation."""

    bits: int = 256

    def __post_init__(self):
        if not isinstance(self.bits, int) or self.bits < 64:
            raise DomainError(f"precision must be an integer >= 64 bits, got {self.bits!r}")

    @property
    def eps(self):
        """Unit roundoff 2**(1 - bits), exact."""
        with self.local():
            return gmpy2.mul_2exp(mpfr(1), 1 - self.bits)

    def local(self):
        return gmpy2.context(gmpy2.get_context(), precision=self.bits)

    def mpf(self, x):
        """Convert ``x`` to an mpfr at this precision.

        Strings are parsed as decimals (not via binary floats), and Fractions
        are rounded once.
        """
        with self.local():
            if isinstance(x, Fraction):
                return mpfr(mpq(x.numerator, x.denominator))
            if isinstance(x, str):
                x = x.strip()
                if "/" in x:
                    return mpfr(mpq(x))
            return mpfr(x)

    def pi(self):
        with self.local():
            return gmpy2.const_pi()


DEFAULT_CONTEXT = PrecisionContext(256)


@dataclass(frozen=True)
class ScaleFitReport:
    points: tuple
    slope: object
    intercept: object
    max_abs_residual: object

    def predict(self, x):
        return self.intercept + self.slope * x


def slope_fit(points: Iterable[Sequence], ctx: PrecisionContext = DEFAULT_CONTEXT) -> ScaleFitReport:
    """Ordinary least-squares line through ``points`` = [(x, y), ...]."""
    with ctx.local():
        pts = tuple((ctx.mpf(x), ctx.mpf(y)) for x, y in points)
        if len(pts) < 2:
            raise DegenerateFitError(f"need at least 2 points for a fit, got {len(pts)}")
        n = len(pts)
        mx = sum(p[0] for p in pts) / n
        my = sum(p[1] for p in pts) / n
        sxx = sum((p[0] - mx) ** 2 for p in pts)
        if sxx == 0:
            raise DegenerateFitError("all abscissae are equal")
        sxy = sum((p[0] - mx) * (p[1] - my) for p in pts)
        slope = sxy / sxx
        intercept = my - slope * mx
        resid = max(abs(p[1] - (intercept + slope * p[0])) for p in pts)
        return ScaleFitReport(pts, slope, intercept, resid)


def log_log_fit(xs, ys, ctx: PrecisionContext = DEFAULT_CONTEXT) -> ScaleFitReport:
    """Fit log10(y) against log10(x); both must be strictly positive."""
    with ctx.local():
        pts = []
        for x, y in zip(xs, ys):
            x, y = ctx.mpf(x), ctx.mpf(y)
            if x <= 0 or y <= 0:
                raise DomainError(f"log-log fit needs positive data, got ({x}, {y})")
            pts.append((gmpy2.log10(x), gmpy2.log10(y)))
        return slope_fit(pts, ctx)


def frac(x):
    """Reduce to [0, 1)."""
    r = x - gmpy2.floor(x)
    # x slightly below an integer can round up to exactly 1
    return r - 1 if r >= 1 else r


def circle_distance(x, y):
    d = frac(x - y)
    return min(d, 1 - d)


def signed_displacement(x, y):
    """Representative of x - y mod 1 in [-1/2, 1/2)."""
    d = frac(x - y)
    return d - 1 if d >= 0.5 else d


def to_decimal(x, bits: int) -> str:
    """Decimal string that round-trips an mpfr of ``bits`` precision."""
    if isinstance(x, (int, mpz)):
        return str(int(x))
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, str):
        return x
    digits = int(math.ceil(bits * math.log10(2))) + 2
    if not isinstance(x, type(mpfr(0))):
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            x = mpfr(x)
    if not gmpy2.is_finite(x):
        return str(x)
    if x == 0:
        return "0"
    m, e, _ = x.digits(10, digits)
    sign = "-" if m.startswith("-") else ""
    m = m.lstrip("-")
    # digits() means 0.mmm * 10**e
    return f"{sign}{m[0]}.{m[1:]}e{e - 1}"


def chebyshev_nodes(a, b, count: int, ctx: PrecisionContext):
    """``count`` Chebyshev-spaced interior points of [a, b] plus both endpoints."""
    with ctx.local():
        a, b = ctx.mpf(a), ctx.mpf(b)
        pi = gmpy2.const_pi()
        mid, half = (a + b) / 2, (b - a) / 2
        inner = [mid - half * gmpy2.cos((2 * j + 1) * pi / (2 * count)) for j in range(count)]
        return [a] + inner + [b]


def geometric_grid(lo, hi, per_decade: int = 8):
    """Geometric grid from ``lo`` to ``hi`` inclusive, ``per_decade`` points per decade."""
    n = int(round(math.log10(hi / lo) * per_decade))
    return [lo * 10 ** (k / per_decade) for k in range(n + 1)]
