"""Continued fractions, gap sequences and Diophantine diagnostics for rotation numbers.

Convention: rho = [k_1, k_2, ...] = 1/(k_1 + 1/(k_2 + ...)) in (0, 1), with
p_{-1} = 1, q_{-1} = 0, p_0 = 0, q_0 = 1.  Lists of convergents are therefore
stored with an offset of one: ``numerators[n + 1] == p_n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .errors import DomainError
from .numerics import DEFAULT_CONTEXT, PrecisionContext, ScaleFitReport, slope_fit

__all__ = [
    "ContinuedFraction",
    "GapSequence",
    "DiophantineWitness",
    "cf_expand",
    "cf_from_quotients",
    "rho_from_quotients",
    "gap_sequence",
    "diophantine_estimate",
    "golden_mean",
    "silver_mean",
    "convergents",
]


@dataclass(frozen=True)
class ContinuedFraction:
    rho: object
    quotients: tuple
    numerators: tuple
    denominators: tuple
    terminated: bool = False
    bits: int = DEFAULT_CONTEXT.bits

    @property
    def depth(self) -> int:
        return len(self.quotients)

    def p(self, n: int) -> int:
        return self.numerators[n + 1]

    def q(self, n: int) -> int:
        return self.denominators[n + 1]

    def convergent(self, n: int) -> Fraction:
        return Fraction(self.p(n), self.q(n))


@dataclass(frozen=True)
class GapSequence:
    """Delta_{-1}..Delta_N with Delta_n = |q_n rho - p_n|; ``deltas[n + 1]`` is Delta_n."""

    deltas: tuple
    cf: ContinuedFraction
    exhausted: bool = False

    def delta(self, n: int):
        return self.deltas[n + 1]

    @property
    def depth(self) -> int:
        return len(self.deltas) - 2


@dataclass(frozen=True)
class DiophantineWitness:
    delta_hat: float
    per_n_exponents: tuple
    constant_estimate: float
    depth: int
    fit: ScaleFitReport


def convergents(quotients: Sequence[int]):
    """Numerators p_{-1}..p_N and denominators q_{-1}..q_N for the quotients."""
    ps, qs = [1, 0], [0, 1]
    for k in quotients:
        ps.append(k * ps[-1] + ps[-2])
        qs.append(k * qs[-1] + qs[-2])
    return tuple(ps), tuple(qs)


def golden_mean(ctx: PrecisionContext = DEFAULT_CONTEXT):
    with ctx.local():
        return (gmpy2.sqrt(mpfr(5)) - 1) / 2


def silver_mean(ctx: PrecisionContext = DEFAULT_CONTEXT):
    with ctx.local():
        return gmpy2.sqrt(mpfr(2)) - 1


def rho_from_quotients(quotients: Sequence[int], ctx: PrecisionContext = DEFAULT_CONTEXT):
    """Value of the finite continued fraction, rounded once to the context."""
    x = Fraction(0)
    for k in reversed(quotients):
        if k < 1:
            raise DomainError(f"partial quotients must be positive, got {k}")
        x = 1 / (k + x)
    return ctx.mpf(x)


def _build(rho, ks, terminated, ctx) -> ContinuedFraction:
    ps, qs = convergents(ks)
    return ContinuedFraction(rho, tuple(ks), ps, qs, terminated, ctx.bits)


def cf_from_quotients(quotients: Sequence[int], ctx: PrecisionContext = DEFAULT_CONTEXT,
                      rho=None) -> ContinuedFraction:
    """Continued fraction with prescribed quotients.

    ``rho`` defaults to the exact rational [k_1..k_N]; pass the irrational
    value when the quotients are a prefix of an infinite expansion.
    """
    ks = [int(k) for k in quotients]
    if any(k < 1 for k in ks):
        raise DomainError("partial quotients must be positive")
    if rho is None:
        return _build(_exact_value(ks), ks, True, ctx)
    return _build(rho, ks, False, ctx)


def _exact_value(ks):
    x = Fraction(0)
    for k in reversed(ks):
        x = 1 / (k + x)
    return x


def _as_number(rho, ctx):
    if isinstance(rho, Fraction):
        return rho
    if isinstance(rho, int):
        return Fraction(rho)
    if isinstance(rho, str):
        return Fraction(rho)
    if isinstance(rho, type(gmpy2.mpq())):
        return Fraction(int(rho.numerator), int(rho.denominator))
    return ctx.mpf(rho)


def cf_expand(rho, depth: int, ctx: PrecisionContext = DEFAULT_CONTEXT) -> ContinuedFraction:
    """Partial quotients of rho in (0, 1) up to ``depth``.

    Strings, ints and Fractions are expanded exactly (Euclid).  Floating
    values use repeated reciprocal-and-floor; the expansion stops with
    ``terminated=True`` when the remainder is within rounding noise of an
    integer, i.e. rho is indistinguishable from p_n/q_n at this precision.
    """
    if depth < 1:
        raise DomainError(f"depth must be positive, got {depth}")
    x = _as_number(rho, ctx)
    if not 0 < x < 1:
        raise DomainError(f"rho must lie in (0, 1), got {x}")
    if isinstance(x, Fraction):
        return _expand_exact(x, depth, ctx)
    with ctx.local():
        eps = ctx.eps
        ks: list[int] = []
        q_prev, q = 0, 1
        terminated = False
        y = x
        while len(ks) < depth:
            r = 1 / y
            k = int(gmpy2.floor(r))
            f = r - k
            # rounding error in the remainder grows like q_n^2 * eps
            noise = 16 * eps * (q * q + 1) * r
            if f < noise or 1 - f < noise:
                if 1 - f < noise:
                    k += 1
                ks.append(k)
                terminated = True
                break
            ks.append(k)
            q_prev, q = q, k * q + q_prev
            y = f
        if terminated:
            ks = _canonical_tail(ks)
        return _build(x, ks, terminated, ctx)


def _canonical_tail(ks):
    # [.., k, 1] == [.., k + 1]; forbid a trailing 1 except at depth 1
    if len(ks) > 1 and ks[-1] == 1:
        ks = ks[:-2] + [ks[-2] + 1]
    return ks


def _expand_exact(x: Fraction, depth, ctx):
    ks = []
    y = x
    terminated = False
    while len(ks) < depth:
        r = 1 / y
        k = r.numerator // r.denominator
        ks.append(k)
        f = r - k
        if f == 0:
            terminated = True
            break
        y = f
    return _build(x, ks, terminated, ctx)


def gap_sequence(cf: ContinuedFraction, ctx: PrecisionContext | None = None) -> GapSequence:
    """Delta_n = |q_n rho - p_n| for n = -1..N."""
    ctx = ctx or PrecisionContext(cf.bits)
    rho = cf.rho
    exact = isinstance(rho, Fraction)
    with ctx.local():
        deltas = []
        exhausted = False
        for p, q in zip(cf.numerators, cf.denominators):
            if exact:
                d = abs(q * rho - p)
            else:
                d = abs(q * rho - p)
                if q > 0 and d < 4 * ctx.eps * q:
                    exhausted = True
            deltas.append(d)
        if exact:
            deltas = [ctx.mpf(d) for d in deltas]
        return GapSequence(tuple(deltas), cf, exhausted)


def diophantine_estimate(gaps: GapSequence) -> DiophantineWitness:
    """Empirical exponent delta with Delta_{n-1}^{1+delta} = O(Delta_n).

    ``per_n_exponents[n-1]`` is the raw local exponent
    log(1/Delta_n)/log(1/Delta_{n-1}) - 1 for n >= 1.  ``delta_hat`` is
    max(0, slope - 1) of the least-squares line through
    (log Delta_{n-1}, log Delta_n), which absorbs the constant C into the
    intercept and so is free of the 1/n boundary bias of the raw values.
    """
    ctx = PrecisionContext(gaps.cf.bits)
    usable = [d for d in gaps.deltas[1:] if d > 0]
    if len(usable) < 3:
        raise DomainError("need at least 3 positive gaps")
    with ctx.local():
        per_n = []
        pts = []
        for prev, cur in zip(usable, usable[1:]):
            lp, lc = gmpy2.log10(prev), gmpy2.log10(cur)
            per_n.append(float(lc / lp - 1))
            pts.append((lp, lc))
        fit = slope_fit(pts, ctx)
        delta_hat = max(0.0, float(fit.slope - 1))
        const = float(10 ** (-fit.intercept))
    return DiophantineWitness(delta_hat, tuple(per_n), const, len(usable) - 1, fit)
