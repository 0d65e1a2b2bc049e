"""Cross-ratio, ratio distortion and their small-scale expansions.

A "map with jet" is any object exposing ``value(x)``, ``d1(x)``, ``jet(x)``
(returning f, f', f'', f''') and a boolean ``affine``; :class:`CircleMap`
lifts qualify, and :class:`JetFunction` wraps closed-form test maps.

Coincident points are handled by case analysis: a difference quotient
(f(a) - f(a))/(a - a) is replaced by f'(a).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import gmpy2
from gmpy2 import mpfr

from .errors import DomainError
from .numerics import DEFAULT_CONTEXT, PrecisionContext, geometric_grid, log_log_fit, to_decimal

__all__ = [
    "Quad",
    "DistortionValue",
    "ExpansionResidual",
    "JetFunction",
    "square_map",
    "exp_map",
    "mobius_map",
    "affine_map",
    "compose",
    "cross_ratio",
    "ratio_distortion",
    "cross_ratio_distortion",
    "cross_ratio_distortion_direct",
    "check_multiplicativity",
    "dr_expansion_residual",
    "lemma1_theta_form",
    "exact_relation_check",
    "dist_expansion_residual",
    "identity_tolerance",
    "dist_tolerance",
    "expansion_sweep",
    "sweep_slope",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class Quad:
    x1: object
    x2: object
    x3: object
    x4: object

    @property
    def points(self):
        return (self.x1, self.x2, self.x3, self.x4)

    @property
    def scale(self):
        return max(self.points) - min(self.points)

    def image(self, f) -> "Quad":
        return Quad(*(f.value(x) for x in self.points))


@dataclass(frozen=True)
class DistortionValue:
    value: object
    coincidence_mask: tuple = ()


@dataclass(frozen=True)
class ExpansionResidual:
    quad_scale: object
    predicted: object
    actual: object
    residual: object
    form: str = "default"


class JetFunction:
    """Closed-form real function with analytic derivatives up to third order."""

    def __init__(self, jet: Callable, ctx: PrecisionContext = DEFAULT_CONTEXT, affine: bool = False,
                 name: str = ""):
        self._jet = jet
        self.ctx = ctx
        self.affine = affine
        self.name = name

    def jet(self, x):
        with self.ctx.local():
            return self._jet(mpfr(x))

    def value(self, x):
        return self.jet(x)[0]

    def d1(self, x):
        return self.jet(x)[1]

    def schwarzian(self, x):
        return _schwarzian(self, x)

    def __repr__(self):
        return f"JetFunction({self.name or '?'})"


def _schwarzian(f, x):
    with f.ctx.local():
        _, f1, f2, f3 = f.jet(x)
        if f2 == 0 and f3 == 0:
            return mpfr(0)
        r = f2 / f1
        return f3 / f1 - 3 * r * r / 2


def square_map(ctx: PrecisionContext = DEFAULT_CONTEXT) -> JetFunction:
    return JetFunction(lambda x: (x * x, 2 * x, mpfr(2), mpfr(0)), ctx, name="x^2")


def exp_map(ctx: PrecisionContext = DEFAULT_CONTEXT) -> JetFunction:
    def jet(x):
        e = gmpy2.exp(x)
        return e, e, e, e
    return JetFunction(jet, ctx, name="exp")


def mobius_map(a, b, c, d, ctx: PrecisionContext = DEFAULT_CONTEXT) -> JetFunction:
    """x -> (a x + b)/(c x + d); requires ad - bc > 0 (increasing)."""
    with ctx.local():
        a, b, c, d = (ctx.mpf(v) for v in (a, b, c, d))
        det = a * d - b * c
    if det <= 0:
        raise DomainError("Mobius test maps must be increasing (ad - bc > 0)")

    def jet(x):
        u = c * x + d
        f1 = det / (u * u)
        return (a * x + b) / u, f1, -2 * c * f1 / u, 6 * c * c * f1 / (u * u)
    return JetFunction(jet, ctx, affine=(c == 0), name="mobius")


def affine_map(slope, shift, ctx: PrecisionContext = DEFAULT_CONTEXT) -> JetFunction:
    with ctx.local():
        s, t = ctx.mpf(slope), ctx.mpf(shift)
    return JetFunction(lambda x: (s * x + t, s, mpfr(0), mpfr(0)), ctx, affine=True, name="affine")


def compose(f, g) -> JetFunction:
    """f o g with its third-order jet (Faa di Bruno)."""
    ctx = getattr(f, "ctx", DEFAULT_CONTEXT)

    def jet(x):
        g0, g1, g2, g3 = g.jet(x)
        f0, f1, f2, f3 = f.jet(g0)
        return (f0, f1 * g1, f2 * g1 * g1 + f1 * g2,
                f3 * g1 ** 3 + 3 * f2 * g1 * g2 + f1 * g3)
    return JetFunction(jet, ctx, affine=bool(f.affine and g.affine), name="compose")


def cross_ratio(q: Quad, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """Cr = ((x1-x2)(x3-x4)) / ((x2-x3)(x4-x1)) for pairwise distinct points."""
    p = q.points
    if len(set(p)) < 4:
        raise DomainError("cross-ratio needs pairwise distinct points")
    with ctx.local():
        x1, x2, x3, x4 = (ctx.mpf(x) for x in p)
        return ((x1 - x2) * (x3 - x4)) / ((x2 - x3) * (x4 - x1))


def _dq(f, a, b, fa, fb):
    return f.d1(a) if a == b else (fa - fb) / (a - b)


def _ratio_distortion(f, x1, x2, x3, values=None):
    if values is None:
        values = (f.value(x1), f.value(x2), f.value(x3))
    f1, f2, f3 = values
    return _dq(f, x1, x2, f1, f2) / _dq(f, x2, x3, f2, f3)


def _mask(*xs):
    return tuple((i, j) for i in range(len(xs)) for j in range(i + 1, len(xs)) if xs[i] == xs[j])


def ratio_distortion(x1, x2, x3, f) -> DistortionValue:
    """D(x1, x2, x3; f) = [(f(x1)-f(x2))/(x1-x2)] : [(f(x2)-f(x3))/(x2-x3)]."""
    mask = _mask(x1, x2, x3)
    if f.affine:
        return DistortionValue(mpfr(1), mask)
    with f.ctx.local():
        return DistortionValue(_ratio_distortion(f, x1, x2, x3), mask)


def cross_ratio_distortion(q: Quad, f) -> DistortionValue:
    """Dist(q; f) = D(x1, x2, x3; f) / D(x1, x4, x3; f)."""
    mask = _mask(*q.points)
    if f.affine:
        return DistortionValue(mpfr(1), mask)
    with f.ctx.local():
        x1, x2, x3, x4 = q.points
        v1, v2, v3, v4 = (f.value(x) for x in q.points)
        num = _ratio_distortion(f, x1, x2, x3, (v1, v2, v3))
        den = _ratio_distortion(f, x1, x4, x3, (v1, v4, v3))
        return DistortionValue(num / den, mask)


def cross_ratio_distortion_direct(q: Quad, f):
    """Cr(f(q)) / Cr(q), the definition; distinct points only."""
    with f.ctx.local():
        return cross_ratio(q.image(f), f.ctx) / cross_ratio(q, f.ctx)


def identity_tolerance(ctx: PrecisionContext, *terms):
    """64 * eps * (sum of absolute magnitudes)."""
    with ctx.local():
        return 64 * ctx.eps * sum(abs(mpfr(t)) for t in terms)


def _condition(f, pairs):
    # relative rounding amplification of each divided difference (f(a)-f(b))/(a-b)
    c = mpfr(0)
    for a, b in pairs:
        if a == b:
            continue
        fa, fb = f.value(a), f.value(b)
        c += (abs(a) + abs(b)) / abs(a - b) + (abs(fa) + abs(fb)) / abs(fa - fb)
    return c


def dist_tolerance(q: Quad, f, value=1):
    """64 * eps * |value| * (1 + condition of the four divided differences in Dist)."""
    ctx = f.ctx
    with ctx.local():
        x1, x2, x3, x4 = q.points
        cond = _condition(f, ((x1, x2), (x2, x3), (x1, x4), (x4, x3)))
        return 64 * ctx.eps * abs(mpfr(value)) * (1 + cond)


def check_multiplicativity(q: Quad, f, g):
    """Residuals of D(x; f o g) = D(x; g) D(g(x); f) and of the Dist analogue.

    Returns (ratio_residual, cross_ratio_residual, ratio_tol, cross_ratio_tol).
    """
    fg = compose(f, g)
    ctx = fg.ctx
    with ctx.local():
        x1, x2, x3, _ = q.points
        lhs = ratio_distortion(x1, x2, x3, fg).value
        dg = ratio_distortion(x1, x2, x3, g).value
        df = ratio_distortion(g.value(x1), g.value(x2), g.value(x3), f).value
        r1 = abs(lhs - dg * df)
        gx = [g.value(x) for x in (x1, x2, x3)]
        cond = 1 + _condition(fg, ((x1, x2), (x2, x3))) + _condition(g, ((x1, x2), (x2, x3))) \
            + _condition(f, ((gx[0], gx[1]), (gx[1], gx[2])))
        t1 = identity_tolerance(ctx, lhs, dg * df) * cond
        lhs2 = cross_ratio_distortion(q, fg).value
        ag = cross_ratio_distortion(q, g).value
        af = cross_ratio_distortion(q.image(g), f).value
        r2 = abs(lhs2 - ag * af)
        t2 = dist_tolerance(q, fg, lhs2) + dist_tolerance(q, g, ag * af) + dist_tolerance(q.image(g), f, ag * af)
        return r1, r2, t1, t2


def _prop_prediction(f, x1, x2, x3):
    _, f1, f2, _ = f.jet(x1)
    return f2 / (2 * f1) + _schwarzian(f, x1) * (x2 + x3 - 2 * x1) / 6


def _theta_prediction(f, x1, x2, x3, theta):
    _, f1, f2, f3 = f.jet(theta)
    r = f2 / (2 * f1)
    return r + f3 / (6 * f1) * (x1 + x2 + x3 - 3 * theta) - r * r * (x2 + x3 - 2 * theta)


def dr_expansion_residual(x1, x2, x3, f) -> ExpansionResidual:
    """(D - 1)/(x1 - x3) minus [f''/2f' + Sf (x2 + x3 - 2 x1)/6] at x1.

    For x1 = x3 the normalization is 0/0 and the theta-form residual with
    theta = x2 is returned instead (``form="theta"``).
    """
    ctx = f.ctx
    with ctx.local():
        scale = max(x1, x2, x3) - min(x1, x2, x3)
        if x1 == x3:
            r = lemma1_theta_form(x1, x2, x3, x2, f)
            return ExpansionResidual(r.quad_scale, r.predicted, r.actual, r.residual, "theta")
        if f.affine:
            z = mpfr(0)
            return ExpansionResidual(scale, z, z, z)
        d = ratio_distortion(x1, x2, x3, f).value
        actual = (d - 1) / (x1 - x3)
        predicted = _prop_prediction(f, x1, x2, x3)
        return ExpansionResidual(scale, predicted, actual, actual - predicted)


def lemma1_theta_form(x1, x2, x3, theta, f) -> ExpansionResidual:
    """theta-based expression minus the x1-based expression; O(Delta_theta^{1+beta})."""
    if not min(x1, x2, x3) <= theta <= max(x1, x2, x3):
        raise DomainError("theta must lie between the extreme points")
    ctx = f.ctx
    with ctx.local():
        scale = max(x1, x2, x3, theta) - min(x1, x2, x3, theta)
        if theta == x1 or f.affine:
            p = mpfr(0) if f.affine else _prop_prediction(f, x1, x2, x3)
            return ExpansionResidual(scale, p, p, mpfr(0), "theta")
        predicted = _prop_prediction(f, x1, x2, x3)
        actual = _theta_prediction(f, x1, x2, x3, theta)
        return ExpansionResidual(scale, predicted, actual, actual - predicted, "theta")


def exact_relation_check(x1, x2, x3, f):
    """|D(x1,x2,x3) - 1 - (x1-x3)/(x2-x3) (D(x2,x1,x3) - 1) D(x1,x3,x2)|.

    Returns (residual, tolerance).
    """
    if x2 == x3:
        raise DomainError("exact relation needs x2 != x3")
    ctx = f.ctx
    with ctx.local():
        lhs = ratio_distortion(x1, x2, x3, f).value
        d213 = ratio_distortion(x2, x1, x3, f).value
        d132 = ratio_distortion(x1, x3, x2, f).value
        rhs = 1 + (x1 - x3) / (x2 - x3) * (d213 - 1) * d132
        return abs(lhs - rhs), identity_tolerance(ctx, lhs, 1, (x1 - x3) / (x2 - x3) * d213 * d132)


def dist_expansion_residual(q: Quad, theta, f, literal: bool = False) -> ExpansionResidual:
    """log Dist/(x1 - x3) minus (x2 - x4) Sf(theta)/6; O(Delta^{1+beta}).

    Dividing the two ratio-distortion expansions leaves the difference of
    their brackets, in which only x2 - x4 survives.  ``literal=True`` uses
    (x2 - x3) instead; that variant leaves an O(Delta) residual and is kept
    only for comparison.

    Degenerate x1 = x3 reports Dist - 1 directly (``form="direct"``).
    """
    lo, hi = min(q.points), max(q.points)
    if not lo <= theta <= hi:
        raise DomainError("theta must lie in the hull of the quad")
    ctx = f.ctx
    with ctx.local():
        x1, x2, x3, x4 = q.points
        scale = hi - lo
        dist = cross_ratio_distortion(q, f).value
        if x1 == x3:
            z = mpfr(0)
            return ExpansionResidual(scale, z, dist - 1, dist - 1, "direct")
        if f.affine:
            z = mpfr(0)
            return ExpansionResidual(scale, z, z, z)
        actual = gmpy2.log(dist) / (x1 - x3)
        lever = (x2 - x3) if literal else (x2 - x4)
        predicted = lever * _schwarzian(f, theta) / 6
        return ExpansionResidual(scale, predicted, actual, actual - predicted,
                                 "literal" if literal else "default")


def expansion_sweep(f, kind: str = "dr", bases: Sequence = (0,), deltas: Iterable | None = None,
                    theta: str = "mid") -> list[ExpansionResidual]:
    """Residuals over a geometric Delta grid; each row keeps the largest |residual| over ``bases``.

    ``kind``: "dr" (triples xi, xi + D/2, xi + D), "theta" (same triples,
    theta = x2), "dist" or "dist_literal" (quad xi, xi + D/4, xi + D, xi + D/2 with theta
    at the hull midpoint, or at x1 with ``theta="x1"``).  A quad symmetric
    about the midpoint would cancel the Delta^2 term for smooth maps and hide
    the generic rate, hence the lopsided shape.
    """
    ctx = f.ctx
    if deltas is None:
        deltas = geometric_grid(1e-5, 1e-2, 8)
    rows = []
    with ctx.local():
        for dl in deltas:
            d = ctx.mpf(repr(dl)) if isinstance(dl, float) else ctx.mpf(dl)
            best = None
            for b in bases:
                xi = ctx.mpf(b)
                if kind == "dr":
                    r = dr_expansion_residual(xi, xi + d / 2, xi + d, f)
                elif kind == "theta":
                    r = lemma1_theta_form(xi, xi + d / 2, xi + d, xi + d / 2, f)
                elif kind in ("dist", "dist_literal"):
                    quad = Quad(xi, xi + d / 4, xi + d, xi + d / 2)
                    th = xi if theta == "x1" else xi + d / 2
                    r = dist_expansion_residual(quad, th, f, literal=(kind == "dist_literal"))
                else:
                    raise DomainError(f"unknown sweep kind {kind!r}")
                if best is None or abs(r.residual) > abs(best.residual):
                    best = r
            rows.append(best)
    return rows


def sweep_slope(rows: Sequence[ExpansionResidual], ctx: PrecisionContext = DEFAULT_CONTEXT):
    """log10 |residual| against log10 Delta."""
    return log_log_fit([r.quad_scale for r in rows], [abs(r.residual) for r in rows], ctx)


def write_sweep_csv(rows: Sequence[ExpansionResidual], path, bits: int = 100) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "actual", "predicted", "residual"])
        for r in rows:
            w.writerow([to_decimal(v, bits) for v in (r.quad_scale, r.actual, r.predicted, r.residual)])
