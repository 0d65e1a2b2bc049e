"""Circle diffeomorphism families, jets, orbits and rotation numbers.

Three families of lifts L with L(x + 1) = L(x) + 1:

* ``rigid_rotation``:     L(x) = x + omega
* ``sine_family``:        L(x) = x + omega + (a / 2 pi) sin(2 pi x),  |a| < 1
* ``weierstrass_family``: L(x) = x + omega + a s(x),
  s(x) = sum_{k=1..K} lam^{-k(3+beta)} sin(2 pi lam^k x)

The third derivative of the Weierstrass family is a lacunary cosine series
with Hoelder exponent ``beta``, so the family is C^{3+beta} and no smoother
(up to the truncation scale lam^{-K}).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr, mpz

from .errors import (
    CombinatoricsError,
    ConstructionError,
    DomainError,
    ModeLockingError,
    PeriodicOrbitError,
    ResourceError,
)
from .numerics import (
    DEFAULT_CONTEXT,
    PrecisionContext,
    frac,
    signed_displacement,
    to_decimal,
)
from .rotnum import ContinuedFraction, cf_expand, convergents

__all__ = [
    "CircleMapSpec",
    "CircleMap",
    "JetValue",
    "OrbitCache",
    "eval_jet",
    "schwarzian",
    "iterate_orbit",
    "closest_returns",
    "rotation_number",
    "tune_parameter",
    "weierstrass_series",
    "save_orbit",
    "load_orbit",
    "DEFAULT_ORBIT_BUDGET",
    "extend_orbit",
]

DEFAULT_ORBIT_BUDGET = 2_000_000

FAMILIES = ("rigid_rotation", "sine_family", "weierstrass_family")


@dataclass(frozen=True)
class CircleMapSpec:
    """A family tag plus parameters.

    Parameters are kept as given (decimal strings, ints, Fractions or mpfr)
    and only converted when bound to a precision, so one spec can be
    evaluated at several precisions.
    """

    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConstructionError(f"unknown family {self.family!r}")
        names = {"rigid_rotation": ("omega",),
                 "sine_family": ("omega", "a"),
                 "weierstrass_family": ("omega", "a", "beta", "lam", "K")}[self.family]
        got = tuple(k for k, _ in self.params)
        if got != names:
            raise ConstructionError(f"{self.family} expects parameters {names}, got {got}")
        self._validate()

    @classmethod
    def rigid_rotation(cls, omega):
        return cls("rigid_rotation", (("omega", omega),))

    @classmethod
    def sine_family(cls, omega, a):
        return cls("sine_family", (("omega", omega), ("a", a)))

    @classmethod
    def weierstrass_family(cls, omega, a=None, beta="0.5", lam=2, K=24):
        if a is None:
            a = weierstrass_default_amplitude(beta, lam, K)
        return cls("weierstrass_family",
                   (("omega", omega), ("a", a), ("beta", beta), ("lam", int(lam)), ("K", int(K))))

    def param(self, name):
        return dict(self.params)[name]

    def with_omega(self, omega) -> "CircleMapSpec":
        return replace(self, params=(("omega", omega),) + self.params[1:])

    @property
    def is_affine(self) -> bool:
        if self.family == "rigid_rotation":
            return True
        return _exact(self.param("a")) == 0

    def bind(self, ctx: PrecisionContext = DEFAULT_CONTEXT) -> "CircleMap":
        return CircleMap(self, ctx)

    def describe(self, bits: int = DEFAULT_CONTEXT.bits) -> dict:
        return {"family": self.family,
                "params": {k: to_decimal(v, bits) for k, v in self.params}}

    def _validate(self):
        check = PrecisionContext(128)
        if self.family == "sine_family":
            if not abs(check.mpf(self.param("a"))) < 1:
                raise ConstructionError("sine_family needs |a| < 1 for L' > 0")
        elif self.family == "weierstrass_family":
            lam, K = self.param("lam"), self.param("K")
            beta = check.mpf(self.param("beta"))
            if lam < 2 or K < 1:
                raise ConstructionError("weierstrass_family needs integer lam >= 2 and K >= 1")
            if not 0 < beta <= 1:
                raise ConstructionError("weierstrass_family needs 0 < beta <= 1")
            bound = abs(check.mpf(self.param("a"))) * _weierstrass_slope_bound(beta, lam, K, check)
            if not bound < 1:
                raise ConstructionError(
                    f"weierstrass_family amplitude too large: a*sup|s'| <= {float(bound):.4g} must be < 1")


def _exact(x):
    if isinstance(x, str):
        return Fraction(x)
    return x


def _weierstrass_slope_bound(beta, lam, K, ctx):
    with ctx.local():
        tp = 2 * gmpy2.const_pi()
        return tp * sum(mpfr(lam) ** (-k * (2 + beta)) for k in range(1, K + 1))


def weierstrass_default_amplitude(beta="0.5", lam=2, K=24) -> str:
    """Amplitude with a * sup|s'| = 0.5, as a decimal string."""
    ctx = PrecisionContext(256)
    with ctx.local():
        a = mpfr("0.5") / _weierstrass_slope_bound(ctx.mpf(beta), lam, K, ctx)
        return to_decimal(a, 256)


@dataclass(frozen=True)
class JetValue:
    x: object
    f: object
    f1: object
    f2: object
    f3: object


class CircleMap:
    """A spec bound to a precision: lift values and analytic jets."""

    def __init__(self, spec: CircleMapSpec, ctx: PrecisionContext = DEFAULT_CONTEXT):
        self.spec = spec
        self.ctx = ctx
        self.affine = spec.is_affine
        with ctx.local():
            self.omega = ctx.mpf(spec.param("omega"))
            self.two_pi = 2 * gmpy2.const_pi()
            fam = spec.family
            if fam == "sine_family":
                self.a = ctx.mpf(spec.param("a"))
                self.amp = self.a / self.two_pi
            elif fam == "weierstrass_family":
                self.a = ctx.mpf(spec.param("a"))
                beta = ctx.mpf(spec.param("beta"))
                lam, K = spec.param("lam"), spec.param("K")
                self.lams = [mpz(lam) ** k for k in range(1, K + 1)]
                self.coef = [self.a * mpfr(lam) ** (-k * (3 + beta)) for k in range(1, K + 1)]
                self.freq = [self.two_pi * lk for lk in self.lams]

    # lift and derivatives; x is any real
    def value(self, x):
        with self.ctx.local():
            x = mpfr(x)
            fam = self.spec.family
            if fam == "rigid_rotation" or self.affine:
                return x + self.omega
            if fam == "sine_family":
                return x + self.omega + self.amp * gmpy2.sin(self.two_pi * x)
            s = self._wsum(x, 0)
            return x + self.omega + s

    def d1(self, x):
        with self.ctx.local():
            if self.affine:
                return mpfr(1)
            x = mpfr(x)
            if self.spec.family == "sine_family":
                return 1 + self.a * gmpy2.cos(self.two_pi * x)
            return 1 + self._wsum(x, 1)

    def value_d1(self, x):
        """(L(x), L'(x)) in one pass."""
        with self.ctx.local():
            x = mpfr(x)
            if self.affine:
                return x + self.omega, mpfr(1)
            if self.spec.family == "sine_family":
                s, c = gmpy2.sin_cos(self.two_pi * x)
                return x + self.omega + self.amp * s, 1 + self.a * c
            y = frac(x)
            v = d = mpfr(0)
            for ck, wk, lk in zip(self.coef, self.freq, self.lams):
                s, c = gmpy2.sin_cos(self.two_pi * frac(lk * y))
                v += ck * s
                d += ck * wk * c
            return x + self.omega + v, 1 + d

    def jet(self, x):
        """(f, f', f'', f''') of the lift at x."""
        with self.ctx.local():
            x = mpfr(x)
            if self.affine:
                return x + self.omega, mpfr(1), mpfr(0), mpfr(0)
            if self.spec.family == "sine_family":
                s, c = gmpy2.sin_cos(self.two_pi * x)
                tp = self.two_pi
                return (x + self.omega + self.amp * s, 1 + self.a * c,
                        -tp * self.a * s, -tp * tp * self.a * c)
            y = frac(x)
            v = d1 = d2 = d3 = mpfr(0)
            for ck, wk, lk in zip(self.coef, self.freq, self.lams):
                s, c = gmpy2.sin_cos(self.two_pi * frac(lk * y))
                v += ck * s
                d1 += ck * wk * c
                d2 -= ck * wk * wk * s
                d3 -= ck * wk * wk * wk * c
            return x + self.omega + v, 1 + d1, d2, d3

    def _wsum(self, x, order):
        y = frac(x)
        total = mpfr(0)
        for ck, wk, lk in zip(self.coef, self.freq, self.lams):
            s, c = gmpy2.sin_cos(self.two_pi * frac(lk * y))
            total += ck * (s if order == 0 else wk * c)
        return total

    def schwarzian(self, x):
        with self.ctx.local():
            _, f1, f2, f3 = self.jet(x)
            if f2 == 0 and f3 == 0:
                return mpfr(0)
            r = f2 / f1
            return f3 / f1 - 3 * r * r / 2


def eval_jet(spec: CircleMapSpec, x, ctx: PrecisionContext = DEFAULT_CONTEXT) -> JetValue:
    """Jet of the circle map at x: value reduced mod 1, derivatives of the lift."""
    m = spec.bind(ctx)
    with ctx.local():
        x = frac(ctx.mpf(x))
        f, f1, f2, f3 = m.jet(x)
        return JetValue(x, frac(f), f1, f2, f3)


def schwarzian(spec: CircleMapSpec, x, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """Sf = f'''/f' - (3/2)(f''/f')^2; exactly 0 for rigid rotations."""
    return spec.bind(ctx).schwarzian(ctx.mpf(x))


class OrbitCache:
    """Marked trajectory xi_0..xi_{N-1}; lift values X_i = points[i] + windings[i]."""

    def __init__(self, spec: CircleMapSpec, seed, points: Sequence, windings: Sequence[int],
                 ctx: PrecisionContext):
        self.spec = spec
        self.seed = points[0] if points else seed
        self.points = tuple(points)
        self.windings = tuple(int(w) for w in windings)
        self.precision = ctx
        self._map = None

    @property
    def length(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def map(self) -> CircleMap:
        if self._map is None:
            self._map = self.spec.bind(self.precision)
        return self._map

    @cached_property
    def derivatives(self) -> tuple:
        """T'(xi_i) for every orbit point."""
        m = self.map
        return tuple(m.d1(x) for x in self.points)

    def displacement(self, i: int, j: int, p: int):
        """X_j - X_i - p, with a single rounding."""
        with self.precision.local():
            return (self.points[j] - self.points[i]) + (self.windings[j] - self.windings[i] - p)

    def lift(self, i: int):
        with self.precision.local():
            return self.points[i] + self.windings[i]

    def return_sign(self, m: int, p: int) -> int:
        """Sign of X_m - X_0 - p, i.e. of rho - p/m (0 exactly at a periodic point)."""
        d = self.displacement(0, m, p)
        return (d > 0) - (d < 0)


def iterate_orbit(spec: CircleMapSpec, seed, n: int, ctx: PrecisionContext = DEFAULT_CONTEXT,
                  budget: int = DEFAULT_ORBIT_BUDGET) -> OrbitCache:
    """Orbit of length n starting at ``seed``, reduced mod 1 each step.

    Affine lifts use the closed form seed + i*omega (one rounding per point)
    instead of accumulating n roundings.
    """
    if n < 1:
        raise DomainError("orbit length must be at least 1")
    if n > budget:
        raise ResourceError(f"orbit of length {n} exceeds the budget of {budget} points")
    m = spec.bind(ctx)
    with ctx.local():
        x = frac(ctx.mpf(seed))
        pts, wind = [x], [0]
        if m.affine:
            for i in range(1, n):
                X = x + i * m.omega
                w = int(gmpy2.floor(X))
                pts.append(frac(X))
                wind.append(w)
        else:
            w = 0
            for _ in range(1, n):
                y = m.value(x)
                fl = int(gmpy2.floor(y))
                x = y - fl
                if x >= 1:
                    x -= 1
                    fl += 1
                w += fl
                pts.append(x)
                wind.append(w)
        return OrbitCache(spec, x, pts, wind, ctx)


def _extend(orbit: OrbitCache, n: int, budget: int) -> OrbitCache:
    if n <= orbit.length:
        return orbit
    if n > budget:
        raise ResourceError(f"orbit of length {n} exceeds the budget of {budget} points")
    ctx = orbit.precision
    m = orbit.map
    with ctx.local():
        pts, wind = list(orbit.points), list(orbit.windings)
        if m.affine:
            for i in range(len(pts), n):
                X = pts[0] + i * m.omega
                pts.append(frac(X))
                wind.append(int(gmpy2.floor(X)))
        else:
            x, w = pts[-1], wind[-1]
            for _ in range(len(pts), n):
                y = m.value(x)
                fl = int(gmpy2.floor(y))
                x = y - fl
                if x >= 1:
                    x -= 1
                    fl += 1
                w += fl
                pts.append(x)
                wind.append(w)
    out = OrbitCache(orbit.spec, pts[0], pts, wind, ctx)
    return out


def extend_orbit(orbit: OrbitCache, n: int, budget: int = DEFAULT_ORBIT_BUDGET) -> OrbitCache:
    """Orbit with at least ``n`` points sharing the prefix of ``orbit``."""
    return _extend(orbit, n, budget)


def closest_returns(spec: CircleMapSpec, seed, max_n: int, ctx: PrecisionContext = DEFAULT_CONTEXT,
                    budget: int = DEFAULT_ORBIT_BUDGET):
    """Times q at which |T^q xi_0 - xi_0| (circle distance) beats every earlier iterate.

    Returns [(q, side)], side = +1 when T^q xi_0 lies to the right of xi_0.
    Raises PeriodicOrbitError if the marked point returns onto itself.
    """
    orbit = iterate_orbit(spec, seed, max_n + 1, ctx, budget)
    with ctx.local():
        tol = 16 * ctx.eps
        x0 = orbit.points[0]
        best = None
        out = []
        for q in range(1, orbit.length):
            d = signed_displacement(orbit.points[q], x0)
            dist = abs(d)
            if dist <= tol:
                p = int(round(float(orbit.lift(q) - x0)))
                raise PeriodicOrbitError(q, p)
            if best is None or dist < best:
                best = dist
                out.append((q, 1 if d > 0 else -1))
    _check_return_recurrence(out)
    return out


def _check_return_recurrence(returns):
    qs = [q for q, _ in returns]
    if not qs:
        return
    # q_0 = 1 always; when rho > 1/2 the first return is q_1 = 1 on the left
    if returns[0][1] < 0:
        qs = [1] + qs
    for i in range(2, len(qs)):
        k, r = divmod(qs[i] - qs[i - 2], qs[i - 1])
        if r != 0 or k < 1:
            raise CombinatoricsError(
                f"closest-return times {qs[i - 2]}, {qs[i - 1]}, {qs[i]} do not satisfy a convergent recurrence")
    sides = [s for _, s in returns]
    for a, b in zip(sides, sides[1:]):
        if a == b:
            raise CombinatoricsError("closest returns do not alternate sides")


def _sign_descent(orbit: OrbitCache, depth: int, budget: int):
    """Partial quotients k_1..k_depth of rho(T) read from the orbit's order.

    Uses sign(X_b - X_0 - a) = sign(rho - a/b) on Farey mediants
    a/b = (p_{n-1} + j p_n)/(q_{n-1} + j q_n).  Returns (quotients, orbit).
    """
    ks = []
    p2, q2, p1, q1 = 1, 0, 0, 1  # p_{n-1}, q_{n-1}, p_n, q_n at n = 0
    n = 0
    while len(ks) < depth:
        side_prev = -1 if n % 2 == 0 else 1  # sign(rho - p_{n+1}/q_{n+1}) for j <= k_{n+1}
        if orbit.return_sign(q1, p1) == 0:
            raise PeriodicOrbitError(q1, p1)
        j = 1
        while True:
            a, b = p2 + j * p1, q2 + j * q1
            if b >= orbit.length:
                orbit = _extend(orbit, max(b + 1, min(2 * orbit.length, budget)), budget)
            s = orbit.return_sign(b, a)
            if s == 0:
                raise PeriodicOrbitError(b, a)
            if s != side_prev:
                break
            j += 1
        k = j - 1
        if k < 1:
            raise CombinatoricsError(f"inconsistent orbit order at level {n + 1}")
        ks.append(k)
        p2, q2, p1, q1 = p1, q1, k * p1 + p2, k * q1 + q2
        n += 1
    return ks, orbit


def rotation_number(spec: CircleMapSpec, ctx: PrecisionContext = DEFAULT_CONTEXT, target_depth: int = 10,
                    seed=0, budget: int = DEFAULT_ORBIT_BUDGET):
    """Rotation number from the orbit combinatorics, to ``target_depth`` quotients.

    Returns (rho, cf).  rho = (X_{q_M} - X_0)/q_M with M = target_depth + 1
    lies strictly between p_{M-1}/q_{M-1} and p_M/q_M, so its expansion
    agrees with the orbit's quotients to ``target_depth``.
    """
    with ctx.local():
        if spec.is_affine:
            omega = ctx.mpf(spec.param("omega"))
            rho = frac(omega)
            if rho == 0:
                raise PeriodicOrbitError(1, int(omega))
            return rho, cf_expand(rho, target_depth, ctx)
        omega = ctx.mpf(spec.param("omega"))
        spec = spec.with_omega(frac(omega))
        orbit = iterate_orbit(spec, seed, 64, ctx, budget)
        try:
            ks, orbit = _sign_descent(orbit, target_depth + 1, budget)
        except ResourceError as exc:
            raise ResourceError(f"{exc} (rotation number may be rational or depth too large)") from exc
        _, qs = convergents(ks)
        qm = qs[len(ks) + 1]
        rho = orbit.displacement(0, qm, 0) / qm
        cf = cf_expand(rho, target_depth, ctx)
        if list(cf.quotients) != ks[:target_depth]:
            raise CombinatoricsError(
                f"rho estimate expands to {cf.quotients}, orbit gives {ks[:target_depth]}")
        return rho, cf


def _compare_to_target(m: CircleMap, target_q, target_p, sides, budget):
    """-1 if rho(T) < target, +1 if larger, 0 if they agree at every convergent checked."""
    need = target_q[-1]
    if need > budget:
        raise ResourceError(f"comparison needs {need} iterates, budget is {budget}")
    ctx = m.ctx
    with ctx.local():
        X = mpfr(0)
        t = 0
        for q, p, s in zip(target_q, target_p, sides):
            while t < q:
                X = m.value(X)
                t += 1
            g = X - p
            if s > 0 and g <= 0:
                return -1
            if s < 0 and g >= 0:
                return 1
        return 0


def tune_parameter(family: CircleMapSpec, target: ContinuedFraction, tol, ctx: PrecisionContext = DEFAULT_CONTEXT,
                   lo=0, hi=1, budget: int = DEFAULT_ORBIT_BUDGET, max_steps: int = 400):
    """Bisect omega so that rho(T_omega) matches ``target`` within ``tol``.

    rho is compared with the target through the orbit of 0 at the target's
    convergents p_n/q_n, deep enough that 1/(q_{D-1} q_D) <= tol.  A
    terminating (rational) target raises ModeLockingError carrying the
    parameter interval on which that rotation number is realized.
    """
    with ctx.local():
        tol = ctx.mpf(tol)
        if tol <= 16 * ctx.eps:
            raise DomainError("tolerance must exceed 16*eps")
        if family.is_affine:
            return ctx.mpf(target.rho)
        if target.terminated:
            raise ModeLockingError(target.p(target.depth), target.q(target.depth),
                                   _locking_interval(family, target, ctx, lo, hi, budget))
        cf = _deepen(target, tol, ctx, budget)
        qs = [cf.q(n) for n in range(cf.depth + 1)]
        ps = [cf.p(n) for n in range(cf.depth + 1)]
        sides = [1 if n % 2 == 0 else -1 for n in range(cf.depth + 1)]
        lo, hi = ctx.mpf(lo), ctx.mpf(hi)

        def cmp(omega):
            return _compare_to_target(family.with_omega(omega).bind(ctx), qs, ps, sides, budget)

        if cmp(lo) > 0 or cmp(hi) < 0:
            raise DomainError("bisection bracket does not contain the target rotation number")
        for _ in range(max_steps):
            mid = (lo + hi) / 2
            c = cmp(mid)
            if c == 0:
                return mid
            if c < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4 * ctx.eps:
                break
        raise ResourceError("bisection did not reach the target cylinder (precision too low?)")


def _deepen(target: ContinuedFraction, tol, ctx, budget) -> ContinuedFraction:
    cf = target
    depth = 1
    while True:
        if depth > cf.depth:
            cf = cf_expand(target.rho, depth + 8, ctx)
            if cf.depth < depth:
                raise ResourceError("target rotation number lacks precision for this tolerance")
            cf = ContinuedFraction(target.rho, cf.quotients, cf.numerators, cf.denominators, False, cf.bits)
        q_prev, q = cf.q(depth - 1), cf.q(depth)
        if q > budget:
            raise ResourceError(
                f"tolerance {float(tol):.3g} needs orbits of length {q} beyond the budget {budget}")
        if mpfr(1) / (q_prev * q) <= tol:
            return ContinuedFraction(cf.rho, cf.quotients[:depth], cf.numerators[:depth + 2],
                                     cf.denominators[:depth + 2], False, cf.bits)
        depth += 1


def _locking_interval(family: CircleMapSpec, target: ContinuedFraction, ctx, lo, hi, budget,
                      grid: int = 64, steps: int = 80):
    p, q = target.p(target.depth), target.q(target.depth)
    if q * grid > budget:
        raise ResourceError("locking-interval search exceeds the orbit budget")
    xs = [mpfr(i) / grid for i in range(grid)]

    def extremes(omega):
        m = family.with_omega(omega).bind(ctx)
        vals = []
        for x in xs:
            y = x
            for _ in range(q):
                y = m.value(y)
            vals.append(y - x - p)
        return min(vals), max(vals)

    def below(omega):  # rho(omega) < p/q
        return extremes(omega)[1] < 0

    def above(omega):
        return extremes(omega)[0] > 0

    a, b = ctx.mpf(lo), ctx.mpf(hi)
    if not below(a) or not above(b):
        raise DomainError("bracket does not straddle the target rational")
    l_lo, l_hi = a, b
    for _ in range(steps):
        mid = (l_lo + l_hi) / 2
        if below(mid):
            l_lo = mid
        else:
            l_hi = mid
    r_lo, r_hi = l_hi, b
    for _ in range(steps):
        mid = (r_lo + r_hi) / 2
        if above(mid):
            r_hi = mid
        else:
            r_lo = mid
    return (l_hi, r_lo)


def weierstrass_series(xs, beta: float, lam: int = 2, K: int = 24, order: int = 3):
    """Float64 evaluation of d^order/dx^order of s(x) = sum lam^{-k(3+beta)} sin(2 pi lam^k x)."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros_like(xs)
    for k in range(1, K + 1):
        w = 2 * np.pi * lam ** k
        c = lam ** (-k * (3 + beta)) * w ** order
        phase = 2 * np.pi * np.mod(lam ** k * xs, 1.0)
        out += c * [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][order % 4](phase)
    return out


# --- persistence -------------------------------------------------------------

_MAGIC = b"CLORBIT1\n"
_EXP = struct.Struct(">q")


def save_orbit(orbit: OrbitCache, path) -> None:
    """Binary file: magic, JSON header line, then fixed-width hex records.

    Each record is sign(1) + mantissa (ceil(bits/4) hex digits) + exponent
    (16 hex digits, two's complement) + winding (16 hex digits).
    """
    bits = orbit.precision.bits
    header = {"family": orbit.spec.family,
              "params": {k: to_decimal(v, bits) for k, v in orbit.spec.params},
              "bits": bits, "length": orbit.length}
    width = (bits + 3) // 4
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for x, w in zip(orbit.points, orbit.windings):
            # points are already mpfr; mpfr(x) here would round to 53 bits
            mant, exp = x.as_mantissa_exp()
            sign = b"-" if mant < 0 else b"+"
            fh.write(sign + f"{abs(int(mant)):0{width}x}".encode()
                     + f"{int(exp) & (2**64 - 1):016x}".encode()
                     + f"{int(w) & (2**64 - 1):016x}".encode())
    tmp.replace(path)


def _signed64(v: int) -> int:
    return v - 2**64 if v >= 2**63 else v


def load_orbit(path) -> OrbitCache:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise DomainError(f"{path} is not an orbit file")
        header = json.loads(fh.readline())
        bits = header["bits"]
        ctx = PrecisionContext(bits)
        width = (bits + 3) // 4
        rec = 1 + width + 32
        data = fh.read()
    n = header["length"]
    if len(data) != n * rec:
        raise DomainError("orbit file is truncated")
    params = header["params"]
    fam = header["family"]
    order = {"rigid_rotation": ("omega",), "sine_family": ("omega", "a"),
             "weierstrass_family": ("omega", "a", "beta", "lam", "K")}[fam]
    vals = tuple((k, int(params[k]) if k in ("lam", "K") else params[k]) for k in order)
    spec = CircleMapSpec(fam, vals)
    pts, wind = [], []
    with ctx.local():
        for i in range(n):
            r = data[i * rec:(i + 1) * rec].decode()
            mant = int(r[1:1 + width], 16)
            if r[0] == "-":
                mant = -mant
            exp = _signed64(int(r[1 + width:17 + width], 16))
            w = _signed64(int(r[17 + width:], 16))
            pts.append(gmpy2.mul_2exp(mpfr(mant), exp))
            wind.append(w)
    return OrbitCache(spec, pts[0], pts, wind, ctx)
