"""Dynamical partitions, Denjoy-type scans and renormalization identities.

Points near the marked point xi_0 are handled in local lift coordinates
t = X - X_0 - s for a chosen integer shift s.  The orbit point xi_i with
shift s has local coordinate ``orbit.displacement(0, i, s)``, computed with
a single rounding.  Iterates T^q are represented by :class:`OrbitIterate`,
which remembers the images and derivatives of registered orbit points so
that every identity is checked on one consistent set of numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .circlemap import (
    DEFAULT_ORBIT_BUDGET,
    CircleMapSpec,
    OrbitCache,
    extend_orbit,
    iterate_orbit,
)
from .crossratio import Quad, cross_ratio_distortion, identity_tolerance, ratio_distortion
from .errors import CombinatoricsError, DomainError, VerificationError
from .numerics import (
    DEFAULT_CONTEXT,
    PrecisionContext,
    ScaleFitReport,
    chebyshev_nodes,
    log_log_fit,
    signed_displacement,
    to_decimal,
)
from .rotnum import ContinuedFraction, GapSequence, gap_sequence

__all__ = [
    "OrbitIterate",
    "DynamicalPartition",
    "DenjoyLevel",
    "DenjoyReport",
    "SchwarzSums",
    "MKFunctions",
    "IdentityResiduals",
    "build_partition",
    "first_return_check",
    "denjoy_scan",
    "BaselineConstant",
    "baseline_constant",
    "e_n_sigma",
    "epsilon_n_alpha",
    "mk_functions",
    "m_ratio_check",
    "exact_identities_check",
    "schwarz_sums",
    "schwarz_decay",
    "dist_diagnostic",
    "level_rows",
    "write_level_csv",
]

GUARD_BITS = 32


class OrbitIterate:
    """T^q in local coordinates around xi_0, as a map with jet.

    value(t) = L^q(X_0 + t) - X_0 - (s + p_q) for a point with shift s;
    for registered orbit points the image is read from the orbit and the
    derivative is the chain-rule product of cached T' values.
    """

    def __init__(self, orbit: OrbitCache, q: int, p: int):
        self.orbit = orbit
        self.q = q
        self.p = p
        self.ctx = orbit.precision
        self.affine = orbit.map.affine
        self._table = {}

    def point(self, i: int, shift: int):
        """Local coordinate of xi_i (shift s), registered with its image."""
        if i + self.q >= self.orbit.length:
            raise DomainError(f"orbit of length {self.orbit.length} too short for index {i} + {self.q}")
        u = self.orbit.displacement(0, i, shift)
        if u not in self._table:
            img = self.orbit.displacement(0, i + self.q, shift + self.p)
            self._table[u] = (img, self._orbit_d1(i))
        return u

    def _orbit_d1(self, i):
        if self.affine:
            return mpfr(1)
        der = self.orbit.derivatives
        with gmpy2.context(gmpy2.get_context(), precision=self.ctx.bits + GUARD_BITS):
            prod = mpfr(1)
            for j in range(i, i + self.q):
                prod *= der[j]
        with self.ctx.local():
            return +prod

    def _iterate(self, t, want_jet=False):
        m = self.orbit.map
        x0 = self.orbit.points[0]
        with self.ctx.local():
            x = x0 + t
            w = int(gmpy2.floor(x))
            y = x - w
            d1, d2, d3 = mpfr(1), mpfr(0), mpfr(0)
            for _ in range(self.q):
                if want_jet:
                    v, f1, f2, f3 = m.jet(y)
                    d1, d2, d3 = (f1 * d1, f2 * d1 * d1 + f1 * d2,
                                  f3 * d1 ** 3 + 3 * f2 * d1 * d2 + f1 * d3)
                else:
                    v, f1 = m.value_d1(y)
                    d1 *= f1
                fl = int(gmpy2.floor(v))
                y = v - fl
                w += fl
            val = (y - x0) + (w - self.p)
            return val, d1, d2, d3

    def value(self, t):
        hit = self._table.get(t)
        if hit is not None:
            return hit[0]
        return self._iterate(t)[0]

    def d1(self, t):
        if self.affine:
            return mpfr(1)
        hit = self._table.get(t)
        if hit is not None:
            return hit[1]
        return self._iterate(t)[1]

    def jet(self, t):
        if self.affine:
            with self.ctx.local():
                return self.value(t), mpfr(1), mpfr(0), mpfr(0)
        return self._iterate(t, want_jet=True)


def _sign(x):
    return (x > 0) - (x < 0)


@dataclass
class DynamicalPartition:
    """n-th dynamical partition of the marked orbit.

    ``long_lengths[i]`` = |Delta_i^{(n-1)}| for 0 <= i < q_n and
    ``short_lengths[i]`` = |Delta_i^{(n)}| for 0 <= i < q_{n-1};
    ``successor[i]`` is the index of N_n(xi_i).
    """

    level: int
    orbit: OrbitCache
    cf: ContinuedFraction
    long_lengths: tuple
    short_lengths: tuple
    successor: tuple
    total_length: object

    @property
    def q_n(self) -> int:
        return self.cf.q(self.level)

    @property
    def q_prev(self) -> int:
        return self.cf.q(self.level - 1)

    @property
    def ctx(self) -> PrecisionContext:
        return self.orbit.precision

    @property
    def point_count(self) -> int:
        return self.q_n + self.q_prev

    @property
    def segment_count(self) -> int:
        return len(self.long_lengths) + len(self.short_lengths)

    @property
    def max_length(self):
        return max(self.long_lengths + self.short_lengths)

    def fundamental_length(self, m: int):
        """|Delta_0^{(m)}| = |xi_{q_m} - xi_0| for -1 <= m <= level."""
        return abs(self.orbit.displacement(0, self.cf.q(m), self.cf.p(m)))


def _check_dyn_conv(orbit: OrbitCache, cf: ContinuedFraction, n: int):
    prev = None
    for m in range(-1, n + 1):
        q, p = cf.q(m), cf.p(m)
        d = orbit.displacement(0, q, p)
        want = 1 if m % 2 == 0 else -1
        if _sign(d) != want:
            raise CombinatoricsError(
                f"dynamical convergent xi_{q} (level {m}) lies on the wrong side of xi_0; "
                f"rotation number or precision inconsistent with the quotients")
        if prev is not None and not abs(d) < abs(prev[1]):
            raise CombinatoricsError(
                f"dynamical convergents out of order: |xi_{q} - xi_0| >= |xi_{prev[0]} - xi_0| "
                f"(levels {m} and {m - 1})")
        prev = (q, d)


def build_partition(source, cf: ContinuedFraction, n: int, ctx: PrecisionContext | None = None,
                    seed=0, budget: int = DEFAULT_ORBIT_BUDGET) -> DynamicalPartition:
    """Build P_n and verify ordering, covering and the successor law.

    ``source`` is an OrbitCache or a CircleMapSpec (iterated from ``seed``).
    The orbit is extended to q_n + q_{n-1} + 1 points so that level-n
    iterates of every endpoint are available.
    """
    if n < 1:
        raise DomainError("partition level must be at least 1")
    if n > cf.depth:
        raise DomainError(f"continued fraction depth {cf.depth} < level {n}")
    qn, qp = cf.q(n), cf.q(n - 1)
    need = qn + qp + 1
    if isinstance(source, CircleMapSpec):
        orbit = iterate_orbit(source, seed, need, ctx or DEFAULT_CONTEXT, budget)
    else:
        orbit = extend_orbit(source, need, budget)
    ctx = orbit.precision
    _check_dyn_conv(orbit, cf, n)
    N = qn + qp
    with ctx.local():
        sn = 1 if n % 2 == 0 else -1
        short = tuple(sn * orbit.displacement(i, i + qn, cf.p(n)) for i in range(qp))
        long_ = tuple(-sn * orbit.displacement(i, i + qp, cf.p(n - 1)) for i in range(qn))
        for kind, seq in (("short", short), ("long", long_)):
            for i, v in enumerate(seq):
                if not v > 0:
                    raise CombinatoricsError(f"{kind} segment {i} at level {n} has non-positive length")
        expected = tuple(i + qn if i < qp else i - qp for i in range(N))
        order = sorted(range(N), key=lambda i: orbit.points[i])
        pts = [orbit.points[i] for i in order]
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise CombinatoricsError("coincident orbit points: precision too low for this level")
        pos = {i: k for k, i in enumerate(order)}
        for i in range(N):
            got = order[(pos[i] + sn) % N]
            if got != expected[i]:
                before = order[(pos[i] - sn) % N]
                raise CombinatoricsError(
                    f"circular order violates the partition at (xi_{before}, xi_{i}, xi_{got}); "
                    f"expected successor xi_{expected[i]}")
        total = sum(short) + sum(long_)
        tol = 64 * ctx.eps * N
        if abs(total - 1) > tol:
            raise CombinatoricsError(f"partition segments sum to {float(total)!r}, not 1")
    return DynamicalPartition(n, orbit, cf, long_, short, expected, total)


def first_return_check(partition: DynamicalPartition, sample_count: int = 8) -> bool:
    """T^{q_n} maps Delta_0^{(n-1)} into Delta_0^{(n-1)} u Delta_0^{(n)} (on samples)."""
    n, cf, orbit = partition.level, partition.cf, partition.orbit
    g = OrbitIterate(orbit, cf.q(n), cf.p(n))
    ctx = partition.ctx
    with ctx.local():
        a = orbit.displacement(0, cf.q(n - 1), cf.p(n - 1))
        b = orbit.displacement(0, cf.q(n), cf.p(n))
        lo, hi = min(a, b), max(a, b)
        for t in chebyshev_nodes(0, a, sample_count, ctx)[1:-1]:
            y = g.value(t)
            if not lo <= y <= hi:
                return False
    return True


@dataclass(frozen=True)
class DenjoyLevel:
    n: int
    q: int
    sup_dev: object
    max_len: object
    delta: object


@dataclass(frozen=True)
class DenjoyReport:
    per_level: tuple
    fitted_nu: ScaleFitReport | None
    nu: float
    fit_levels: tuple = ()

    @property
    def rigid(self) -> bool:
        return self.fitted_nu is None and math.isinf(self.nu)

    def eps_series(self, alpha=1):
        """epsilon_{n,alpha} from the sampled lengths l_0..l_n at each level."""
        ls = [lv.max_len for lv in self.per_level]
        return [epsilon_n_alpha(ls, i, alpha) for i in range(len(ls))]


def denjoy_scan(spec: CircleMapSpec, cf: ContinuedFraction, n_max: int, sample_count: int = 64,
                ctx: PrecisionContext = DEFAULT_CONTEXT, fit_from: int = 3,
                budget: int = DEFAULT_ORBIT_BUDGET) -> DenjoyReport:
    """sup |(T^{q_n})' - 1| and max |Delta^{(n)}(xi)| over equispaced xi, n = 0..n_max.

    All sample orbits are advanced together; derivatives are chain-rule
    products of T'.  nu is the slope of log sup_dev against log Delta_n over
    levels fit_from..n_max.
    """
    if n_max > cf.depth:
        raise DomainError(f"continued fraction depth {cf.depth} < n_max {n_max}")
    q_top = cf.q(n_max)
    if q_top * sample_count > budget:
        raise DomainError(f"q_{n_max} * samples = {q_top * sample_count} exceeds the budget {budget}")
    m = spec.bind(ctx)
    gaps = gap_sequence(cf, ctx)
    stops = {cf.q(k): k for k in range(n_max, -1, -1)}
    with ctx.local():
        starts = [mpfr(j) / sample_count for j in range(sample_count)]
        ys = list(starts)
        ws = [0] * sample_count
        ds = [mpfr(1)] * sample_count
        rows = {}
        for step in range(1, q_top + 1):
            for j in range(sample_count):
                if m.affine:
                    v = ys[j] + m.omega
                else:
                    v, f1 = m.value_d1(ys[j])
                    ds[j] *= f1
                fl = int(gmpy2.floor(v))
                ys[j] = v - fl
                ws[j] += fl
            if step in stops:
                # q_0 = q_1 = 1 when k_1 = 1: record every level sharing this q
                for k in range(n_max + 1):
                    if cf.q(k) != step:
                        continue
                    p = cf.p(k)
                    sup_dev = max(abs(d - 1) for d in ds)
                    max_len = max(abs((ys[j] - starts[j]) + (ws[j] - p)) for j in range(sample_count))
                    rows[k] = DenjoyLevel(k, step, sup_dev, max_len, gaps.delta(k))
        per_level = tuple(rows[k] for k in range(n_max + 1))
        usable = [lv for lv in per_level if lv.n >= fit_from and lv.sup_dev > 0]
        if not usable:
            return DenjoyReport(per_level, None, math.inf)
        fit = log_log_fit([lv.delta for lv in usable], [lv.sup_dev for lv in usable], ctx)
        return DenjoyReport(per_level, fit, float(fit.slope), tuple(lv.n for lv in usable))


@dataclass(frozen=True)
class BaselineConstant:
    levels: tuple
    ratios: tuple
    constant: float
    worst_factor: float
    spread: float


def baseline_constant(report: DenjoyReport, lo: int = 4, alpha=1) -> BaselineConstant:
    """C with sup_dev(n) ~ C eps_{n,alpha}, fitted in log space over levels lo..n_max.

    ``worst_factor`` is max_n max(C_n/C, C/C_n) for the per-level ratios
    C_n; ``spread`` is max C_n / min C_n.
    """
    eps = report.eps_series(alpha)
    pairs = [(lv.n, float(lv.sup_dev / e)) for lv, e in zip(report.per_level, eps) if lv.n >= lo]
    if len(pairs) < 2 or any(r <= 0 for _, r in pairs):
        raise DomainError("baseline fit needs two levels with positive deviation")
    logs = [math.log(r) for _, r in pairs]
    c = math.exp(sum(logs) / len(logs))
    ratios = tuple(r for _, r in pairs)
    worst = max(max(r / c, c / r) for r in ratios)
    return BaselineConstant(tuple(n for n, _ in pairs), ratios, c, worst, max(ratios) / min(ratios))


def e_n_sigma(gaps: GapSequence, n: int, sigma, ctx: PrecisionContext | None = None):
    """E_{n,sigma} = sum_{k=0..n} (Delta_n/Delta_{n-k}) Delta_{n-k-1}^sigma, Delta_{-1} = 1."""
    if n < 0 or n > gaps.depth:
        raise DomainError(f"gap sequence of depth {gaps.depth} does not reach level {n}")
    ctx = ctx or PrecisionContext(gaps.cf.bits)
    with ctx.local():
        s = ctx.mpf(sigma)
        dn = gaps.delta(n)
        return sum(dn / gaps.delta(n - k) * _pow(gaps.delta(n - k - 1), s) for k in range(n + 1))


def _pow(x, s):
    return mpfr(1) if s == 0 else x ** s


def epsilon_n_alpha(lengths: Sequence, n: int, alpha, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """epsilon_{n,alpha} = l_{n-1}^a + (l_n/l_{n-1}) l_{n-2}^a + ... + l_n/l_0 (l_{-1} = 1)."""
    if n < 0 or n >= len(lengths):
        raise DomainError(f"need lengths l_0..l_{n}, got {len(lengths)} values")
    with ctx.local():
        a = ctx.mpf(alpha)
        ls = [mpfr(1)] + [ctx.mpf(v) for v in lengths]  # ls[m + 1] = l_m

        def l(m):
            return ls[m + 1]
        return sum(l(n) / l(n - k) * _pow(l(n - k - 1), a) for k in range(n + 1))


def _level_iterate(orbit, cf, m):
    return OrbitIterate(orbit, cf.q(m), cf.p(m))


@dataclass(frozen=True)
class MKFunctions:
    level: int
    M_samples: tuple
    K_samples: tuple
    m_n: object
    observ1_residual: object
    observ1_tolerance: object


def mk_functions(partition: DynamicalPartition, sample_count: int = 16) -> MKFunctions:
    """M_n on Delta_0^{(n-1)} and K_n on Delta_0^{(n-2)}, Chebyshev nodes plus endpoints."""
    n, cf = partition.level, partition.cf
    if n < 1:
        raise DomainError("M_n, K_n need n >= 1")
    orbit = partition.orbit
    ctx = orbit.precision
    M = _level_iterate(orbit, cf, n)
    K = _level_iterate(orbit, cf, n - 1)
    with ctx.local():
        u0m = M.point(0, 0)
        a = M.point(cf.q(n - 1), cf.p(n - 1))
        u0k = K.point(0, 0)
        b = K.point(cf.q(n), cf.p(n))
        end_k = K.point(cf.q(n - 2), cf.p(n - 2))
        m_samples = tuple((t, ratio_distortion(u0m, t, a, M).value)
                          for t in chebyshev_nodes(0, a, sample_count, ctx))
        k_samples = tuple((t, ratio_distortion(u0k, t, b, K).value)
                          for t in chebyshev_nodes(0, end_k, sample_count, ctx))
        lhs = m_samples[0][1] * m_samples[-1][1]
        k_at_b = ratio_distortion(u0k, b, b, K).value
        rhs = k_samples[0][1] * k_at_b
        res = abs(lhs - rhs)
        tol = identity_tolerance(ctx, lhs, rhs)
        return MKFunctions(n, m_samples, k_samples, gmpy2.sqrt(lhs), res, tol)


def m_ratio_check(partition: DynamicalPartition, t, s):
    """|M_n(t)/M_n(s) - Dist(xi_0, t, xi_{q_{n-1}}, s; T^{q_n})| and its tolerance."""
    n, cf, orbit = partition.level, partition.cf, partition.orbit
    ctx = orbit.precision
    g = _level_iterate(orbit, cf, n)
    with ctx.local():
        u0 = g.point(0, 0)
        a = g.point(cf.q(n - 1), cf.p(n - 1))
        ratio = ratio_distortion(u0, t, a, g).value / ratio_distortion(u0, s, a, g).value
        dist = cross_ratio_distortion(Quad(u0, t, a, s), g).value
        return abs(ratio - dist), identity_tolerance(ctx, ratio, dist)


@dataclass(frozen=True)
class IdentityResiduals:
    level: int
    observ1: object
    observ2: object
    observ3: object
    tolerances: tuple

    @property
    def passed(self) -> bool:
        return all(r <= t for r, t in zip((self.observ1, self.observ2, self.observ3), self.tolerances))


def exact_identities_check(partitions: Sequence[DynamicalPartition], raise_on_fail: bool = False
                           ) -> IdentityResiduals:
    """Residuals of the three exact M/K relations at the middle level n.

    ``partitions`` are P_{n-1}, P_n, P_{n+1} sharing the marked point; the
    longest orbit among them is used for every evaluation.
    """
    if len(partitions) != 3:
        raise DomainError("need partitions at levels n-1, n, n+1")
    levels = [p.level for p in partitions]
    if levels[1] != levels[0] + 1 or levels[2] != levels[1] + 1:
        raise DomainError(f"partition levels {levels} are not consecutive")
    seeds = {p.orbit.points[0] for p in partitions}
    if len(seeds) != 1:
        raise DomainError("partitions do not share the marked point")
    top = max(partitions, key=lambda p: p.orbit.length)
    orbit, cf = top.orbit, top.cf
    n = levels[1]
    ctx = orbit.precision
    with ctx.local():
        g_n, g_n1, g_p = (_level_iterate(orbit, cf, m) for m in (n, n + 1, n - 1))
        # observ1 at level n
        u0 = g_n.point(0, 0)
        a = g_n.point(cf.q(n - 1), cf.p(n - 1))
        m0 = ratio_distortion(u0, u0, a, g_n).value
        ma = ratio_distortion(u0, a, a, g_n).value
        k0_ = g_p.point(0, 0)
        b = g_p.point(cf.q(n), cf.p(n))
        k0 = ratio_distortion(k0_, k0_, b, g_p).value
        kb = ratio_distortion(k0_, b, b, g_p).value
        r1 = abs(m0 * ma - k0 * kb)
        t1 = identity_tolerance(ctx, m0 * ma, k0 * kb)
        # observ2: K_{n+1}(xi_{q_{n-1}}) - 1 = (|D^{(n+1)}|/|D^{(n-1)}|)(M_n(xi_{q_{n+1}}) - 1)
        c = g_n.point(cf.q(n + 1), cf.p(n + 1))
        K_ = ratio_distortion(u0, a, c, g_n).value
        M_ = ratio_distortion(u0, c, a, g_n).value
        ratio2 = abs(c) / abs(a)
        lhs2, rhs2 = K_ - 1, ratio2 * (M_ - 1)
        r2 = abs(lhs2 - rhs2)
        t2 = identity_tolerance(ctx, K_, 1, ratio2 * M_, ratio2)
        # observ3: T'^{q_{n+1}}(xi_0)/M_{n+1}(xi_0) - 1 = (|D^{(n+1)}|/|D^{(n)}|)(1 - T'^{q_n}(xi_0)/K_{n+1}(xi_0))
        v0 = g_n1.point(0, 0)
        bq = g_n1.point(cf.q(n), cf.p(n))
        c = g_n.point(cf.q(n + 1), cf.p(n + 1))
        d_up = g_n1.d1(v0)
        d_n = g_n.d1(u0)
        M1 = ratio_distortion(v0, v0, bq, g_n1).value
        K1 = ratio_distortion(u0, u0, c, g_n).value
        ratio3 = abs(c) / abs(bq)
        lhs3, rhs3 = d_up / M1 - 1, ratio3 * (1 - d_n / K1)
        r3 = abs(lhs3 - rhs3)
        t3 = identity_tolerance(ctx, d_up / M1, 1, ratio3, ratio3 * d_n / K1)
    out = IdentityResiduals(n, r1, r2, r3, (t1, t2, t3))
    if raise_on_fail and not out.passed:
        raise VerificationError(f"exact M/K identities fail at level {n}: "
                                f"{[float(x) for x in (r1, r2, r3)]}")
    return out


@dataclass(frozen=True)
class SchwarzSums:
    level: int
    p_sum: object
    pbar_sum: object
    xi_hat_sum: object
    two_path_residual: object
    tolerance: object
    density_source: object = field(default=None, repr=False)


def schwarz_sums(partition: DynamicalPartition, density) -> SchwarzSums:
    """p_n, pbar_n by their index sums, and the same total via the successor map.

    ``density`` must provide ``h_at(i, x)``: the density at orbit point xi_i
    (coordinate x), raising DomainError when it is unavailable.
    """
    n, cf, orbit = partition.level, partition.cf, partition.orbit
    ctx = orbit.precision
    qn, qp = cf.q(n), cf.q(n - 1)
    m = orbit.map
    with ctx.local():
        pts = orbit.points
        st = {}
        hv = {}

        def weight(i):
            if i not in st:
                st[i] = m.schwarzian(pts[i])
                h = density.h_at(i, pts[i])
                if not h > 0:
                    raise DomainError(f"density not positive at xi_{i}")
                hv[i] = h
            return st[i] / hv[i]

        p_terms = [weight(i) * -orbit.displacement(i, i + qp, cf.p(n - 1)) for i in range(qn)]
        pb_terms = [weight(i + qn) * orbit.displacement(i, i + qn, cf.p(n)) for i in range(qp)]
        p_sum, pbar = sum(p_terms), sum(pb_terms)
        hat_terms = []
        for i in range(qn + qp):
            j = partition.successor[i]
            hat_terms.append(weight(j) * signed_displacement(pts[j], pts[i]))
        hat = sum(hat_terms)
        res = abs(p_sum + pbar - hat)
        scale = max([abs(x) for x in p_terms + pb_terms + hat_terms] + [mpfr(0)])
        tol = 64 * ctx.eps * (qn + qp) * scale
        return SchwarzSums(n, p_sum, pbar, hat, res, tol, density)


def schwarz_decay(sums: Sequence[SchwarzSums], gaps: GapSequence, ctx: PrecisionContext = DEFAULT_CONTEXT
                  ) -> ScaleFitReport:
    """Slope of log |p_n| against log Delta_{n-1}."""
    xs = [gaps.delta(s.level - 1) for s in sums]
    ys = [abs(s.p_sum) for s in sums]
    return log_log_fit(xs, ys, ctx)


def dist_diagnostic(partition: DynamicalPartition, sample_count: int = 8):
    """max |Dist(xi_0, t, xi_{q_{n-1}}, s; T^{q_n}) - 1| / |t - s| over Chebyshev pairs."""
    n, cf, orbit = partition.level, partition.cf, partition.orbit
    ctx = orbit.precision
    g = _level_iterate(orbit, cf, n)
    with ctx.local():
        u0 = g.point(0, 0)
        a = g.point(cf.q(n - 1), cf.p(n - 1))
        nodes = chebyshev_nodes(0, a, sample_count, ctx)[1:-1]
        best = mpfr(0)
        for i, t in enumerate(nodes):
            for s in nodes[i + 1:]:
                d = cross_ratio_distortion(Quad(u0, t, a, s), g).value
                best = max(best, abs(d - 1) / abs(t - s))
        return best


LEVEL_COLUMNS = ("n", "q_n", "delta_n", "sup_dev", "E_n1", "eps_n1", "p_sum", "pbar_sum",
                 "observ1_res", "observ2_res", "observ3_res")


def level_rows(levels: Sequence[int], orbit_spec: CircleMapSpec, cf: ContinuedFraction, density=None,
               ctx: PrecisionContext = DEFAULT_CONTEXT, seed=0, sample_count: int = 64,
               budget: int = DEFAULT_ORBIT_BUDGET) -> list[dict]:
    """Per-level report rows; identities need level + 1 <= cf.depth."""
    levels = sorted(levels)
    top = levels[-1] + 1
    q_need = cf.q(top) + cf.q(top - 1) + 1
    orbit = iterate_orbit(orbit_spec, seed, q_need, ctx, budget)
    gaps = gap_sequence(cf, ctx)
    scan = denjoy_scan(orbit_spec, cf, levels[-1], sample_count, ctx, budget=budget)
    eps = scan.eps_series(1)
    parts = {}

    def part(n):
        if n not in parts:
            parts[n] = build_partition(orbit, cf, n)
        return parts[n]
    rows = []
    for n in levels:
        row = {"n": n, "q_n": cf.q(n), "delta_n": gaps.delta(n),
               "sup_dev": scan.per_level[n].sup_dev, "E_n1": e_n_sigma(gaps, n, 1, ctx),
               "eps_n1": eps[n]}
        if density is not None and n >= 1:
            ss = schwarz_sums(part(n), density)
            row["p_sum"], row["pbar_sum"] = ss.p_sum, ss.pbar_sum
        else:
            row["p_sum"] = row["pbar_sum"] = ""
        if n >= 2:
            ids = exact_identities_check([part(n - 1), part(n), part(n + 1)])
            row["observ1_res"], row["observ2_res"], row["observ3_res"] = ids.observ1, ids.observ2, ids.observ3
        else:
            row["observ1_res"] = row["observ2_res"] = row["observ3_res"] = ""
        rows.append(row)
    return rows


def write_level_csv(rows: Sequence[dict], path, bits: int = 64) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEVEL_COLUMNS)
        for r in rows:
            w.writerow([v if isinstance(v, (int, str)) else to_decimal(v, bits) for v in
                        (r[c] for c in LEVEL_COLUMNS)])
