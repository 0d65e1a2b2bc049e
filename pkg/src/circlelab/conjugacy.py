"""Conjugacy samples, invariant density, Hoelder exponents and the exponent schedule.

On the marked orbit the conjugacy is known exactly: phi(xi_i) = i rho mod 1
with phi(xi_0) = 0.  Densities come either from divided differences of
these samples, or from the homologic equation h(xi) = T'(xi) h(T xi) along
the orbit (exact up to one normalising constant).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from gmpy2 import mpfr

from .circlemap import CircleMapSpec, OrbitCache
from .errors import DegenerateSampleError, DomainError, InconsistentRotationError
from .numerics import DEFAULT_CONTEXT, PrecisionContext, ScaleFitReport, frac, slope_fit

__all__ = [
    "rho_depth_for",
    "ConjugacySamples",
    "DensityEstimate",
    "RegularityEstimate",
    "ExponentSchedule",
    "PredictedRegularity",
    "conjugacy_samples",
    "density_estimate",
    "orbit_density",
    "homologic_residual",
    "holder_exponent",
    "exponent_schedule",
    "predicted_regularity",
    "conjugacy_report",
    "CAP_THRESHOLD",
]

CAP_THRESHOLD = 0.95


@dataclass(frozen=True)
class ConjugacySamples:
    """(xi, phi(xi)) sorted by xi; ``indices[k]`` is the orbit index of pair k."""

    pairs: tuple
    indices: tuple
    depth: int
    rho: object
    ctx: PrecisionContext = DEFAULT_CONTEXT


def _circular_drops(seq) -> list:
    """Positions k with seq[k] >= seq[k+1] (cyclically); one drop = cyclic shift of a sorted list."""
    n = len(seq)
    return [k for k in range(n) if not seq[k] < seq[(k + 1) % n]]


def rho_depth_for(npts: int, quotients: Sequence[int] = ()) -> int:
    """Continued-fraction depth d with q_{d+1} >= 16 N.

    phi(xi_i) = i rho carries the error i |delta rho| <= i / (q_d q_{d+1}), so
    this depth keeps it well below the 1/N sample gaps. Quotients beyond the
    given ones count as 1, the golden worst case.
    """
    def k(j):
        return int(quotients[j]) if j < len(quotients) else 1

    a, b, d = 1, k(0), 0  # q_d, q_{d+1}
    while b < 16 * npts:
        a, b, d = b, k(d + 1) * b + a, d + 1
    return d


def conjugacy_samples(orbit: OrbitCache, rho) -> ConjugacySamples:
    """Exact conjugacy values on the orbit, checked for combinatorial equivalence."""
    ctx = orbit.precision
    with ctx.local():
        r = ctx.mpf(rho)
        phis = [frac(i * r) for i in range(orbit.length)]
        order = sorted(range(orbit.length), key=lambda i: orbit.points[i])
        xs = [orbit.points[i] for i in order]
        for a, b in zip(xs, xs[1:]):
            if a == b:
                raise DegenerateSampleError("repeated orbit points")
        ph = [phis[i] for i in order]
        drops = _circular_drops(ph) if len(ph) >= 3 else [0]
        if len(drops) != 1:
            bad = drops[-1]
            nxt = (bad + 1) % len(ph)
            raise InconsistentRotationError(
                f"orbit order differs from the rotation by {float(r)!r} near sorted position {bad} "
                f"(orbit indices {order[bad]}, {order[nxt]})")
        return ConjugacySamples(tuple(zip(xs, ph)), tuple(order), orbit.length, r, ctx)


@dataclass(frozen=True)
class DensityEstimate:
    """h sampled at ``at`` (ascending in [0, 1)).

    ``orbit_indices`` is set for orbit-based estimates: then ``h_values[k]``
    belongs to orbit point ``orbit_indices[k]`` exactly.
    """

    at: tuple
    h_values: tuple
    scheme: str
    orbit_indices: tuple | None = None
    ctx: PrecisionContext = DEFAULT_CONTEXT

    def __len__(self):
        return len(self.at)

    def mean(self):
        """Trapezoid integral of h over the circle (should be 1)."""
        with self.ctx.local():
            n = len(self.at)
            total = mpfr(0)
            for k in range(n):
                nxt = (k + 1) % n
                gap = frac(self.at[nxt] - self.at[k]) if n > 1 else mpfr(1)
                total += (self.h_values[k] + self.h_values[nxt]) / 2 * gap
            return total

    def _locate(self, x):
        with self.ctx.local():
            x = frac(x)
            k = bisect.bisect_right(self.at, x) - 1  # at[k] <= x < at[k+1] cyclically
            return x, k % len(self.at)

    def value(self, x, mode: str = "linear"):
        """Periodic interpolation: "linear" or "nearest"."""
        n = len(self.at)
        with self.ctx.local():
            x, k = self._locate(x)
            nxt = (k + 1) % n
            left = frac(x - self.at[k])
            gap = frac(self.at[nxt] - self.at[k]) if n > 1 else mpfr(1)
            if mode == "nearest":
                return self.h_values[k] if left <= gap - left else self.h_values[nxt]
            if mode != "linear":
                raise DomainError(f"unknown interpolation mode {mode!r}")
            w = left / gap
            return self.h_values[k] * (1 - w) + self.h_values[nxt] * w

    def h_at(self, i: int, x):
        """Density at orbit point xi_i; exact for orbit-based estimates."""
        if self.orbit_indices is not None:
            lookup = self.__dict__.get("_by_index")
            if lookup is None:
                lookup = dict(zip(self.orbit_indices, self.h_values))
                object.__setattr__(self, "_by_index", lookup)
            if i not in lookup:
                raise DomainError(f"density has no value at orbit point xi_{i}")
            return lookup[i]
        return self.value(x)


def density_estimate(samples: ConjugacySamples) -> DensityEstimate:
    """h = (phi gap)/(xi gap) at the midpoints of circle-adjacent samples."""
    pairs = samples.pairs
    n = len(pairs)
    if n < 3:
        raise DegenerateSampleError("density estimate needs at least 3 samples")
    ctx = samples.ctx
    with ctx.local():
        out = []
        for k in range(n):
            (x0, p0), (x1, p1) = pairs[k], pairs[(k + 1) % n]
            dx, dp = frac(x1 - x0), frac(p1 - p0)
            if dx == 0:
                raise DegenerateSampleError("duplicate xi values")
            out.append((frac(x0 + dx / 2), dp / dx))
        out.sort(key=lambda t: t[0])
        return DensityEstimate(tuple(a for a, _ in out), tuple(h for _, h in out), "divided-difference",
                               None, ctx)


def orbit_density(orbit: OrbitCache) -> DensityEstimate:
    """h(xi_i) = h(xi_0) / (T^i)'(xi_0), normalised by the trapezoid rule."""
    ctx = orbit.precision
    if orbit.length < 3:
        raise DegenerateSampleError("orbit density needs at least 3 points")
    der = orbit.derivatives
    with ctx.local():
        raw = [mpfr(1)]
        for i in range(1, orbit.length):
            raw.append(raw[-1] / der[i - 1])
        order = sorted(range(orbit.length), key=lambda i: orbit.points[i])
        at = tuple(orbit.points[i] for i in order)
        hv = tuple(raw[i] for i in order)
        est = DensityEstimate(at, hv, "homologic", tuple(order), ctx)
        c = est.mean()
        return DensityEstimate(at, tuple(h / c for h in hv), "homologic", tuple(order), ctx)


def homologic_residual(spec: CircleMapSpec, density: DensityEstimate, probes: Sequence | None = None,
                       mode: str = "nearest", probe_count: int = 256):
    """max over probes of |h(xi) - T'(xi) h(T xi)|."""
    ctx = density.ctx
    m = spec.bind(ctx)
    with ctx.local():
        if probes is None:
            probes = [mpfr(j) / probe_count + mpfr(1) / (2 * probe_count) for j in range(probe_count)]
        worst = mpfr(0)
        for x in probes:
            x = ctx.mpf(x)
            v, d = m.value_d1(x)
            r = abs(density.value(x, mode) - d * density.value(frac(v), mode))
            worst = max(worst, r)
        return worst


@dataclass(frozen=True)
class RegularityEstimate:
    exponent: float
    scales_used: tuple
    fit: ScaleFitReport | None
    cap_hit: bool
    raw_slope: float


def holder_exponent(xs, values, scales: tuple | None = None, min_decades: float = 2.0,
                    periodic: bool = True) -> RegularityEstimate:
    """Empirical Hoelder exponent of data on [0, 1).

    Pairs are bucketed by distance into dyadic bins [s, 2s) between
    8 * (median gap) and 1/8 (or ``scales``); the sup of |v(x) - v(y)| per
    bin is regressed against s on log-log axes.  With ``periodic`` the
    distance is taken on the circle; otherwise pairs never wrap past 1.
    """
    x = np.asarray([float(v) for v in xs]) % 1.0
    v = np.asarray([float(u) for u in values])
    if len(x) != len(v):
        raise DomainError("points and values differ in length")
    if len(x) < 16:
        raise DomainError("need at least 16 points")
    order = np.argsort(x)
    x, v = x[order], v[order]
    n = len(x)
    gaps = np.diff(np.concatenate([x, [x[0] + 1.0]]))
    lo, hi = scales if scales is not None else (8 * float(np.median(gaps)), 0.125)
    if not lo < hi or math.log10(hi / lo) < min_decades:
        raise DomainError(f"scale range [{lo:.3g}, {hi:.3g}] spans fewer than {min_decades} decades")
    edges = [lo]
    while edges[-1] * 2 <= hi * (1 + 1e-12):
        edges.append(edges[-1] * 2)
    nb = len(edges) - 1
    sup = np.zeros(nb)
    max_lag = int(np.searchsorted(x, x[0] + 2 * hi)) + 1
    max_lag = min(max(max_lag, 1), n - 1)
    lags = np.unique(np.round(np.geomspace(1, max_lag, 600)).astype(int)) if max_lag > 2000 \
        else np.arange(1, max_lag + 1)
    for k in lags:
        if periodic:
            i = np.arange(n)
            j = (i + k) % n
            d = (x[j] - x) % 1.0
            d = np.minimum(d, 1.0 - d)
        else:
            i = np.arange(n - k)
            j = i + k
            d = x[j] - x[i]
        dv = np.abs(v[j] - v[i])
        b = np.floor(np.log2(d / lo)).astype(int)
        ok = (d >= lo) & (b >= 0) & (b < nb)
        if ok.any():
            np.maximum.at(sup, b[ok], dv[ok])
    mids = np.array(edges[:-1]) * math.sqrt(2)
    used = sup > 0
    if used.sum() < 2:
        # constant data: no variation at any scale
        return RegularityEstimate(1.0, (lo, hi), None, True, math.inf)
    fit = slope_fit([(math.log10(s), math.log10(u)) for s, u in zip(mids[used], sup[used])],
                    PrecisionContext(64))
    slope = float(fit.slope)
    cap = slope >= CAP_THRESHOLD
    expo = min(max(slope, 0.0), 1.0)
    return RegularityEstimate(expo, (lo, hi), fit, cap, slope)


def _rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


@dataclass(frozen=True)
class ExponentSchedule:
    beta: Fraction
    delta: Fraction
    sigmas: tuple
    steps_to_fixpoint: int

    def as_json(self) -> dict:
        return {"sigmas": [_num(s) for s in self.sigmas], "steps": self.steps_to_fixpoint}


def _num(f: Fraction):
    return int(f) if f.denominator == 1 else float(f)


def exponent_schedule(beta, delta) -> ExponentSchedule:
    """sigma_0 = 1, sigma_{i+1} = min(1 + beta, 2 sigma_i/(1 + delta)), in exact rationals.

    Every step is checked against the closed form min(1 + beta, (2/(1+delta))^i)
    and against the three-way minimum with 1 + sigma_i - delta.
    """
    b, d = _rational(beta), _rational(delta)
    if not 0 < b < d < 1:
        raise DomainError(f"exponent schedule needs 0<β<δ<1, got beta={b}, delta={d}")
    top = 1 + b
    factor = Fraction(2) / (1 + d)
    sig = [Fraction(1)]
    while sig[-1] < top:
        s = sig[-1]
        if not (1 - d) * (1 + d - s) > 0:
            raise DomainError(f"side condition (1-delta)(1+delta-sigma) > 0 fails at sigma={s}")
        nxt = min(top, factor * s)
        if min(top, 1 + s - d, factor * s) != nxt:
            raise DomainError(f"three-way minimum disagrees at sigma={s}")
        sig.append(nxt)
    for i, s in enumerate(sig):
        if s != min(top, factor ** i):
            raise DomainError(f"recurrence and closed form differ at step {i}")
    steps = len(sig) - 1
    closed = math.ceil(math.log(float(top)) / math.log(float(factor)))
    if closed != steps and factor ** closed != top:
        raise DomainError(f"step count {steps} disagrees with the logarithmic formula {closed}")
    return ExponentSchedule(b, d, tuple(sig), steps)


@dataclass(frozen=True)
class PredictedRegularity:
    conjugacy: Fraction
    density: Fraction


def predicted_regularity(r, delta) -> PredictedRegularity:
    """Conjugacy smoothness r - 1 - delta and density exponent r - 2 - delta."""
    r, d = _rational(r), _rational(delta)
    if not 0 < d < 1:
        raise DomainError(f"need 0 < delta < 1, got {d}")
    if not 2 + d < r < 3 + d:
        raise DomainError(f"need 2+delta < r < 3+delta, got r={r}, delta={d}")
    return PredictedRegularity(r - 1 - d, r - 2 - d)


def conjugacy_report(spec: CircleMapSpec, orbit: OrbitCache, rho, cf_prefix, r=None, delta=None,
                     probe_count: int = 256) -> dict:
    """Divided-difference density, homologic residual and Hoelder exponent of h.

    The cocycle density from orbit derivatives is reported next to it; it does
    not see the error in rho, which dominates the divided differences once
    N * |delta rho| approaches the gap size.
    """
    samples = conjugacy_samples(orbit, rho)
    dens = density_estimate(samples)
    res = homologic_residual(spec, dens, probe_count=probe_count)
    reg = holder_exponent(dens.at, dens.h_values)
    odens = orbit_density(orbit)
    ores = homologic_residual(spec, odens, mode="linear", probe_count=probe_count)
    oreg = holder_exponent(odens.at, odens.h_values)
    predicted = None
    if r is not None and delta is not None:
        predicted = float(predicted_regularity(r, delta).density)
    return {
        "map": spec.describe(orbit.precision.bits),
        "rho": list(cf_prefix),
        "N": orbit.length,
        "density_mean": float(dens.mean()),
        "homologic_residual": float(res),
        "holder_exponent": reg.exponent,
        "predicted_exponent": predicted,
        "cap_hit": reg.cap_hit,
        "orbit_density_residual": float(ores),
        "orbit_holder_exponent": oreg.exponent,
        "orbit_cap_hit": oreg.cap_hit,
    }
