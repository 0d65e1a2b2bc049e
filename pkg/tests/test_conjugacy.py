from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circlelab.circlemap import CircleMapSpec, iterate_orbit, rotation_number, weierstrass_series
from circlelab.conjugacy import (CAP_THRESHOLD, conjugacy_report, conjugacy_samples, density_estimate,
                                 exponent_schedule, holder_exponent, homologic_residual, orbit_density,
                                 predicted_regularity, rho_depth_for)
from circlelab.errors import DegenerateSampleError, DomainError, InconsistentRotationError
from circlelab.numerics import PrecisionContext
from circlelab.rotnum import convergents, golden_mean, silver_mean

CTX = PrecisionContext(256)


@pytest.fixture(scope="module")
def dd_density(golden_sine):
    """Divided-difference density, N = 10^4, rho deep enough for the sample spacing."""
    rho, _ = rotation_number(golden_sine, CTX, rho_depth_for(10_000))
    orbit = iterate_orbit(golden_sine, 0, 10_000, CTX)
    return density_estimate(conjugacy_samples(orbit, rho))


def test_single_point_sample(rigid_golden):
    s = conjugacy_samples(iterate_orbit(rigid_golden, 0, 1, CTX), golden_mean(CTX))
    assert s.pairs == ((CTX.mpf(0), CTX.mpf(0)),)


def test_samples_are_exact_progression(golden_sine, golden_sine_rho):
    rho = golden_sine_rho[0]
    s = conjugacy_samples(iterate_orbit(golden_sine, 0, 3000, CTX), rho)
    with CTX.local():
        for (x, ph), i in zip(s.pairs, s.indices):
            assert ph == i * rho - gmpy2.floor(i * rho)


def test_wrong_rho_is_inconsistent(golden_sine):
    with pytest.raises(InconsistentRotationError):
        conjugacy_samples(iterate_orbit(golden_sine, 0, 2000, CTX), silver_mean(CTX))


@settings(max_examples=30, deadline=None)
@given(st.fractions(min_value=Fraction(1, 100), max_value=Fraction(99, 100), max_denominator=10**6),
       st.integers(3, 400))
def test_rigid_density_is_one(q, n):
    rho = CTX.mpf(q) + CTX.eps * 0 + golden_mean(CTX) / 10**9  # irrational enough for n points
    spec = CircleMapSpec.rigid_rotation(rho)
    try:
        s = conjugacy_samples(iterate_orbit(spec, 0, n, CTX), rho)
    except DegenerateSampleError:
        return
    d = density_estimate(s)
    assert all(abs(h - 1) <= 16 * CTX.eps * 4 * n for h in d.h_values)
    assert homologic_residual(spec, d) <= 16 * CTX.eps * 4 * n


def test_rigid_density_exact_golden(rigid_golden):
    d = density_estimate(conjugacy_samples(iterate_orbit(rigid_golden, 0, 500, CTX), golden_mean(CTX)))
    assert max(abs(h - 1) for h in d.h_values) <= 16 * CTX.eps
    assert orbit_density(iterate_orbit(rigid_golden, 0, 50, CTX)).h_values == (1,) * 50


def test_too_few_samples(rigid_golden):
    with pytest.raises(DegenerateSampleError):
        density_estimate(conjugacy_samples(iterate_orbit(rigid_golden, 0, 2, CTX), golden_mean(CTX)))


def test_density_normalised(dd_density):
    gaps = np.diff([float(x) for x in dd_density.at])
    assert abs(dd_density.mean() - 1) <= 1e-3
    assert abs(dd_density.mean() - 1) <= 10 * gaps.max()
    assert min(dd_density.h_values) > 0


def test_homologic_residual_decreases_with_n(golden_sine, dd_density):
    rho, _ = rotation_number(golden_sine, CTX, rho_depth_for(10_000))
    big = density_estimate(conjugacy_samples(iterate_orbit(golden_sine, 0, 30_000, CTX), rho))
    small = homologic_residual(golden_sine, dd_density)
    assert homologic_residual(golden_sine, big) < small < 1e-3


def test_density_is_lipschitz_cap(dd_density):
    reg = holder_exponent(dd_density.at, dd_density.h_values)
    assert reg.cap_hit and reg.raw_slope >= CAP_THRESHOLD


def test_cocycle_density_agrees(golden_sine_orbit, dd_density):
    od = orbit_density(golden_sine_orbit)
    for x in (0.1, 0.45, 0.8):
        assert abs(od.value(x) - dd_density.value(x)) < 2e-3
    assert abs(od.mean() - 1) <= 64 * CTX.eps * len(od)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.7])
def test_weierstrass_calibration(beta):
    xs = np.sort(np.random.default_rng(7).random(20_000))
    reg = holder_exponent(xs, weierstrass_series(xs, beta, order=3))
    assert abs(reg.exponent - beta) <= 0.1


def test_constant_and_linear_data():
    xs = np.linspace(0, 1, 10_000, endpoint=False)
    c = holder_exponent(xs, np.ones_like(xs))
    assert c.exponent == 1 and c.cap_hit
    lin = holder_exponent(xs, xs, periodic=False)
    assert lin.cap_hit and abs(lin.raw_slope - 1) < 0.05
    # the wrap-around jump of x mod 1 is seen at every scale on the circle
    assert holder_exponent(xs, xs).exponent < 0.1


def test_scale_range_guard():
    xs = np.linspace(0, 1, 100, endpoint=False)
    with pytest.raises(DomainError):
        holder_exponent(xs, np.sin(xs))


@pytest.mark.parametrize("beta,delta,steps,first", [
    ("0.2", "0.5", 1, [1, Fraction(6, 5)]),
    ("0.5", "0.9", 8, None),
    ("0.9", "0.95", 26, None),
])
def test_schedule_worked_examples(beta, delta, steps, first):
    sch = exponent_schedule(beta, delta)
    assert sch.steps_to_fixpoint == steps
    if first:
        assert list(sch.sigmas) == first


@settings(max_examples=300)
@given(st.integers(1, 98), st.data())
def test_schedule_closed_form(b, data):
    beta = Fraction(b, 100)
    delta = Fraction(data.draw(st.integers(b + 1, 99)), 100)
    sch = exponent_schedule(beta, delta)
    f = 2 / (1 + delta)
    assert all(s == min(1 + beta, f ** i) for i, s in enumerate(sch.sigmas))
    assert sch.sigmas[-1] == 1 + beta
    assert all((1 - delta) * (1 + delta - s) > 0 for s in sch.sigmas[:-1])


@pytest.mark.parametrize("beta,delta", [("0.5", "0.5"), ("0.6", "0.5"), ("0", "0.5"), ("0.5", "1")])
def test_schedule_hypothesis(beta, delta):
    with pytest.raises(DomainError, match="0<β<δ<1"):
        exponent_schedule(beta, delta)


def test_predicted_regularity():
    p = predicted_regularity("3.2", "0.5")
    assert p.conjugacy == Fraction(17, 10) and p.density == Fraction(7, 10)
    p = predicted_regularity("3.9", "0.95")
    assert p.conjugacy == Fraction(195, 100) and p.density == Fraction(95, 100)
    with pytest.raises(DomainError):
        predicted_regularity("2.5", "0.5")


def test_report_fields(golden_sine, golden_sine_rho):
    orbit = iterate_orbit(golden_sine, 0, 10_000, CTX)
    rep = conjugacy_report(golden_sine, orbit, golden_sine_rho[0], golden_sine_rho[1].quotients)
    assert {"N", "density_mean", "homologic_residual", "holder_exponent", "cap_hit"} <= set(rep)


@given(st.integers(1, 10**6), st.lists(st.integers(1, 50), max_size=12))
def test_rho_depth_is_first_level_past_16n(npts, ks):
    d = rho_depth_for(npts, ks)
    _, qs = convergents(list(ks) + [1] * (d + 2))
    q = qs[1:]  # q[j] = q_j
    assert q[d + 1] >= 16 * npts
    assert d == 0 or q[d] < 16 * npts


def test_rho_depth_golden_default():
    assert rho_depth_for(10_000) == rho_depth_for(10_000, [1] * 40) == 25
