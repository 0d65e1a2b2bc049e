from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from circlelab.circlemap import CircleMapSpec
from circlelab.crossratio import (Quad, affine_map, check_multiplicativity, compose, cross_ratio,
                                  cross_ratio_distortion, cross_ratio_distortion_direct, dist_tolerance,
                                  dist_expansion_residual, dr_expansion_residual, exact_relation_check,
                                  exp_map, expansion_sweep, identity_tolerance, lemma1_theta_form,
                                  mobius_map, ratio_distortion, square_map, sweep_slope,
                                  write_sweep_csv)
from circlelab.errors import DomainError
from circlelab.numerics import PrecisionContext

CTX = PrecisionContext(256)
pt = st.fractions(min_value=Fraction(1, 10), max_value=Fraction(9, 10), max_denominator=10**8)
quad = st.tuples(pt, pt, pt, pt).filter(lambda t: len(set(t)) == 4)


def mk(*xs):
    return Quad(*(CTX.mpf(x) for x in xs))


def test_ratio_distortion_square_oracle():
    f = square_map(CTX)
    assert ratio_distortion(CTX.mpf(1), CTX.mpf("1.5"), CTX.mpf(2), f).value == CTX.mpf(Fraction(5, 7))


def test_coincident_limit_uses_derivative():
    f = square_map(CTX)
    one = CTX.mpf(1)
    d = ratio_distortion(one, one, CTX.mpf(2), f)
    assert d.value == CTX.mpf(Fraction(2, 3))
    assert d.coincidence_mask == ((0, 1),)


def test_dist_square_oracle():
    v = cross_ratio_distortion(mk(1, 2, 3, 4), square_map(CTX)).value
    assert abs(v - CTX.mpf("0.84")) <= 8 * CTX.eps


def test_cross_ratio_oracle():
    assert cross_ratio(mk(0, 1, 2, 3), CTX) == CTX.mpf(Fraction(-1, 3))
    with pytest.raises(DomainError):
        cross_ratio(mk(0, 1, 1, 3), CTX)


def test_affine_is_exactly_one():
    f = affine_map(CTX.mpf("2.5"), CTX.mpf("0.1"), CTX)
    assert ratio_distortion(CTX.mpf("0.1"), CTX.mpf("0.3"), CTX.mpf("0.7"), f).value == 1
    assert cross_ratio_distortion(mk("0.1", "0.2", "0.5", "0.9"), f).value == 1


def sine_lift():
    return CircleMapSpec.sine_family("0.3", "0.7").bind(CTX)


MAPS = [square_map, exp_map, lambda c: mobius_map(2, 1, 1, 3, c), lambda c: sine_lift()]


@settings(max_examples=200, deadline=None)
@given(quad, st.sampled_from(range(4)), st.sampled_from(range(4)))
def test_multiplicativity(t, i, j):
    q = mk(*t)
    f, g = MAPS[i](CTX), MAPS[j](CTX)
    r1, r2, t1, t2 = check_multiplicativity(q, f, g)
    assert r1 <= t1 and r2 <= t2


@settings(max_examples=200, deadline=None)
@given(quad, st.sampled_from(range(4)))
def test_dist_is_quotient_of_ratio_distortions_and_matches_definition(t, i):
    q = mk(*t)
    f = MAPS[i](CTX)
    via_d = cross_ratio_distortion(q, f).value
    direct = cross_ratio_distortion_direct(q, f)
    assert abs(via_d - direct) <= identity_tolerance(CTX, via_d, direct) * 4


@settings(max_examples=200, deadline=None)
@given(st.tuples(pt, pt, pt).filter(lambda t: t[1] != t[2]), st.sampled_from(range(4)))
def test_exact_relation(t, i):
    res, tol = exact_relation_check(*(CTX.mpf(x) for x in t), MAPS[i](CTX))
    assert res <= tol


@settings(max_examples=300, deadline=None)
@given(quad, st.integers(1, 5), st.integers(0, 5), st.integers(0, 5), st.integers(1, 5))
def test_mobius_preserves_cross_ratio(t, a, b, c, d):
    assume(a * d - b * c > 0)
    f = mobius_map(a, b, c, d, CTX)
    q = mk(*t)
    tol = dist_tolerance(q, f)
    assert abs(cross_ratio_distortion(q, f).value - 1) <= tol
    assert abs(f.schwarzian(q.x1)) <= 64 * CTX.eps * 100
    # log Dist / (x1 - x3) with Sf = 0 predicted
    r = dist_expansion_residual(q, min(q.points), f)
    assert abs(r.residual) <= 2 * tol / abs(q.x1 - q.x3)


def test_mobius_requires_positive_determinant():
    with pytest.raises(DomainError):
        mobius_map(1, 2, 3, 4, CTX)


def test_compose_chain_rule():
    f = compose(exp_map(CTX), square_map(CTX))  # exp(x^2)
    x = CTX.mpf("0.7")
    v, d1, d2, d3 = f.jet(x)
    with CTX.local():
        import gmpy2
        e = gmpy2.exp(x * x)
        assert abs(d1 - 2 * x * e) < 1e-70
        assert abs(d2 - (2 + 4 * x * x) * e) < 1e-70
        assert abs(d3 - (12 * x + 8 * x ** 3) * e) < 1e-70


def test_theta_form_protocol():
    f = sine_lift()
    x1, x2, x3 = CTX.mpf("0.2"), CTX.mpf("0.21"), CTX.mpf("0.23")
    assert lemma1_theta_form(x1, x2, x3, x1, f).residual == 0
    with pytest.raises(DomainError):
        lemma1_theta_form(x1, x2, x3, CTX.mpf("0.5"), f)
    # x1 = x3 switches to the theta form
    assert dr_expansion_residual(x1, x2, x1, f).form == "theta"


@pytest.mark.parametrize("kind", ["dr", "theta", "dist"])
def test_analytic_slope_two(kind):
    rows = expansion_sweep(sine_lift(), kind, bases=[CTX.mpf("0.13"), CTX.mpf("0.71")])
    assert abs(float(sweep_slope(rows, CTX).slope) - 2) < 0.3


def test_literal_lever_is_first_order_only():
    rows = expansion_sweep(sine_lift(), "dist_literal", bases=[CTX.mpf("0.13")])
    assert float(sweep_slope(rows, CTX).slope) < 1.5


def test_sweep_csv(tmp_path):
    rows = expansion_sweep(square_map(CTX), "dr", deltas=[1e-3, 1e-2])
    write_sweep_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "delta,actual,predicted,residual" and len(lines) == 3
