from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given, settings, strategies as st

from circlelab.errors import DegenerateFitError, DomainError
from circlelab.numerics import (PrecisionContext, chebyshev_nodes, circle_distance, frac,
                                geometric_grid, log_log_fit, signed_displacement, slope_fit,
                                to_decimal)

CTX = PrecisionContext(256)


def test_eps_is_exact_power_of_two():
    assert CTX.eps == gmpy2.mul_2exp(gmpy2.mpfr(1, 256), -255)
    assert PrecisionContext(100).eps * 2 ** 99 == 1


@pytest.mark.parametrize("bits", [0, 32, 63, 64.0, "256"])
def test_rejects_bad_precision(bits):
    if bits == 64.0 or bits == "256":
        with pytest.raises(DomainError):
            PrecisionContext(bits)
    else:
        with pytest.raises(DomainError):
            PrecisionContext(bits)


def test_decimal_strings_are_not_binary_floats():
    x = CTX.mpf("0.1")
    assert x != gmpy2.mpfr(0.1, 256)
    assert abs(x * 10 - 1) < 4 * CTX.eps


def test_fraction_rounded_once():
    third = CTX.mpf(Fraction(1, 3))
    with CTX.local():
        assert abs(3 * third - 1) <= CTX.eps


@settings(max_examples=200, deadline=None)
@given(st.fractions(min_value=-10**6, max_value=10**6, max_denominator=10**9),
       st.sampled_from([64, 100, 256, 512]))
def test_to_decimal_round_trips(q, bits):
    ctx = PrecisionContext(bits)
    x = ctx.mpf(q)
    assert ctx.mpf(to_decimal(x, bits)) == x


def test_to_decimal_passthrough():
    assert to_decimal(7, 256) == "7"
    assert to_decimal(Fraction(3, 4), 256) == "3/4"
    assert to_decimal("0.5", 256) == "0.5"
    assert to_decimal(CTX.mpf(0), 256) == "0"


@given(st.fractions(min_value=-50, max_value=50, max_denominator=1000))
def test_frac_and_displacement_ranges(q):
    x = CTX.mpf(q)
    with CTX.local():
        f = frac(x)
        assert 0 <= f < 1
        d = signed_displacement(x, CTX.mpf(0))
        assert -0.5 <= d < 0.5
        assert circle_distance(x, CTX.mpf(0)) == abs(d) or abs(d) == 0.5


def test_frac_never_returns_one():
    with CTX.local():
        x = -gmpy2.mpfr(2) ** -400
        assert frac(x) < 1


def test_slope_fit_exact_line():
    pts = [(k, 3 * k - 2) for k in range(6)]
    fit = slope_fit(pts, CTX)
    assert fit.slope == 3 and fit.intercept == -2
    assert fit.max_abs_residual == 0
    assert fit.predict(10) == 28


def test_slope_fit_degenerate():
    with pytest.raises(DegenerateFitError):
        slope_fit([(1, 2)], CTX)
    with pytest.raises(DegenerateFitError):
        slope_fit([(1, 2), (1, 3)], CTX)


def test_log_log_fit_power_law():
    xs = [CTX.mpf(2) ** -k for k in range(1, 12)]
    with CTX.local():
        ys = [5 * x ** 2 for x in xs]
    fit = log_log_fit(xs, ys, CTX)
    assert abs(fit.slope - 2) < 1e-70
    with pytest.raises(DomainError):
        log_log_fit([1, 2], [1, 0], CTX)


def test_chebyshev_nodes_inside():
    nodes = chebyshev_nodes(0, 1, 9, CTX)
    assert nodes[0] == 0 and nodes[-1] == 1 and len(nodes) == 11
    assert all(a < b for a, b in zip(nodes, nodes[1:]))


def test_geometric_grid():
    g = geometric_grid(1e-5, 1e-2, 8)
    assert len(g) == 25
    assert g[0] == 1e-5 and abs(g[-1] - 1e-2) < 1e-15
