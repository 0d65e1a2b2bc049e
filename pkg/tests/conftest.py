"""Shared fixtures: the golden-tuned sine map is expensive, so tune it once."""

import time

import pytest

from circlelab.circlemap import CircleMapSpec, iterate_orbit, rotation_number, tune_parameter
from circlelab.numerics import PrecisionContext
from circlelab.rotnum import cf_expand, golden_mean

TUNE_TOL = "1e-10"

# acceptance lines, filled by test_acceptance and printed after the run
ACCEPTANCE = {}
TIMINGS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])


@pytest.fixture(scope="session")
def ctx():
    return PrecisionContext(256)


@pytest.fixture(scope="session")
def golden_sine(ctx):
    """sine_family a=0.5 with omega tuned so rho is the golden mean to 1e-10."""
    target = cf_expand(golden_mean(ctx), 40, ctx)
    fam = CircleMapSpec.sine_family("0.5", "0.5")
    t0 = time.perf_counter()
    omega = tune_parameter(fam, target, TUNE_TOL, ctx)
    TIMINGS["tune"] = time.perf_counter() - t0
    return fam.with_omega(omega)


@pytest.fixture(scope="session")
def golden_sine_rho(golden_sine, ctx):
    """(rho, cf) read from the orbit to depth 24, finer than the tuning tolerance."""
    return rotation_number(golden_sine, ctx, 24)


@pytest.fixture(scope="session")
def golden_sine_orbit(golden_sine, golden_sine_rho, ctx):
    cf = golden_sine_rho[1]
    return iterate_orbit(golden_sine, 0, cf.q(16) + cf.q(15) + 1, ctx)


@pytest.fixture(scope="session")
def rigid_golden(ctx):
    return CircleMapSpec.rigid_rotation(golden_mean(ctx))
