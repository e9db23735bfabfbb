import math

import numpy as np
import pytest

from stickybm.quadrature import (QuadratureError, QuadratureSpec, gauss_legendre,
                                 log_integrate, log_integrate_halfline)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(relative_tolerance=0.5)
    with pytest.raises(ValueError):
        QuadratureSpec(relative_tolerance=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_subdivisions=4)
    spec = QuadratureSpec()
    assert spec.relative_tolerance == 1e-10
    assert spec.max_subdivisions == 20
    assert spec.endpoint_substitution


def test_gauss_legendre_normalized():
    nodes, w = gauss_legendre(15)
    assert np.all((nodes > 0) & (nodes < 1))
    assert np.sum(w) == pytest.approx(1.0, rel=1e-14)


def test_exponential_integral():
    spec = QuadratureSpec()
    for alpha in (0.5, 3.0, 40.0):
        got = log_integrate(lambda x: -alpha * x, 0.0, 1.0, spec)
        expected = math.log((1.0 - math.exp(-alpha)) / alpha)
        assert got == pytest.approx(expected, abs=1e-11)


def test_sharp_gaussian_bump_with_split():
    spec = QuadratureSpec()
    center, width = 0.37, 1e-4

    def log_f(x):
        return -((x - center) / width) ** 2 / 2.0

    got = log_integrate(log_f, 0.0, 1.0, spec, split_points=(center,))
    expected = math.log(width * math.sqrt(2 * math.pi))
    assert got == pytest.approx(expected, abs=1e-9)


def test_extreme_scaling_stays_finite():
    # Integrals of exp(-c/eps) magnitude must survive in the log domain.
    spec = QuadratureSpec()
    got = log_integrate(lambda x: -2000.0 + 0.0 * x, 0.0, 1.0, spec)
    assert got == pytest.approx(-2000.0, abs=1e-12)


def test_failure_is_reported():
    spec = QuadratureSpec(relative_tolerance=1e-10, max_subdivisions=8)

    def nasty(x):
        return 30.0 * np.sin(1000.0 * x) ** 2

    with pytest.raises(QuadratureError):
        log_integrate(nasty, 0.0, 1.0, spec)


def test_halfline_exponential():
    spec = QuadratureSpec()
    got = log_integrate_halfline(lambda x: -x, 0.0, spec, scale=1.0)
    assert got == pytest.approx(0.0, abs=1e-10)
    got2 = log_integrate_halfline(lambda x: -0.25 * x, 2.0, spec, scale=4.0)
    assert got2 == pytest.approx(math.log(4.0) - 0.5, abs=1e-10)
