from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from scipy import special

from hilferctl.errors import PoleError, UnsupportedRange
from hilferctl.specfn import (
    MLParams,
    gamma_fn,
    mainardi_wright,
    ml_derivative,
    ml_eval,
    ml_via_wright_quadrature,
    mittag_leffler,
)


def _series_ref(term, alpha, z, dps):
    """Sum the defining series of E_{alpha,beta}(z) (or its derivative).

    For z < 0 nsum's alternating-series acceleration avoids the huge
    cancellation; for z >= 0 every term is positive and an explicit sum past
    the peak term (k ~ z^(1/alpha)/alpha) is exact to working precision.
    """
    with mp.workdps(dps):
        if z < 0:
            return float(mp.nsum(term, [0, mp.inf]))
        n = int(3 * abs(z) ** (1 / alpha) / alpha) + 80
        return float(mp.fsum(term(k) for k in range(n)))


def ml_ref(alpha, beta, z, dps=50):
    a, b, zz = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
    return _series_ref(lambda k: zz**k * mp.rgamma(a * k + b), alpha, z, dps)


def ml_deriv_ref(alpha, beta, z, dps=50):
    a, b, zz = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
    return _series_ref(lambda k: (k + 1) * zz**k * mp.rgamma(a * (k + 1) + b), alpha, z, dps)


def mw_ref(alpha, theta, dps=60):
    with mp.workdps(dps):
        a, t = mp.mpf(alpha), mp.mpf(theta)
        # explicit partial sum: nsum's extrapolation trips over the exact zeros
        return float(mp.fsum((-t) ** n / mp.factorial(n) * mp.rgamma(1 - a * (n + 1)) for n in range(300)))


@pytest.mark.parametrize("alpha,beta", [(0.6, 0.6), (0.75, 0.75), (0.75, 0.875), (0.9, 1.0), (0.55, 0.55)])
@pytest.mark.parametrize("z", [-40.0, -12.0, -3.5, -1.0, -0.3, 0.0, 0.7, 4.0, 20.0])
def test_ml_matches_series_oracle(alpha, beta, z):
    ref = ml_ref(alpha, beta, z)
    np.testing.assert_allclose(ml_eval(alpha, beta, z), ref, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("z", [-30.0, -5.0, -0.5, 0.5, 3.0])
def test_ml_derivative_matches_oracle(z):
    np.testing.assert_allclose(ml_derivative(0.75, 0.75, z), ml_deriv_ref(0.75, 0.75, z), rtol=1e-9, atol=1e-14)


def test_ml_alpha_one_closed_forms():
    z = np.linspace(-30, 30, 61)
    np.testing.assert_allclose(ml_eval(1.0, 1.0, z), np.exp(z), rtol=1e-13)
    nz = z[z != 0]
    np.testing.assert_allclose(ml_eval(1.0, 2.0, nz), np.expm1(nz) / nz, rtol=1e-12)


def test_ml_half_is_erfcx():
    # E_{1/2,1}(-x) = exp(x^2) erfc(x)
    x = np.array([0.1, 0.5, 1.0, 3.0, 10.0, 40.0])
    np.testing.assert_allclose(ml_eval(0.5, 1.0, -x), special.erfcx(x), rtol=1e-10)


def test_ml_cosine_for_alpha_two():
    z = np.linspace(-0.9, 0.0, 10)
    np.testing.assert_allclose(mittag_leffler(MLParams(2.0, 1.0), z), np.cos(np.sqrt(-z)), rtol=1e-13)


def test_ml_vectorised_equals_scalar():
    z = np.linspace(-50, 5, 37)
    vec = ml_eval(0.8, 0.8, z)
    assert vec.shape == z.shape
    np.testing.assert_array_equal(vec, [ml_eval(0.8, 0.8, float(v)) for v in z])


def test_ml_range_errors():
    with pytest.raises(UnsupportedRange):
        ml_eval(0.75, 0.75, 60.0)
    with pytest.raises(UnsupportedRange):
        ml_eval(0.75, 0.75, np.nan)
    with pytest.raises(ValueError):
        MLParams(0.0, 1.0)


def test_gamma_fn_poles_and_values():
    np.testing.assert_allclose(gamma_fn(0.5), math.sqrt(math.pi), rtol=1e-15)
    with pytest.raises(PoleError):
        gamma_fn(-2.0)


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.75])
@pytest.mark.parametrize("theta", [0.0, 0.4, 1.5, 3.0])
def test_mainardi_wright_matches_series_oracle(alpha, theta):
    np.testing.assert_allclose(mainardi_wright(alpha, theta), mw_ref(alpha, theta), rtol=1e-9, atol=1e-15)


def test_mainardi_wright_half_is_gaussian():
    th = np.linspace(0, 12, 25)
    np.testing.assert_allclose(mainardi_wright(0.5, th), np.exp(-th**2 / 4) / math.sqrt(math.pi), rtol=1e-8, atol=1e-300)


def test_mainardi_wright_integral_branch_agrees():
    th = np.array([0.5, 1.0, 2.5])
    np.testing.assert_allclose(mainardi_wright(0.7, th, method="integral"), mainardi_wright(0.7, th, method="series"),
                               rtol=1e-8)


def test_mainardi_wright_series_refuses_cancellation():
    with pytest.raises(UnsupportedRange):
        mainardi_wright(0.9, 40.0, method="series")


@pytest.mark.parametrize("alpha,z", [(0.6, 0.0), (0.75, 1.0), (0.9, 7.5)])
def test_wright_laplace_bridge(alpha, z):
    np.testing.assert_allclose(ml_via_wright_quadrature(alpha, z), ml_eval(alpha, alpha, -z), atol=1e-9)
