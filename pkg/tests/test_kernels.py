import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from rosencit.exceptions import ConstantColumnError, UsageError
from rosencit.kernels import (
    BandwidthPolicy,
    KernelSpec,
    column_bandwidths,
    kernel_weight,
    rule_of_thumb_bandwidth,
)

FAMILIES = ("gaussian", "epanechnikov")
# 1.06 * 100 ** -0.2, evaluated independently
ROT_100 = 0.42199360078670706


def test_gaussian_mode():
    assert kernel_weight(KernelSpec("gaussian"), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_epanechnikov_values():
    spec = KernelSpec("epanechnikov")
    assert kernel_weight(spec, 0.0) == 0.75
    assert kernel_weight(spec, 1.5) == 0.0
    assert kernel_weight(spec, -1.0) == 0.0


@pytest.mark.parametrize("family", FAMILIES)
def test_moments_by_quadrature(family):
    spec = KernelSpec(family)
    f = lambda u: float(kernel_weight(spec, u))
    lim = 1.0 if family == "epanechnikov" else 40.0
    mass, _ = integrate.quad(f, -lim, lim, epsabs=1e-12, points=[0.0])
    first, _ = integrate.quad(lambda u: u * f(u), -lim, lim, epsabs=1e-12)
    second, _ = integrate.quad(lambda u: u * u * f(u), -lim, lim, epsabs=1e-12)
    assert abs(mass - 1.0) < 1e-8
    assert abs(first) < 1e-8
    assert 0.0 < second < np.inf


@pytest.mark.parametrize("family", FAMILIES)
@given(st.floats(-10, 10, allow_nan=False))
def test_symmetry(family, u):
    spec = KernelSpec(family)
    assert kernel_weight(spec, u) == kernel_weight(spec, -u)


def test_bad_specs():
    with pytest.raises(UsageError):
        KernelSpec("triangle")
    with pytest.raises(UsageError):
        KernelSpec("gaussian", order_m=4)
    with pytest.raises(UsageError):
        BandwidthPolicy(scale_c=0.0)
    with pytest.raises(UsageError):
        BandwidthPolicy(explicit_h=-1.0)
    with pytest.raises(UsageError):
        BandwidthPolicy(cond_scale="log")


def test_rule_of_thumb_values():
    assert rule_of_thumb_bandwidth(1.0, 100, 1, BandwidthPolicy()) == pytest.approx(ROT_100, rel=1e-14)
    assert rule_of_thumb_bandwidth(2.0, 100, 1, BandwidthPolicy(0.5)) == pytest.approx(ROT_100, rel=1e-14)
    assert rule_of_thumb_bandwidth(5.0, 40, 3, BandwidthPolicy(2.0, explicit_h=0.3)) == 0.3


@given(st.floats(0.01, 100), st.floats(0.01, 10), st.floats(0.1, 10),
       st.integers(2, 10_000), st.integers(1, 5))
def test_homogeneity(sd, c, k, n, d):
    base = rule_of_thumb_bandwidth(sd, n, d, BandwidthPolicy(c))
    assert rule_of_thumb_bandwidth(k * sd, n, d, BandwidthPolicy(c)) == pytest.approx(k * base)
    assert rule_of_thumb_bandwidth(sd, n, d, BandwidthPolicy(k * c)) == pytest.approx(k * base)


@pytest.mark.parametrize("n", [10 ** k for k in range(2, 7)])
def test_rate_conditions_one_dim(n):
    h = rule_of_thumb_bandwidth(1.0, n, 1, BandwidthPolicy())
    # n h^8 shrinks and n h^2 / log^2 n grows along the grid
    h_next = rule_of_thumb_bandwidth(1.0, 10 * n, 1, BandwidthPolicy())
    assert 10 * n * h_next ** 8 < n * h ** 8
    assert 10 * n * h_next ** 2 / math.log(10 * n) ** 2 > n * h ** 2 / math.log(n) ** 2


def test_constant_column_rejected():
    with pytest.raises(ConstantColumnError):
        rule_of_thumb_bandwidth(0.0, 100, 1, BandwidthPolicy())
    cond = np.column_stack([np.arange(10.0), np.ones(10)])
    with pytest.raises(ConstantColumnError, match="column 1"):
        column_bandwidths(cond, BandwidthPolicy())


def test_column_bandwidths_per_coordinate(rng):
    cond = rng.standard_normal((200, 2)) * [1.0, 10.0]
    h = column_bandwidths(cond, BandwidthPolicy())
    sd = cond.std(axis=0, ddof=1)
    np.testing.assert_allclose(h, 1.06 * sd * 200 ** (-1 / 6))
