import math

import pytest
from hypothesis import given, strategies as st

from gfbm_lab.params import OutOfRangeError, derive, validate


def test_brownian_base_case_accepted():
    p = validate(0, 0, 1)
    assert (p.gamma, p.alpha, p.theta) == (0.0, 0.0, 1.0)


def test_interior_point_accepted():
    # alpha range for gamma=0.5 is (-0.25, 0.5)
    p = validate(0.5, 0.2, 0.5)
    assert p.alpha == 0.2


def test_gamma_boundary_rejected():
    with pytest.raises(OutOfRangeError) as exc:
        validate(1.0, 0, 1)
    assert any(v[0] == "gamma" for v in exc.value.violations)


def test_theta_zero_rejected():
    with pytest.raises(OutOfRangeError) as exc:
        validate(0.5, 0.4, 0)
    assert any(v[0] == "theta" for v in exc.value.violations)


def test_all_violations_reported():
    with pytest.raises(OutOfRangeError) as exc:
        validate(1.5, 0.9, -1)
    assert {v[0] for v in exc.value.violations} == {"gamma", "alpha", "theta"}


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
def test_nonfinite_rejected(bad):
    with pytest.raises(OutOfRangeError):
        validate(bad, 0, 1)


def test_wide_alpha_range_rejected():
    # alpha = 0.6 < 1/2 + gamma/2 = 0.75 is kernel-integrable but outside
    # the supported regime, and must be refused rather than extrapolated
    with pytest.raises(OutOfRangeError):
        validate(0.5, 0.6, 1.0)


@pytest.mark.parametrize("triple,expect", [
    ((0, 0, 1), (0.5, 1.5)),
    ((0.5, 0.2, 0.5), (0.45, 1.2)),
])
def test_derive_examples(triple, expect):
    d = derive(validate(*triple))
    assert d.hurst == pytest.approx(expect[0], abs=1e-15)
    assert d.beta == pytest.approx(expect[1], abs=1e-15)


@pytest.mark.parametrize("h0", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_fbm_reduction_recovers_hurst(h0):
    d = derive(validate(0.0, h0 - 0.5, 1.0))
    assert d.hurst == pytest.approx(h0, abs=1e-15)


@given(
    gamma=st.floats(-0.5, 1.5),
    alpha=st.floats(-1.0, 1.0),
    theta=st.floats(-0.5, 3.0),
)
def test_acceptance_region_is_exact(gamma, alpha, theta):
    inside = (0.0 <= gamma < 1.0
              and -0.5 + gamma / 2 < alpha < 0.5
              and theta > 0.0)
    if inside:
        p = validate(gamma, alpha, theta)
        d = derive(p)
        assert 0.0 < d.hurst < 1.0
        assert d.beta > 0.5
        # exponent identity: hurst + theta = beta - gamma/2
        assert d.hurst + theta == pytest.approx(d.beta - gamma / 2, abs=1e-12)
    else:
        with pytest.raises(OutOfRangeError):
            validate(gamma, alpha, theta)
