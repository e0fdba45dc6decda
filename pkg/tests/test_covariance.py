import math

import numpy as np
import pytest

from gfbm_lab import validate, derive
from gfbm_lab.covariance import (
    CovMatrix,
    KernelEval,
    SingularPointError,
    _cov_y_tensor,
    cov_matrix,
    cov_x,
    cov_y,
    kernel_g,
    lamperti_autocov,
)


class TestKernel:
    def test_brownian_indicator(self, bm_params):
        assert kernel_g(bm_params, 1.0, 0.5) == 1.0

    def test_vanishes_beyond_time(self, std_params, bm_params):
        for p in (std_params, bm_params):
            assert kernel_g(p, 1.0, 2.0) == 0.0

    def test_scalar_value(self):
        p = validate(0.5, 0.25, 1.0)
        expect = 0.75 ** 0.25 * 0.25 ** -0.25
        assert kernel_g(p, 1.0, 0.25) == pytest.approx(expect, rel=1e-14)

    def test_negative_axis(self):
        p = validate(0.5, 0.25, 1.0)
        # ((1+1)^a - 1^a) * 1^{-g/2}
        assert kernel_g(p, 1.0, -1.0) == pytest.approx(2 ** 0.25 - 1.0, rel=1e-14)

    def test_zero_time_is_zero(self, std_params):
        assert kernel_g(std_params, 0.0, 0.5) == 0.0
        assert kernel_g(std_params, -1.0, 0.5) == 0.0

    def test_singular_point_rejected(self, std_params):
        with pytest.raises(SingularPointError):
            kernel_g(std_params, 1.0, 0.0)

    def test_zero_allowed_only_in_trivial_corner(self, bm_params):
        assert kernel_g(bm_params, -1.0, 0.0) == 0.0
        with pytest.raises(SingularPointError):
            kernel_g(bm_params, 1.0, 0.0)

    def test_kernel_eval_probe(self, std_params):
        ke = KernelEval(std_params)
        assert ke.probe_l2 > 0.0
        assert ke(1.0, 0.5) == kernel_g(std_params, 1.0, 0.5)


class TestCovX:
    def test_brownian_min(self, bm_params):
        for s, t in [(0.5, 1.0), (0.25, 0.75), (1.0, 1.0)]:
            assert cov_x(bm_params, s, t) == pytest.approx(min(s, t), rel=1e-9)

    @pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
    def test_fbm_closed_form(self, hurst):
        p = validate(0.0, hurst - 0.5, 1.0)
        rng = np.random.default_rng(1234)
        c11 = cov_x(p, 1.0, 1.0, tol=1e-10)
        for _ in range(10):
            s, t = rng.uniform(0.05, 1.0, size=2)
            got = cov_x(p, s, t, tol=1e-10) / c11
            expect = 0.5 * (s ** (2 * hurst) + t ** (2 * hurst) - abs(t - s) ** (2 * hurst))
            assert got == pytest.approx(expect, rel=1e-4, abs=1e-8)

    @pytest.mark.parametrize("a", [0.5, 2.0, 4.0])
    def test_self_similarity(self, std_params, a):
        h2 = 2 * derive(std_params).hurst
        base = cov_x(std_params, 0.3, 0.8)
        scaled = cov_x(std_params, a * 0.3, a * 0.8)
        assert scaled == pytest.approx(a ** h2 * base, rel=1e-6)

    def test_positive_times_required(self, std_params):
        with pytest.raises(ValueError):
            cov_x(std_params, 0.0, 1.0)
        with pytest.raises(ValueError):
            cov_x(std_params, 1.0, -1.0)

    def test_variance_positive_on_grid(self, std_params):
        for t in np.linspace(0.1, 2.0, 8):
            assert cov_x(std_params, t, t) > 0.0


class TestCovY:
    def test_integrated_brownian(self, bm_params):
        assert cov_y(bm_params, 1.0, 1.0) == pytest.approx(1.0 / 3.0, rel=1e-10)

    def test_integrated_brownian_cross(self, bm_params):
        # int_0^s int_0^t min(u,v) dv du for s=1,t=2 equals 5/6
        assert cov_y(bm_params, 1.0, 2.0) == pytest.approx(5.0 / 6.0, rel=1e-9)

    def test_symmetry(self, std_params):
        assert cov_y(std_params, 0.3, 0.7) == pytest.approx(
            cov_y(std_params, 0.7, 0.3), rel=1e-10
        )

    def test_self_similarity(self, std_params):
        d = derive(std_params)
        expo = 2 * (d.hurst + std_params.theta)
        base = cov_y(std_params, 0.4, 0.9)
        scaled = cov_y(std_params, 0.8, 1.8)
        assert scaled == pytest.approx(2 ** expo * base, rel=1e-5)

    def test_variance_positive(self, std_params):
        for t in (0.25, 0.5, 1.0, 2.0):
            assert cov_y(std_params, t, t) > 0.0

    @pytest.mark.slow
    @pytest.mark.parametrize("triple,pair", [
        ((0.5, 0.2, 0.5), (0.4, 0.9)),
        ((0.3, -0.1, 1.2), (0.7, 0.3)),
    ])
    def test_tensor_route_agrees(self, triple, pair):
        # the order-swapped fast form against the literal nested quadrature
        p = validate(*triple)
        fast = cov_y(p, *pair, tol=1e-10)
        tensor = _cov_y_tensor(p, *pair, 1e-6)
        assert tensor.value == pytest.approx(fast, rel=5e-5)


class TestCovMatrix:
    def test_single_point_brownian(self, bm_params):
        cm = cov_matrix(bm_params, [1.0], which="X")
        assert cm.entries == pytest.approx(np.array([[1.0]]), rel=1e-9)

    def test_two_point_brownian(self, bm_params):
        cm = cov_matrix(bm_params, [0.5, 1.0], which="X")
        assert cm.entries == pytest.approx(
            np.array([[0.5, 0.5], [0.5, 1.0]]), rel=1e-9
        )
        assert np.array_equal(cm.entries, cm.entries.T)

    def test_dyadic_y_matrix_psd(self, std_params):
        grid = np.arange(1, 65) / 64.0
        cm = cov_matrix(std_params, grid, which="Y", tol=1e-9)
        eigmin = float(np.linalg.eigvalsh(cm.entries).min())
        scale = float(np.trace(cm.entries)) / cm.grid.size
        assert eigmin >= -10.0 * max(cm.max_quad_error, 1e-14) * max(scale, 1.0)
        assert cm.process_tag == "Y"
        assert cm.max_quad_error < 1e-7

    def test_grid_validation(self, bm_params):
        with pytest.raises(ValueError):
            cov_matrix(bm_params, [0.0, 1.0])
        with pytest.raises(ValueError):
            cov_matrix(bm_params, [1.0, 0.5])
        with pytest.raises(ValueError):
            cov_matrix(bm_params, [])

    def test_csv_round_trip(self, bm_params, tmp_path):
        cm = cov_matrix(bm_params, [0.25, 0.5, 1.0], which="X")
        path = tmp_path / "cov.csv"
        cm.to_csv(path)
        back = CovMatrix.from_csv(path, process_tag="X")
        assert np.array_equal(back.grid, cm.grid)
        assert np.array_equal(back.entries, cm.entries)


class TestLamperti:
    def test_t_zero_is_unit_variance(self, std_params):
        assert lamperti_autocov(std_params, 0.0) == pytest.approx(
            cov_y(std_params, 1.0, 1.0), rel=1e-10
        )

    def test_integrated_brownian_value(self, bm_params):
        # e^{-1.5 ln 2} * int_0^2 int_0^1 min(u,v) du dv = 2^{-1.5} * 5/6
        got = lamperti_autocov(bm_params, math.log(2.0))
        assert got == pytest.approx(2.0 ** -1.5 * 5.0 / 6.0, rel=1e-9)

    def test_decay_and_rate_band(self, std_params):
        vals = np.array([lamperti_autocov(std_params, float(t)) for t in range(6)])
        assert np.all(np.diff(vals) < 0.0)
        slope = np.polyfit(np.arange(1, 6), np.log(vals[1:]), 1)[0]
        a, g = std_params.alpha, std_params.gamma
        delta_mid = 0.5 * ((max(a - g, 0.0) / (1 - a)) + (0.5 - g / 2) / (1 - a))
        floor = 0.5 * min(a + 0.5 - g / 2, 0.5 - g / 2 - delta_mid * (1 - a))
        assert slope < 0.0
        assert abs(slope) >= floor

    def test_negative_t_rejected(self, std_params):
        with pytest.raises(ValueError):
            lamperti_autocov(std_params, -1.0)
