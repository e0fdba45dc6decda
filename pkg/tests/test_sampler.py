import math

import numpy as np
import pytest

from gfbm_lab import validate
from gfbm_lab.covariance import cov_x, cov_y
from gfbm_lab.sampler import (
    GridTooCoarseWarning,
    NotFactorizableError,
    PathBatch,
    build_noise_mesh,
    discretized_cov,
    factorize,
    frac_integral,
    iter_gaussian_blocks,
    rl_weights,
    sample_gaussian,
    sample_x_discretized,
    sup_statistic,
)


def synthetic_batch(grid, values):
    return PathBatch(grid=np.asarray(grid, float), values=np.asarray(values, float),
                     seed=0, generator_tag="synthetic", params=None)


class TestFactorize:
    def test_identity(self):
        f = factorize(np.eye(3))
        assert f.jitter == 0.0
        assert np.allclose(f.lower, np.eye(3))

    def test_brownian_two_by_two(self):
        f = factorize(np.array([[0.5, 0.5], [0.5, 1.0]]))
        r = math.sqrt(0.5)
        assert f.lower == pytest.approx(np.array([[r, 0.0], [r, r]]), rel=1e-12)

    def test_rank_deficient_needs_tiny_jitter(self):
        f = factorize(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert 0.0 < f.jitter <= 1e-8

    def test_reconstruction_invariant(self, std_params):
        grid = np.arange(1, 17) / 16.0
        cm = discretized_cov(std_params, grid, process="Y")
        f = factorize(cm)
        err = np.abs(f.lower @ f.lower.T - cm.entries).max()
        assert err <= f.jitter + 1e-10 * np.abs(cm.entries).max()

    def test_indefinite_rejected(self):
        with pytest.raises(NotFactorizableError):
            factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            factorize(np.array([[1.0, 0.3], [0.2, 1.0]]))


class TestSampleGaussian:
    def test_single_standard_normal_reproducible(self):
        f = factorize(np.array([[1.0]]))
        b1 = sample_gaussian(f, 1, seed=7)
        b2 = sample_gaussian(f, 1, seed=7)
        assert b1.values.shape == (1, 1)
        assert np.array_equal(b1.values, b2.values)
        assert abs(b1.values[0, 0]) < 6.0

    def test_paths_are_pure_function_of_seed_and_index(self):
        f = factorize(np.eye(4))
        big = sample_gaussian(f, 3000, seed=11)
        small = sample_gaussian(f, 1100, seed=11)
        assert np.array_equal(big.values[:1100], small.values)

    def test_seeds_decorrelate(self):
        f = factorize(np.eye(2))
        a = sample_gaussian(f, 100, seed=1).values
        b = sample_gaussian(f, 100, seed=2).values
        assert not np.allclose(a, b)

    def test_marginal_variance(self):
        f = factorize(np.array([[2.0]]))
        n = 100_000
        batch = sample_gaussian(f, n, seed=5)
        v = batch.values[:, 0].var()
        assert abs(v - 2.0) <= 3.0 * math.sqrt(2.0 / n) * 2.0

    def test_empirical_covariance_matrix(self, bm_params):
        grid = np.array([0.25, 0.5, 1.0])
        from gfbm_lab.covariance import cov_matrix

        cm = cov_matrix(bm_params, grid, which="X")
        n = 100_000
        batch = sample_gaussian(factorize(cm), n, seed=9)
        emp = np.cov(batch.values.T, bias=True)
        for i in range(3):
            for j in range(3):
                sigma = math.sqrt(
                    (cm.entries[i, i] * cm.entries[j, j] + cm.entries[i, j] ** 2) / n
                )
                assert abs(emp[i, j] - cm.entries[i, j]) <= 4.0 * sigma

    def test_streaming_matches_batch(self):
        f = factorize(np.eye(3))
        batch = sample_gaussian(f, 2500, seed=3)
        rows = np.empty_like(batch.values)
        for start, block in iter_gaussian_blocks(f, 2500, seed=3):
            rows[start:start + block.shape[0]] = block
        assert np.array_equal(rows, batch.values)


class TestDiscretizedRoute:
    def test_brownian_variance(self, bm_params):
        grid = np.arange(1, 4097) / 4096.0
        batch = sample_x_discretized(bm_params, grid, noise_mesh=4096,
                                     n_paths=4000, seed=3)
        v = batch.values[:, -1].var()
        assert v == pytest.approx(1.0, rel=0.05)
        # the operator covariance is exact for the indicator kernel
        cm = discretized_cov(bm_params, grid[:64] , process="X", noise_mesh=4096)
        assert cm.entries[-1, -1] == pytest.approx(grid[63], rel=1e-12)

    def test_variance_against_quadrature(self, std_params):
        grid = np.arange(1, 65) / 64.0
        cm = discretized_cov(std_params, grid, process="X", noise_mesh=4096)
        target = cov_x(std_params, 1.0, 1.0)
        assert cm.entries[-1, -1] == pytest.approx(target, rel=0.03)
        batch = sample_x_discretized(std_params, grid, noise_mesh=4096,
                                     n_paths=20_000, seed=4)
        v = batch.values[:, -1].var()
        assert v == pytest.approx(target, rel=0.03 + 3.0 * math.sqrt(2.0 / 20_000))

    @pytest.mark.slow
    def test_mesh_doubling_halves_bias(self, std_params):
        # self-convergence study at fixed domain cut
        grid = np.arange(1, 65) / 64.0
        ref = discretized_cov(std_params, grid, process="X",
                              noise_mesh=65536).entries[-1, -1]
        biases = []
        for mesh in (2048, 4096, 8192):
            v = discretized_cov(std_params, grid, process="X",
                                noise_mesh=mesh).entries[-1, -1]
            biases.append(abs(v - ref))
        assert biases[1] <= 0.65 * biases[0] + 1e-12
        assert biases[2] <= 0.65 * biases[1] + 1e-12

    def test_mesh_validation(self, std_params):
        with pytest.raises(ValueError):
            build_noise_mesh(std_params, [0.5, 1.0], noise_mesh=100)
        with pytest.raises(ValueError):
            build_noise_mesh(std_params, [1.0, 0.5])

    def test_reproducible_and_prefix_stable(self, std_params):
        grid = np.arange(1, 17) / 16.0
        a = sample_x_discretized(std_params, grid, n_paths=2100, seed=42)
        b = sample_x_discretized(std_params, grid, n_paths=2100, seed=42)
        c = sample_x_discretized(std_params, grid, n_paths=1500, seed=42)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.values[:1500], c.values)
        assert a.generator_tag == "discretized"


class TestFracIntegral:
    def test_constant_path_unit_theta_exact(self):
        grid = np.arange(1, 33) / 32.0
        batch = synthetic_batch(grid, np.ones((1, 32)))
        y = frac_integral(batch, 1.0, origin="extend")
        assert np.abs(y.values[0] - grid).max() == 0.0

    def test_linear_path_power_rule_exact(self):
        grid = np.arange(1, 33) / 32.0
        batch = synthetic_batch(grid, grid[None, :])
        y = frac_integral(batch, 0.5, origin="zero")
        expect = grid ** 1.5 / math.gamma(2.5)
        assert np.abs(y.values[0] / expect - 1.0).max() < 1e-13

    def test_quadratic_path_power_rule(self):
        # piecewise-linear interpolation error shows up at O(h^2)
        grid = np.arange(1, 257) / 256.0
        batch = synthetic_batch(grid, (grid ** 2)[None, :])
        y = frac_integral(batch, 0.5, origin="zero")
        expect = grid ** 2.5 * math.gamma(3.0) / math.gamma(3.5)
        assert np.abs(y.values[0] / expect - 1.0).max() < 1e-4

    def test_brownian_integrated_variance(self, bm_params):
        grid = np.arange(1, 257) / 256.0
        x = sample_x_discretized(bm_params, grid, noise_mesh=512,
                                 n_paths=20_000, seed=8)
        y = frac_integral(x, 1.0)
        v = y.values[:, -1].var()
        assert v == pytest.approx(1.0 / 3.0, rel=0.05)

    def test_invalid_args(self):
        grid = np.arange(1, 5) / 4.0
        batch = synthetic_batch(grid, np.zeros((1, 4)))
        with pytest.raises(ValueError):
            frac_integral(batch, 0.0)
        with pytest.raises(ValueError):
            frac_integral(batch, 0.5, origin="bogus")

    def test_weights_lower_triangular(self):
        W = rl_weights(np.arange(1, 9) / 8.0, 0.7)
        assert np.allclose(W, np.tril(W))


class TestSupStatistic:
    def test_constant_path(self):
        grid = np.arange(1, 65) / 64.0
        batch = synthetic_batch(grid, np.full((1, 64), -2.5))
        assert sup_statistic(batch, 1.0)[0] == 2.5

    def test_sign_mix(self):
        grid = np.array([0.25, 0.5, 0.75])
        batch = synthetic_batch(grid, np.array([[1.0, -3.0, 2.0]]))
        with pytest.warns(GridTooCoarseWarning):
            assert sup_statistic(batch, 0.75)[0] == 3.0

    def test_prefix_restriction(self):
        grid = np.arange(1, 65) / 64.0
        vals = np.zeros((1, 64))
        vals[0, -1] = 9.0
        batch = synthetic_batch(grid, vals)
        assert sup_statistic(batch, 0.5)[0] == 0.0
        assert sup_statistic(batch, 1.0)[0] == 9.0

    def test_beyond_grid_rejected(self):
        grid = np.arange(1, 65) / 64.0
        batch = synthetic_batch(grid, np.zeros((1, 64)))
        with pytest.raises(ValueError):
            sup_statistic(batch, 2.0)


class TestTwoRouteAgreement:
    def test_marginal_variances_small(self, std_params):
        from gfbm_lab.covariance import cov_matrix

        grid = np.arange(1, 17) / 16.0
        n = 4000
        cm = cov_matrix(std_params, grid, which="Y", tol=1e-8)
        chol = sample_gaussian(factorize(cm), n, seed=21)
        disc = frac_integral(
            sample_x_discretized(std_params, grid, noise_mesh=4096,
                                 n_paths=n, seed=22),
            std_params.theta,
        )
        v1 = chol.values.var(axis=0)
        v2 = disc.values.var(axis=0)
        sigma = np.sqrt(2.0 / n) * np.sqrt(v1 ** 2 + v2 ** 2)
        assert np.all(np.abs(v1 - v2) <= 3.0 * sigma + 0.03 * np.diag(cm.entries))


class TestSerialization:
    def test_binary_round_trip(self, std_params, tmp_path):
        grid = np.arange(1, 9) / 8.0
        batch = sample_x_discretized(std_params, grid, n_paths=5, seed=13)
        path = tmp_path / "paths.bin"
        batch.to_binary(path)
        back = PathBatch.from_binary(path)
        assert np.array_equal(back.values, batch.values)
        assert np.array_equal(back.grid, batch.grid)
        assert back.seed == batch.seed
        assert back.generator_tag == "discretized"
        assert back.params == std_params

    def test_binary_magic_checked(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(ValueError):
            PathBatch.from_binary(path)

    def test_csv_written(self, std_params, tmp_path):
        grid = np.arange(1, 5) / 4.0
        batch = sample_x_discretized(std_params, grid, n_paths=3, seed=1)
        path = tmp_path / "paths.csv"
        batch.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 4  # header + 3 paths
        assert len(lines[0].split(",")) == 4
