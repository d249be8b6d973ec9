"""Dirichlet kernel, estimator, smoothing moments and variance asymptotics."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dirichlet_kde.densities import LinearDensity, UniformDensity, f3_exact_bias
from dirichlet_kde.errors import DomainError
from dirichlet_kde.kernel import (
    BandwidthSpec,
    DirichletKDE,
    DirichletParams,
    bandwidth_rule,
    estimate,
    estimate_field,
    estimator_params,
    expected_estimate,
    kernel_log_density,
    kernel_shift_value,
    shift_factorization,
    theoretical_variance_factor,
    variance_approx,
    xi_mean_var,
)
from dirichlet_kde.simplex import integrate_mc, sample_dirichlet, sample_uniform
from dirichlet_kde.special_fn import stirling_ratio

mpmath.mp.dps = 50


def _mp_log_kernel(u, v, x):
    u = [mpmath.mpf(float(a)) for a in u]
    v = mpmath.mpf(float(v))
    x = [mpmath.mpf(float(t)) for t in x]
    out = mpmath.loggamma(sum(u) + v) - mpmath.loggamma(v) - sum(mpmath.loggamma(a) for a in u)
    out += (v - 1) * mpmath.log(1 - sum(x))
    out += sum((a - 1) * mpmath.log(t) for a, t in zip(u, x))
    return out


def _mp_kernel_square_integral(s, b):
    """Closed form of int K^2 over the simplex, at 50 digits."""
    s = [mpmath.mpf(float(t)) for t in s]
    b = mpmath.mpf(float(b))
    shapes = [t / b + 1 for t in s] + [(1 - sum(s)) / b + 1]
    total = sum(shapes)
    log_val = 2 * mpmath.loggamma(total) - mpmath.loggamma(2 * total - len(shapes))
    for a in shapes:
        log_val += mpmath.loggamma(2 * a - 1) - 2 * mpmath.loggamma(a)
    return mpmath.exp(log_val)


class TestKernelLogDensity:
    def test_flat(self):
        p = DirichletParams((1.0, 1.0), 1.0)
        for x in ([0.1, 0.2], [0.0, 0.0], [0.5, 0.5]):
            np.testing.assert_allclose(kernel_log_density(p, x), math.log(2.0), rtol=1e-15)

    def test_beta_two_two(self):
        p = DirichletParams((2.0,), 2.0)
        np.testing.assert_allclose(kernel_log_density(p, 0.5), math.log(1.5), rtol=1e-15)
        assert kernel_log_density(p, 0.0) == -np.inf
        assert kernel_log_density(p, 1.0) == -np.inf

    def test_negative_exponent_at_zero(self):
        p = DirichletParams((0.5,), 2.0)
        assert kernel_log_density(p, 0.0) == np.inf

    def test_vectorized_matches_scalar(self):
        p = DirichletParams((3.0, 2.5), 4.0)
        X = sample_uniform(2, 50, seed=1)
        batch = kernel_log_density(p, X)
        assert batch.shape == (50,)
        for x, val in zip(X, batch):
            assert kernel_log_density(p, x) == val

    def test_against_scipy_dirichlet(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            d = int(rng.integers(1, 5))
            u = rng.uniform(0.5, 40.0, d)
            v = rng.uniform(0.5, 40.0)
            x = sample_uniform(d, 1, rng)[0]
            full = np.append(x, 1.0 - x.sum())
            ref = stats.dirichlet.logpdf(full / full.sum(), np.append(u, v))
            np.testing.assert_allclose(kernel_log_density(DirichletParams(u, v), x), ref,
                                       rtol=1e-10)

    def test_against_beta_pdf(self):
        xs = np.linspace(0.01, 0.99, 40)
        got = kernel_log_density(DirichletParams((7.5,), 3.25), xs)
        np.testing.assert_allclose(got, stats.beta(7.5, 3.25).logpdf(xs), rtol=1e-12)

    @pytest.mark.parametrize("method", ["direct", "stirling"])
    def test_large_shapes_high_precision(self, method):
        for s, b in [((0.3,), 1e-4), ((0.2, 0.3), 1e-3), ((0.5,), 1e-5)]:
            p = estimator_params(s, b)
            x = np.asarray(s) + 0.5 * math.sqrt(b)
            ref = float(mpmath.exp(_mp_log_kernel(p.u, p.v, x)))
            got = math.exp(kernel_log_density(p, x, method=method))
            tol = 2e-10 if method == "direct" else 1e-11
            np.testing.assert_allclose(got, ref, rtol=tol)

    def test_stirling_needs_shapes_above_one(self):
        with pytest.raises(DomainError):
            kernel_log_density(DirichletParams((0.5,), 2.0), 0.3, method="stirling")

    def test_outside_simplex(self):
        p = DirichletParams((2.0, 2.0), 2.0)
        with pytest.raises(DomainError):
            kernel_log_density(p, [0.7, 0.7])
        with pytest.raises(DomainError):
            kernel_log_density(p, [0.1, 0.1, 0.1])

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            DirichletParams((1.0, 0.0), 1.0)
        with pytest.raises(DomainError):
            DirichletParams((1.0,), np.nan)

    def test_normalization_random_params(self):
        rng = np.random.default_rng(12)
        for d in (1, 2, 3):
            u = rng.uniform(1.0, 30.0, d)
            v = rng.uniform(1.0, 30.0)
            p = DirichletParams(u, v)
            wide = DirichletParams(0.5 * (u - 1) + 1, 0.5 * (v - 1) + 1)
            est = integrate_mc(lambda S: np.exp(kernel_log_density(p, S)), d, 100_000,
                               seed=d, proposal=wide)
            assert abs(est.value - 1.0) <= 4 * est.stderr


class TestEstimatorParams:
    def test_example(self):
        p = estimator_params([0.3, 0.2], 0.01)
        np.testing.assert_allclose(p.u, (31.0, 21.0), rtol=1e-14)
        np.testing.assert_allclose(p.v, 51.0, rtol=1e-14)

    def test_vertex(self):
        p = estimator_params([0.0, 0.0], 0.1)
        assert p.u == (1.0, 1.0)
        np.testing.assert_allclose(p.v, 11.0, rtol=1e-15)

    @given(st.floats(1e-6, 0.999), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_shapes_at_least_one(self, b, a, c):
        s = [a * (1 - c), a * c]
        p = estimator_params(s, b)
        assert min(p.u + (p.v,)) >= 1.0

    def test_bad_bandwidth(self):
        with pytest.raises(DomainError):
            estimator_params([0.3], 0.0)


class TestEstimate:
    def test_single_observation(self):
        X = np.array([[0.2, 0.3]])
        s = [0.25, 0.25]
        expected = math.exp(kernel_log_density(estimator_params(s, 0.1), X[0]))
        assert estimate(X, 0.1, s) == expected

    def test_three_points_beta_oracle(self):
        sample = [0.2, 0.5, 0.8]
        # u = v = 0.5/0.1 + 1 = 6
        expected = np.mean(stats.beta(6.0, 6.0).pdf(sample))
        np.testing.assert_allclose(estimate(sample, 0.1, 0.5), expected, rtol=1e-13)

    def test_brute_force_two_dimensional(self):
        X = sample_uniform(2, 200, seed=4)
        S = sample_uniform(2, 10, seed=5)
        got = DirichletKDE(X, 0.05)(S)
        for s, g in zip(S, got):
            p = estimator_params(s, 0.05)
            full = np.column_stack([X, 1.0 - X.sum(axis=1)])
            ref = np.mean(stats.dirichlet.pdf(full.T / full.sum(axis=1), np.append(p.u, p.v)))
            np.testing.assert_allclose(g, ref, rtol=1e-10)

    def test_integrates_to_about_one(self):
        X = sample_uniform(1, 1000, seed=7)
        kde = DirichletKDE(X, 1e-3)
        est = integrate_mc(kde, 1, 100_000, seed=8)
        assert abs(est.value - 1.0) < 0.05

    def test_boundary_data_contribute_zero(self):
        X = np.array([[0.0], [0.5]])
        kde = DirichletKDE(X, 0.1)
        only = DirichletKDE(np.array([[0.5]]), 0.1)
        np.testing.assert_allclose(kde([0.3, 0.6]), 0.5 * only([0.3, 0.6]), rtol=1e-14)

    def test_boundary_evaluation_point(self):
        X = sample_uniform(2, 100, seed=1)
        values = DirichletKDE(X, 0.05)([[0.0, 0.0], [1.0, 0.0], [0.5, 0.5]])
        assert np.all(np.isfinite(values)) and np.all(values >= 0)

    def test_duplicating_sample(self):
        X = sample_uniform(2, 300, seed=2)
        S = sample_uniform(2, 20, seed=3)
        a = DirichletKDE(X, 0.02)(S)
        b = DirichletKDE(np.vstack([X, X]), 0.02)(S)
        np.testing.assert_allclose(a, b, rtol=1e-13)

    def test_bandwidth_override(self):
        X = sample_uniform(1, 100, seed=1)
        kde = DirichletKDE(X, 0.1)
        assert np.array_equal(kde([0.4], b=0.05), DirichletKDE(X, 0.05)([0.4]))

    @pytest.mark.parametrize("b", [0.0, 1.0, -0.2])
    def test_bad_bandwidth(self, b):
        with pytest.raises(DomainError):
            DirichletKDE([0.5], b)

    def test_data_outside_simplex(self):
        with pytest.raises(DomainError):
            DirichletKDE([[0.6, 0.6]], 0.1)

    def test_large_block_count(self):
        # more evaluation points than one block holds
        X = sample_uniform(1, 5000, seed=1)
        S = np.linspace(0.0, 1.0, 301)
        kde = DirichletKDE(X, 0.01)
        whole = kde(S)
        np.testing.assert_array_equal(whole[150:], kde(S[150:]))


class TestEstimateField:
    def test_singleton(self):
        X = sample_uniform(2, 50, seed=0)
        field = estimate_field(X, 0.05, [[0.2, 0.3]])
        assert field.values[0] == estimate(X, 0.05, [0.2, 0.3])
        assert field.n == 50 and field.b == 0.05

    def test_permutation(self):
        X = sample_uniform(2, 80, seed=1)
        S = sample_uniform(2, 30, seed=2)
        perm = np.random.default_rng(0).permutation(30)
        a = estimate_field(X, 0.03, S).values
        b = estimate_field(X, 0.03, S[perm]).values
        assert np.array_equal(a[perm], b)

    def test_batch_matches_scalar_bitwise(self):
        X = sample_uniform(1, 400, seed=3)
        grid = np.linspace(0.0, 1.0, 100)
        field = estimate_field(X, 0.02, grid)
        scalar = np.array([estimate(X, 0.02, s) for s in grid])
        assert field.values.tobytes() == scalar.tobytes()
        assert np.all(field.values >= 0) and np.all(np.isfinite(field.values))


class TestSmoothingMoments:
    def test_example(self):
        mean, var = xi_mean_var([0.3, 0.2], 0.01)
        np.testing.assert_allclose(mean[0], 31 / 103, rtol=1e-14)
        np.testing.assert_allclose(var[0], 31 * 72 / (103**2 * 104), rtol=1e-13)
        np.testing.assert_allclose(mean[0], 0.3009709, atol=1e-7)

    def test_linear_convergence(self):
        s = np.array([0.3, 0.2])
        bs = np.array([1e-2, 1e-3, 1e-4, 1e-5])
        gaps = np.array([xi_mean_var(s, b)[0] - s for b in bs])
        ratios = gaps / bs[:, None]
        # (E xi - s)/b -> 1 - (d + 1) s
        np.testing.assert_allclose(ratios[-1], 1 - 3 * s, rtol=1e-4)
        assert all(xi_mean_var(s, b)[1].max() < 1e-4 for b in [1e-5])

    @pytest.mark.parametrize("s", [[0.3], [0.2, 0.5], [0.1, 0.2, 0.3]])
    @pytest.mark.parametrize("b", [0.05, 0.01])
    def test_against_draws(self, s, b):
        n = 100_000
        mean, var = xi_mean_var(s, b)
        X = sample_dirichlet(estimator_params(s, b), n, seed=hash((tuple(s), b)) % 2**32)
        for k in range(len(s)):
            x = X[:, k]
            assert abs(x.mean() - mean[k]) <= 4 * x.std() / math.sqrt(n)
            dev = (x - mean[k]) ** 2
            assert abs(dev.mean() - var[k]) <= 4 * dev.std() / math.sqrt(n)

    def test_marginal_is_beta(self):
        s, b = [0.3, 0.2], 0.01
        mean, var = xi_mean_var(s, b)
        dist = stats.beta(0.3 / b + 1, 0.7 / b + 2)
        np.testing.assert_allclose([dist.mean(), dist.var()], [mean[0], var[0]], rtol=1e-12)

    @given(st.floats(1e-6, 1e-2), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_second_moment_bound(self, b, a, c):
        s = np.array([a * (1 - c), a * c])
        mean, var = xi_mean_var(s, b)
        assert np.all(var + (mean - s) ** 2 <= b)

    def test_absolute_deviation_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(6):
            d = int(rng.integers(1, 4))
            b = 10 ** rng.uniform(-4, -2)
            s = sample_uniform(d, 1, rng)[0]
            X = sample_dirichlet(estimator_params(s, b), 50_000, rng)
            dev = np.abs(X - s).sum(axis=1)
            assert dev.mean() - 3 * dev.std() / math.sqrt(len(dev)) <= d * math.sqrt(b)

    def test_bad_bandwidth(self):
        with pytest.raises(DomainError):
            xi_mean_var([0.2], -1.0)


class TestExpectedEstimate:
    def test_constant(self):
        est = expected_estimate(UniformDensity(2), [0.2, 0.3], 0.01, 1000, seed=0)
        assert est.value == 2.0 and est.stderr == 0.0

    def test_linear_density(self):
        # xi ~ Beta(51, 51) is symmetric about 1/2, so E f3(xi) = 1 exactly
        est = expected_estimate(LinearDensity(1), [0.5], 0.01, 200_000, seed=1)
        assert f3_exact_bias([0.5], 0.01) == 0.0
        assert abs(est.value - 1.0) <= 4 * est.stderr
        for s in (0.1, 0.8):
            est = expected_estimate(LinearDensity(1), [s], 0.01, 200_000, seed=2)
            target = 2 * s + f3_exact_bias([s], 0.01)
            assert abs(est.value - target) <= 4 * est.stderr

    def test_bias_identity_linear(self):
        for s in ([0.2, 0.3], [0.1, 0.1, 0.6]):
            d = len(s)
            f = LinearDensity(d)
            est = expected_estimate(f, s, 0.02, 200_000, seed=d)
            mean, _ = xi_mean_var(s, 0.02)
            exact = f.scale * mean.sum()
            assert abs(est.value - exact) <= 4 * est.stderr


class TestBandwidthRule:
    def test_example(self):
        np.testing.assert_allclose(bandwidth_rule(1.0, 1024, 1, 2.0), 0.0625, rtol=1e-15)

    def test_linear_in_c(self):
        for n in (10, 100, 1000):
            assert bandwidth_rule(2.0, n, 2, 1.5) == 2.0 * bandwidth_rule(1.0, n, 2, 1.5)

    def test_decreasing(self):
        vals = [bandwidth_rule(0.7, n, 3, 2.0) for n in range(1, 200)]
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("args", [(0.0, 10, 1, 2.0), (1.0, 0, 1, 2.0), (1.0, 10, 1, 0.0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            bandwidth_rule(*args)

    def test_spec(self):
        assert BandwidthSpec.fixed(0.1).at(10, 1) == 0.1
        np.testing.assert_allclose(BandwidthSpec.rule(1.0, 2.0).at(1024, 1), 0.0625)
        with pytest.raises(DomainError):
            BandwidthSpec.rule(5.0, 2.0).at(2, 1)
        with pytest.raises(DomainError):
            BandwidthSpec(b=0.1, c=1.0, beta=2.0)
        with pytest.raises(DomainError):
            BandwidthSpec()


class TestVarianceFactor:
    @pytest.mark.parametrize(
        "s, b",
        [([0.5], 1e-2), ([0.5], 1e-4), ([0.1], 1e-3), ([0.2, 0.3], 1e-3), ([0.1, 0.2, 0.3], 1e-2)],
    )
    def test_equals_square_integral(self, s, b):
        ref = float(_mp_kernel_square_integral(s, b))
        np.testing.assert_allclose(theoretical_variance_factor(s, b), ref, rtol=1e-11)

    def test_small_b_limit(self):
        b = 1e-6
        val = theoretical_variance_factor([0.5], b) * math.sqrt(b) * math.sqrt(4 * math.pi * 0.25)
        assert abs(val - 1.0) < 0.02

    def test_moderate_b(self):
        b = 1e-4
        approx = b**-0.5 / (math.sqrt(4 * math.pi) * 0.5)
        np.testing.assert_allclose(theoretical_variance_factor([0.5], b), approx, rtol=0.02)

    def test_lower_bound(self):
        rng = np.random.default_rng(1)
        r1 = stirling_ratio(1.0)
        for d in (1, 2, 3):
            for _ in range(10):
                b = 10 ** rng.uniform(-5, -1.5)
                s = b + (1 - (d + 1) * b) * sample_uniform(d, 1, rng)[0]
                prod = (1 - s.sum()) * np.prod(s)
                bound = r1 ** (2 * (d + 1)) * b ** (-d / 2) * (4 * math.pi) ** (-d / 2) / math.sqrt(prod)
                assert theoretical_variance_factor(s, b) >= bound

    def test_boundary_rejected(self):
        with pytest.raises(DomainError):
            theoretical_variance_factor([0.0, 0.5], 0.01)
        with pytest.raises(DomainError):
            theoretical_variance_factor([0.5, 0.5], 0.01)

    def test_variance_approx(self):
        a = theoretical_variance_factor([0.3], 1e-3)
        np.testing.assert_allclose(variance_approx(100, [0.3], 1e-3, 0.6), a * 0.6 / 100)


class TestKernelShift:
    def test_zero_shift_is_centre(self):
        for s in ([0.5], [0.2, 0.3]):
            p = estimator_params(s, 1e-3)
            centre = math.exp(kernel_log_density(p, s, method="stirling"))
            np.testing.assert_allclose(kernel_shift_value(s, 0.0, 1e-3), centre, rtol=1e-14)
            f = shift_factorization(s, 0.0, 1e-3)
            assert f.q == 1.0

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_floor(self, s):
        scaled = [kernel_shift_value([s], 1.0, b) * math.sqrt(b) for b in (1e-3, 1e-4, 1e-5)]
        assert min(scaled) >= 0.05

    def test_against_high_precision(self):
        for s, delta, b in [([0.5], 1.0, 1e-5), ([0.25], 2.5, 1e-4), ([0.15, 0.2], 1.0, 1e-4)]:
            p = estimator_params(s, b)
            x = np.asarray(s) + delta * math.sqrt(b)
            ref = float(mpmath.exp(_mp_log_kernel(p.u, p.v, x)))
            np.testing.assert_allclose(kernel_shift_value(s, delta, b), ref, rtol=1e-10)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_factorization(self, d):
        rng = np.random.default_rng(d)
        for _ in range(5):
            s = rng.uniform(1 / (4 * d), 3 / (4 * d), d)
            b = 10 ** rng.uniform(-6, -3)
            delta = rng.uniform(0, 2.5)
            if (s + delta * math.sqrt(b)).sum() >= 1:
                continue
            f = shift_factorization(s, delta, b)
            np.testing.assert_allclose(f.center * f.q, f.value, rtol=1e-10)
            np.testing.assert_allclose(f.w * f.r, f.center, rtol=1e-14)

    def test_q_limit(self):
        for s in ([0.5], [0.25], [0.2, 0.3]):
            s = np.array(s)
            d = s.size
            delta = 1.0
            rest = 1 - s.sum()
            limit = math.exp(-0.5 * delta**2 * np.sum(1 / s) - d**2 * delta**2 / (2 * rest))
            q = shift_factorization(s, delta, 1e-6).q
            assert abs(q / limit - 1) < 0.02

    def test_domain(self):
        with pytest.raises(DomainError):
            kernel_shift_value([0.1], 1.0, 1e-4)
        with pytest.raises(DomainError):
            kernel_shift_value([0.5], 3.0, 1e-4)
        with pytest.raises(DomainError):
            kernel_shift_value([0.5], 2.9, 0.5)
