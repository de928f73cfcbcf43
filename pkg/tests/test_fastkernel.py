import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nbproj.fastkernel import (KernelSpec, bin_sample, fast_kernel_deriv_sums, fast_kernel_sums,
                               kde_per_class, kernel_deriv, kernel_eval, kernel_sums)

SPEC = KernelSpec()


def brute(sample, w, e, h=1.0):
    d = (e[:, None] - sample[None, :]) / h
    a = np.abs(d)
    return ((1 + a) * np.exp(-a) / 4) @ w, (-d * np.exp(-a) / 4) @ w


class TestKernel:
    def test_values(self):
        assert kernel_eval(SPEC, 0.0) == 0.25
        np.testing.assert_allclose(kernel_eval(SPEC, 1.0), 0.5 * np.exp(-1), rtol=1e-15)
        assert kernel_deriv(SPEC, 0.0) == 0.0
        np.testing.assert_allclose(kernel_deriv(SPEC, 1.0), -np.exp(-1) / 4, rtol=1e-15)

    def test_integrates_to_one(self):
        total = quad(lambda x: kernel_eval(SPEC, x), -40, 40, points=[0], limit=200)[0]
        assert abs(total - 1) < 1e-8

    def test_symmetry(self, rng):
        x = rng.normal(0, 5, 100)
        np.testing.assert_array_equal(kernel_eval(SPEC, x), kernel_eval(SPEC, -x))
        np.testing.assert_array_equal(kernel_deriv(SPEC, x), -kernel_deriv(SPEC, -x))

    def test_derivative_matches_difference_quotient(self, rng):
        x = rng.normal(0, 3, 50)
        step = 1e-6
        fd = (kernel_eval(SPEC, x + step) - kernel_eval(SPEC, x - step)) / (2 * step)
        np.testing.assert_allclose(kernel_deriv(SPEC, x), fd, atol=1e-9)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            KernelSpec(bandwidth=0.0)
        with pytest.raises(ValueError):
            KernelSpec(family="gaussian")


class TestExactSums:
    def test_single_point(self):
        assert fast_kernel_sums(SPEC, [0.0], [1.0], [0.0])[0] == pytest.approx(0.25, abs=1e-15)
        assert fast_kernel_deriv_sums(SPEC, [0.0], [1.0], [0.0])[0] == 0.0

    def test_symmetric_pair(self):
        ks = fast_kernel_sums(SPEC, [-1.0, 1.0], [1.0, 1.0], [0.0])
        np.testing.assert_allclose(ks, [np.exp(-1)], rtol=1e-14)
        ds = fast_kernel_deriv_sums(SPEC, [-1.0, 1.0], [1.0, 1.0], [0.0])
        np.testing.assert_allclose(ds, [0.0], atol=1e-16)

    def test_brute_force(self, rng):
        x = rng.uniform(-50, 50, 500)
        e = rng.uniform(-50, 50, 500)
        w = rng.uniform(0, 1, 500)
        bk, bd = brute(x, w, e)
        ks, ds = kernel_sums(SPEC, x, w, e)
        np.testing.assert_allclose(ks, bk, rtol=1e-10)
        scale = brute(x, w, e)[0]  # dominates |sum w K'| pointwise since |x|e^-|x| <= (1+|x|)e^-|x|
        assert np.max(np.abs(ds - bd) / scale) < 1e-10

    def test_weight_matrix_and_bandwidth(self, rng):
        x, e = rng.normal(0, 3, 80), rng.normal(0, 3, 30)
        W = rng.uniform(0, 1, (80, 3))
        spec = KernelSpec(bandwidth=0.7)
        ks, ds = kernel_sums(spec, x, W, e)
        bk, bd = brute(x, W, e, h=0.7)
        np.testing.assert_allclose(ks, bk, rtol=1e-12)
        np.testing.assert_allclose(ds, bd, rtol=1e-9, atol=1e-13)

    def test_far_points_no_overflow(self):
        x = np.array([-1e4, 0.0, 1e4])
        ks = fast_kernel_sums(SPEC, x, np.ones(3), x)
        np.testing.assert_allclose(ks, [0.25] * 3, rtol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=40),
           st.lists(st.floats(-30, 30), min_size=1, max_size=20))
    def test_property_matches_brute(self, xs, es):
        x, e = np.array(xs), np.array(es)
        w = np.ones_like(x)
        bk, bd = brute(x, w, e)
        ks, ds = kernel_sums(SPEC, x, w, e)
        np.testing.assert_allclose(ks, bk, rtol=1e-10)
        assert np.all(np.abs(ds - bd) <= 1e-10 * bk + 1e-300)


class TestBinning:
    def test_point_on_node(self):
        b = bin_sample([0.0, 0.5, 1.0], [1.0, 2.0, 3.0], m=3)
        np.testing.assert_allclose(b.weights, [1.0, 2.0, 3.0])

    def test_midway(self):
        b = bin_sample([0.0, 0.25, 1.0], [0.0, 1.0, 0.0], m=3)
        np.testing.assert_allclose(b.weights, [0.5, 0.5, 0.0])

    def test_mass_preserved(self, rng):
        x, w = rng.normal(size=1000), rng.uniform(size=1000)
        b = bin_sample(x, w, m=101)
        np.testing.assert_allclose(b.weights.sum(), w.sum(), rtol=1e-12)
        np.testing.assert_allclose(b.weights @ b.grid, w @ x, rtol=1e-10)

    def test_degenerate_range(self):
        b = bin_sample([2.0, 2.0], [1.0, 1.0], m=10)
        assert b.m == 1 and b.weights[0] == 2.0

    def test_binned_sums_close(self, rng):
        x, e = rng.normal(0, 4, 2000), rng.normal(0, 4, 300)
        w = np.ones(2000)
        bk, bd = brute(x, w, e)
        ks, ds = kernel_sums(SPEC, x, w, e, bins=1000)
        assert np.max(np.abs(ks - bk) / bk) < 1e-3
        assert np.max(np.abs(ds - bd)) / np.max(bk) < 1e-3


class TestKDEPerClass:
    def test_single_point(self):
        np.testing.assert_allclose(kde_per_class(SPEC, [1.0], [1], [1.0]), [[0.25]])

    def test_identical_classes(self, rng):
        z = rng.normal(size=10)
        f = kde_per_class(SPEC, np.r_[z, z], np.repeat([1, 2], 10), rng.normal(size=7))
        np.testing.assert_allclose(f[:, 0], f[:, 1], rtol=1e-13)

    def test_direct_formula(self, rng):
        z, y, e = rng.normal(size=40), rng.integers(1, 4, 40), rng.normal(size=15)
        f = kde_per_class(SPEC, z, y, e, n_classes=3)
        for k in range(1, 4):
            zk = z[y == k]
            direct = np.mean(kernel_eval(SPEC, e[:, None] - zk[None, :]), axis=1)
            np.testing.assert_allclose(f[:, k - 1], direct, rtol=1e-10)
