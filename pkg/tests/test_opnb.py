import numpy as np
import pytest
from scipy.special import logsumexp

from nbproj import opnb
from nbproj.data import class_priors, make_dataset
from nbproj.exceptions import DimensionMismatch
from nbproj.fastkernel import KernelSpec, kernel_eval
from nbproj.synthetic import elongated

SPEC = KernelSpec()


def direct_loglik(Z, y, priors):
    """Double-loop evaluation of the multinomial log-likelihood."""
    n, d = Z.shape
    K = priors.size
    log_joint = np.zeros((n, K))
    for k in range(K):
        Zk = Z[y == k + 1]
        log_joint[:, k] = np.log(priors[k])
        for t in range(d):
            f = kernel_eval(SPEC, Z[:, t][:, None] - Zk[:, t][None, :]).mean(axis=1)
            log_joint[:, k] += np.log(f)
    return float(np.sum(log_joint[np.arange(n), y - 1] - logsumexp(log_joint, axis=1)))


def fd_gradient(f, V, step=1e-5):
    G = np.zeros_like(V)
    for idx in np.ndindex(*V.shape):
        E = np.zeros_like(V)
        E[idx] = step
        G[idx] = (f(V + E) - f(V - E)) / (2 * step)
    return G


class TestProject:
    def test_identity_and_scaling(self, rng):
        X = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(opnb.project(X, np.eye(3)), X)
        np.testing.assert_allclose(opnb.project(X, 2 * np.eye(3)), 2 * X, rtol=1e-15)

    def test_loop_oracle(self, rng):
        X, V = rng.normal(size=(15, 4)), rng.normal(size=(4, 2))
        Z = opnb.project(X, V)
        for i in range(15):
            for t in range(2):
                assert abs(Z[i, t] - sum(X[i, j] * V[j, t] for j in range(4))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            opnb.project(np.zeros((3, 2)), np.zeros((3, 1)))


class TestLogLikelihood:
    def test_single_class_zero(self, rng):
        Z = rng.normal(size=(12, 2))
        assert opnb.log_likelihood(Z, np.ones(12, int), np.array([1.0])) == 0.0

    def test_collapse_separated_singletons(self):
        Z = np.array([[0.0], [1000.0]])
        ll = opnb.log_likelihood(Z, np.array([1, 2]), np.array([0.5, 0.5]))
        assert abs(ll) < 1e-12

    def test_direct_oracle(self, rng):
        Z = rng.normal(size=(20, 2))
        y = np.r_[1, 2, rng.integers(1, 3, 18)]
        priors = np.bincount(y)[1:] / 20
        assert opnb.log_likelihood(Z, y, priors) == pytest.approx(direct_loglik(Z, y, priors),
                                                                  rel=1e-9)


class TestPenalty:
    def test_zero_projection(self, small_dataset):
        ds = small_dataset
        pri = class_priors(ds)
        V0 = np.zeros((ds.p, 2))
        val = opnb.penalized_objective(V0, ds.X, ds.y, pri, 1e-3, np.eye(ds.p))
        expected = opnb.log_likelihood(np.zeros((ds.n, 2)), ds.y, pri) / ds.n
        assert val == pytest.approx(expected, abs=1e-14)

    def test_frobenius_contribution(self, small_dataset):
        ds = small_dataset
        pri = class_priors(ds)
        V = np.zeros((ds.p, 1))
        V[0, 0] = 2.0
        with_pen = opnb.penalized_objective(V, ds.X, ds.y, pri, 1e-3, np.eye(ds.p))
        without = opnb.penalized_objective(V, ds.X, ds.y, pri, 1e-3, np.zeros((ds.p, ds.p)))
        assert with_pen - without == pytest.approx(-0.004, abs=1e-15)

    def test_total_covariance_on_whitened(self, rng):
        A = rng.normal(size=(200, 3))
        A -= A.mean(axis=0)
        L = np.linalg.cholesky(np.cov(A, rowvar=False))
        W = A @ np.linalg.inv(L).T
        C = opnb.penalty_matrix(W, np.ones(200, int), "total_covariance")
        np.testing.assert_allclose(C, np.eye(3), atol=1e-12)

    def test_within_covariance_oracle(self, small_dataset):
        ds = small_dataset
        C = opnb.penalty_matrix(ds.X, ds.y, "within_class_covariance")
        expected = sum(np.sum(ds.y == k) / ds.n * np.cov(ds.X[ds.y == k], rowvar=False, ddof=0)
                       for k in range(1, ds.n_classes + 1))
        np.testing.assert_allclose(C, expected, atol=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            opnb.penalty_matrix(np.zeros((3, 2)), [1, 1, 2], "nope")


class TestGradients:
    def test_single_point(self):
        g = opnb.gradient_z(np.array([[0.3, -1.0]]), np.array([1]), np.array([1.0]))
        np.testing.assert_array_equal(g, 0.0)

    def test_gradient_z_fd(self, rng):
        X = rng.normal(size=(60, 5))
        y = np.r_[1, 2, 3, rng.integers(1, 4, 57)]
        pri = np.bincount(y)[1:] / 60
        Z = X @ rng.normal(size=(5, 2))
        G = opnb.gradient_z(Z, y, pri)
        fd = fd_gradient(lambda Zp: opnb.log_likelihood(Zp, y, pri), Z)
        assert np.max(np.abs(G - fd)) / np.max(np.abs(fd)) < 1e-5

    def test_permutation_equivariance(self, rng):
        Z = rng.normal(size=(30, 2))
        y = np.r_[1, 2, rng.integers(1, 3, 28)]
        pri = np.bincount(y)[1:] / 30
        perm = rng.permutation(30)
        np.testing.assert_allclose(opnb.gradient_z(Z, y, pri)[perm],
                                   opnb.gradient_z(Z[perm], y[perm], pri), atol=1e-13)

    def test_gradient_v_penalty_only(self, rng):
        V, C = rng.normal(size=(4, 2)), np.diag([1.0, 2.0, 3.0, 4.0])
        g = opnb.gradient_v(rng.normal(size=(7, 4)), np.zeros((7, 2)), V, 0.1, C)
        np.testing.assert_allclose(g, -0.2 * C @ V)

    def test_gradient_v_identity(self, rng):
        gz = rng.normal(size=(4, 2))
        g = opnb.gradient_v(np.eye(4), gz, np.zeros((4, 2)), 0.0, np.eye(4))
        np.testing.assert_allclose(g, gz / 4)

    @pytest.mark.parametrize("mode", opnb.PENALTY_MODES)
    def test_full_gradient_fd(self, small_dataset, rng, mode):
        ds = small_dataset
        pri = class_priors(ds)
        C = opnb.penalty_matrix(ds.X, ds.y, mode)
        V = rng.normal(size=(ds.p, 2))
        _, G = opnb.objective_and_gradient(V, ds.X, ds.y, pri, 0.01, C)
        fd = fd_gradient(lambda W: opnb.penalized_objective(W, ds.X, ds.y, pri, 0.01, C), V)
        assert np.max(np.abs(G - fd)) / np.max(np.abs(fd)) < 1e-5


class TestInit:
    def test_pca_axis_aligned(self, rng):
        X = rng.normal(size=(5000, 2)) * [2.0, 1.0]
        np.testing.assert_allclose(opnb.pca_init(X, 1)[:, 0], [1.0, 0.0], atol=0.02)

    def test_pca_oracle(self, rng):
        X = rng.normal(size=(100, 5)) @ rng.normal(size=(5, 5))
        V = opnb.pca_init(X, 3)
        np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-10)
        Xc = X - X.mean(axis=0)
        _, _, Wt = np.linalg.svd(Xc, full_matrices=False)
        for t in range(3):
            assert abs(abs(V[:, t] @ Wt[t]) - 1) < 1e-10

    def test_random_init(self):
        A, B = opnb.random_init(3, 6, 2), opnb.random_init(3, 6, 2)
        np.testing.assert_array_equal(A, B)
        np.testing.assert_allclose(A.T @ A, np.eye(2), atol=1e-10)
        assert not np.allclose(A, opnb.random_init(4, 6, 2))


class TestFit:
    def test_trace_and_prediction(self, small_dataset):
        model = opnb.fit(small_dataset, opnb.OPNBConfig(dim=2))
        trace = np.array(model.objective_trace)
        assert np.all(np.diff(trace) >= -1e-12)
        post = model.posterior(small_dataset.X)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
        assert np.mean(model.predict(small_dataset.X) != small_dataset.y) < 0.3

    def test_heavy_penalty_shrinks(self, small_dataset):
        model = opnb.fit(small_dataset, opnb.OPNBConfig(dim=2, lam=1e6, standardize=False))
        V0 = opnb.pca_init(small_dataset.X, 2)
        assert np.linalg.norm(model.V) < np.linalg.norm(V0)

    def test_restarts_never_worse(self, small_dataset):
        one = opnb.fit(small_dataset, opnb.OPNBConfig(dim=2))
        three = opnb.fit(small_dataset, opnb.OPNBConfig(dim=2, n_restarts=3))
        assert three.objective >= one.objective - 1e-12

    def test_deterministic(self, small_dataset):
        cfg = opnb.OPNBConfig(dim=2, init="random", seed=5)
        a, b = opnb.fit(small_dataset, cfg), opnb.fit(small_dataset, cfg)
        np.testing.assert_array_equal(a.V, b.V)

    def test_explicit_init_shape(self, small_dataset):
        with pytest.raises(DimensionMismatch):
            opnb.fit(small_dataset, opnb.OPNBConfig(dim=2, init=np.eye(3)))

    def test_round_trip_dict(self, small_dataset):
        model = opnb.fit(small_dataset, opnb.OPNBConfig(dim=2))
        again = opnb.TrainedOPNBModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(again.posterior(small_dataset.X),
                                      model.posterior(small_dataset.X))

    def test_within_penalty_helps_on_elongated(self):
        X, y = elongated(300, p=10, seed=1)
        Xt, yt = elongated(2000, p=10, seed=2)
        ds = make_dataset(X, y)
        errs = {}
        for mode in ("frobenius", "within_class_covariance"):
            m = opnb.fit(ds, opnb.OPNBConfig(lam=1e-3, penalty_mode=mode))
            errs[mode] = np.mean(m.predict(Xt) != yt)
        assert errs["within_class_covariance"] < errs["frobenius"]


class TestPosterior:
    def test_single_class(self, rng):
        ds = make_dataset(rng.normal(size=(10, 2)), np.ones(10, int))
        model = opnb.unfitted_model(ds, np.eye(2))
        np.testing.assert_array_equal(model.posterior(rng.normal(size=(4, 2))), 1.0)

    def test_tie_goes_to_first_class(self):
        ds = make_dataset([[-1.0], [1.0]], [1, 2])
        model = opnb.unfitted_model(ds, np.eye(1))
        assert model.predict(np.array([[0.0]]))[0] == 1

    def test_clear_winner(self):
        ds = make_dataset([[-1.0], [1.0]], [1, 2])
        model = opnb.unfitted_model(ds, np.eye(1))
        np.testing.assert_array_equal(model.predict(np.array([[-3.0], [3.0]])), [1, 2])

    def test_scale_invariant_argmax(self, small_dataset, rng):
        model = opnb.unfitted_model(small_dataset, rng.normal(size=(small_dataset.p, 2)))
        X_new = rng.normal(size=(20, small_dataset.p))
        lp = model.log_posterior(X_new)
        np.testing.assert_array_equal(np.argmax(lp + 7.5, axis=1) + 1, model.predict(X_new))


class TestICADecomposition:
    def test_identity(self, rng):
        Z = rng.normal(size=(40, 3))
        y = np.r_[1, 2, 3, rng.integers(1, 4, 37)]
        pri = np.bincount(y)[1:] / 40
        lhs, rhs = opnb.ica_decomposition_check(Z, y, pri)
        assert abs(lhs - rhs) <= 1e-9 * abs(lhs)

    def test_single_class_single_dim(self, rng):
        Z = rng.normal(size=(25, 1))
        lhs, rhs = opnb.ica_decomposition_check(Z, np.ones(25, int), np.array([1.0]))
        direct = np.sum(np.log(kernel_eval(SPEC, Z - Z.T).mean(axis=1)))
        np.testing.assert_allclose([lhs, rhs], direct, rtol=1e-12)
