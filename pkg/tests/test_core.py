import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unitl.core import (Dataset, FunctionSource, LinearSource, TransferHyperparams, TransferPredictor,
                        blend_predict, density_ratio_objective, density_ratio_terms, fit_transfer,
                        gaussian_log_normalizer, transfer_objective, transfer_objective_terms,
                        transform_targets, transformed_rss)
from unitl.errors import DimensionMismatch, InvalidParams, RhoOutOfRange, TauOutOfRange
from unitl.learners import ForestLearner, RidgeLearner, fit_ridge

finite = st.floats(-1e6, 1e6, allow_nan=False)
taus = st.floats(-50, 0.99, allow_nan=False)


class Const:
    def __init__(self, value):
        self.value = value

    def predict_batch(self, X):
        return np.full(np.asarray(X).shape[0], self.value, dtype=np.float64)

    def predict(self, x):
        return self.value


def test_transform_examples():
    d = Dataset([[0.0], [1.0]], [3.0, -1.0])
    np.testing.assert_array_equal(transform_targets(d, [7.0, 2.0], 0.0), [3.0, -1.0])
    d1 = Dataset([[0.0]], [1.0])
    assert transform_targets(d1, [3.0], 0.5)[0] == -1.0
    d2 = Dataset([[0.0]], [2.0])
    for tau in (-3.0, -0.4, 0.2, 0.75):
        assert transform_targets(d2, [2.0], tau)[0] == pytest.approx(2.0, rel=1e-12)


def test_transform_errors():
    d = Dataset([[0.0], [1.0]], [3.0, -1.0])
    with pytest.raises(TauOutOfRange):
        transform_targets(d, [1.0, 1.0], 1.0)
    with pytest.raises(TauOutOfRange):
        transform_targets(d, [1.0, 1.0], 1.5)
    with pytest.raises(DimensionMismatch):
        transform_targets(d, [1.0], 0.5)


@given(arrays(np.float64, st.integers(1, 20), elements=finite), st.data())
def test_transform_identity_at_zero(y, data):
    fs = data.draw(arrays(np.float64, y.shape, elements=finite))
    d = Dataset(np.zeros((y.shape[0], 1)), y)
    np.testing.assert_array_equal(transform_targets(d, fs, 0.0), y)


@given(arrays(np.float64, st.integers(1, 20), elements=finite), taus)
def test_transform_fixed_point(y, tau):
    d = Dataset(np.zeros((y.shape[0], 1)), y)
    z = transform_targets(d, y, tau)
    np.testing.assert_allclose(z, y, rtol=1e-12, atol=1e-300)


def test_hyperparam_bounds():
    TransferHyperparams(-5.0, 0.0)
    TransferHyperparams(0.3, 1.0)
    with pytest.raises(TauOutOfRange):
        TransferHyperparams(1.0, 0.5)
    with pytest.raises(RhoOutOfRange):
        TransferHyperparams(0.0, 1.2)
    with pytest.raises(RhoOutOfRange):
        TransferHyperparams(0.0, -0.1)


def test_dataset_validation():
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(InvalidParams):
        Dataset([[np.inf]], [1.0])


def test_blend_examples():
    X = np.zeros((1, 2))
    assert blend_predict(TransferPredictor(0.0, Const(100.0), Const(5.0)), X[0]) == 5.0
    assert blend_predict(TransferPredictor(1.0, Const(100.0), Const(5.0)), X[0]) == 100.0
    assert blend_predict(TransferPredictor(0.5, Const(4.0), Const(2.0)), X[0]) == 3.0
    with pytest.raises(DimensionMismatch):
        blend_predict(TransferPredictor(0.5, Const(4.0), Const(2.0)), X)


@given(finite, finite)
def test_blend_affine_in_rho(a, b):
    x = np.zeros(1)
    p = [blend_predict(TransferPredictor(r, Const(b), Const(a)), x) for r in (0.0, 0.5, 1.0)]
    assert p[1] == (p[0] + p[2]) / 2


def _instance(rng, n=None, p=None):
    n = n or int(rng.integers(5, 100))
    p = p or int(rng.integers(1, 50))
    X = rng.standard_normal((n, p))
    theta_s = rng.standard_normal(p)
    y = X @ (theta_s + 0.5 * rng.standard_normal(p)) + rng.standard_normal(n)
    return Dataset(X, y), LinearSource(theta_s)


def test_no_transfer_matches_plain_ridge():
    rng = np.random.default_rng(0)
    for _ in range(20):
        data, source = _instance(rng)
        E = rng.standard_normal((30, data.p))
        tp = fit_transfer(data, source, TransferHyperparams(0.0, 0.0), RidgeLearner(lam=1e-3))
        plain = fit_ridge(data.features, data.targets, lam=1e-3)
        np.testing.assert_array_equal(tp.predict_batch(E), plain.predict_batch(E))


def test_direct_source_returns_source_exactly():
    rng = np.random.default_rng(1)
    data, source = _instance(rng, 30, 6)
    E = rng.standard_normal((40, 6))
    for learner in (RidgeLearner(), ForestLearner(n_tree=5)):
        tp = fit_transfer(data, source, TransferHyperparams(0.0, 1.0), learner)
        assert tp.target_model is not None
        np.testing.assert_array_equal(tp.predict_batch(E), source.predict_batch(E))


def test_noiseless_source_recovered_as_lambda_vanishes():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((10, 5))
    source = LinearSource(rng.standard_normal(5))
    data = Dataset(X, source.predict_batch(X))
    tp = fit_transfer(data, source, TransferHyperparams(0.5, 0.5), RidgeLearner(lam=1e-10))
    assert np.max(np.abs(tp.predict_batch(X) - data.targets)) < 1e-6


@pytest.mark.parametrize("tau,rho", [(-1.0, 0.0), (0.4, 0.4), (0.2, 0.7), (-0.3, 0.1)])
def test_fitted_values_are_hat_matrix_times_z(tau, rho):
    rng = np.random.default_rng(3)
    data, source = _instance(rng, 25, 7)
    tp = fit_transfer(data, source, TransferHyperparams(tau, rho), RidgeLearner(lam=0.05))
    z = transform_targets(data, source.predict_batch(data.features), tau)
    H = tp.target_model.smoother_matrix(data.features)
    np.testing.assert_allclose(tp.target_model.predict_batch(data.features), H @ z, rtol=1e-10, atol=1e-10)


def test_fit_minimizes_penalized_objective_for_linear_models():
    # with an unpenalized linear learner the fit is the exact objective minimizer
    rng = np.random.default_rng(4)
    data, source = _instance(rng, 40, 4)
    fs = source.predict_batch(data.features)
    tau = -0.7
    model = fit_transfer(data, source, TransferHyperparams(tau, 0.0), RidgeLearner(lam=1e-12)).target_model
    best = transfer_objective(data.targets, fs, model.predict_batch(data.features), tau)
    for _ in range(20):
        theta = model.coefficients + 1e-3 * rng.standard_normal(4)
        assert transfer_objective(data.targets, fs, data.features @ theta, tau) >= best - 1e-9


def test_objectives_agree_on_density_ratio_line():
    rng = np.random.default_rng(5)
    data, source = _instance(rng, 30, 5)
    fs = source.predict_batch(data.features)
    for _ in range(20):
        theta = rng.standard_normal(5) * 3
        rho = float(rng.uniform(0, 0.999))
        sigma = float(10 ** rng.uniform(-2, 2))
        f = data.features @ theta
        t_fit, t_reg = transfer_objective_terms(data.targets, fs, f, rho)
        d_fit, d_reg = density_ratio_terms(data.targets, fs, f, rho, sigma=sigma)
        assert d_fit == pytest.approx(t_fit, rel=1e-10)
        assert d_reg == pytest.approx(t_reg, rel=1e-10, abs=1e-10 * t_fit)
        a = transfer_objective(data.targets, fs, f, rho)
        assert density_ratio_objective(data.targets, fs, f, rho, sigma) == pytest.approx(a, rel=1e-10)
        assert transformed_rss(data.targets, fs, f, rho) == pytest.approx(a, rel=1e-10)


def test_log_normalizer_matches_quadrature():
    from scipy.integrate import quad
    rng = np.random.default_rng(6)
    for _ in range(20):
        f, f_s = rng.uniform(-3, 3, 2)
        sigma, eta = 10 ** rng.uniform(-1, 1, 2)
        val, _ = quad(lambda u: np.exp(-(u - f) ** 2 / sigma - (u - f_s) ** 2 / eta), -np.inf, np.inf,
                      epsabs=0, epsrel=1e-12)
        assert gaussian_log_normalizer(f, f_s, sigma, eta) == pytest.approx(np.log(val), rel=1e-9, abs=1e-9)


def test_density_ratio_rho_bounds():
    with pytest.raises(RhoOutOfRange):
        density_ratio_terms([1.0], [0.0], [0.5], 1.0)
    assert density_ratio_terms([1.0], [0.0], [0.5], 0.0) == (0.25, 0.0)


def test_function_source_contract():
    s = FunctionSource(lambda X: X[:, 0] * 2, n_features=2)
    assert s.predict([1.5, 0.0]) == 3.0
    assert s.predict([1.5, 0.0]) == s.predict([1.5, 0.0])
    with pytest.raises(DimensionMismatch):
        s.predict_batch(np.zeros((2, 3)))
