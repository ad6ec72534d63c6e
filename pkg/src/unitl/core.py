"""Transfer regression on a transformed output.

A frozen source model ``f_s`` and a target sample ``(X, y)`` are combined
through two numbers: ``tau`` shapes the training target

    z = (y - tau * f_s(x)) / (1 - tau)

on which any least-squares learner is fitted, and ``rho`` blends the fitted
model back with the source at prediction time,

    y_hat(x) = (1 - rho) * f_w(x) + rho * f_s(x).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Protocol

import numpy as np

from .errors import DimensionMismatch, InvalidParams, RhoOutOfRange, TauOutOfRange


class SourcePredictor(Protocol):
    """A deterministic, callable source model."""

    def predict(self, x) -> float: ...

    def predict_batch(self, features) -> np.ndarray: ...


class Learner(Protocol):
    def fit(self, features, responses) -> Any: ...


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.targets, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch(f"features must be a non-empty n x p matrix, got {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidParams("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def subset(self, rows):
        return Dataset(self.features[rows], self.targets[rows])


@dataclass(frozen=True)
class TransferHyperparams:
    tau: float
    rho: float

    def __post_init__(self):
        _check_tau(self.tau)
        _check_rho(self.rho)


def _check_tau(tau):
    if not np.isfinite(tau) or not tau < 1:
        raise TauOutOfRange(f"tau must be finite and < 1, got {tau}")


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise RhoOutOfRange(f"rho must lie in [0, 1], got {rho}")


class FunctionSource:
    """Wrap a vectorized callable ``features -> predictions`` as a source model."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_features=None):
        self.fn = fn
        self.n_features = n_features

    def predict_batch(self, features):
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("predict_batch takes a 2-d feature matrix")
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise DimensionMismatch(f"source expects {self.n_features} features, got {X.shape[1]}")
        return np.asarray(self.fn(X), dtype=np.float64).reshape(-1)

    def predict(self, x):
        return float(self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])


class LinearSource(FunctionSource):
    """``f(x) = x^T theta``."""

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=np.float64)
        super().__init__(lambda X: X @ self.theta, n_features=self.theta.shape[0])


def transform_targets(dataset, source_predictions, tau):
    """Return ``z = (y - tau * f_s) / (1 - tau)``."""
    _check_tau(tau)
    fs = np.asarray(source_predictions, dtype=np.float64).reshape(-1)
    y = dataset.targets if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=np.float64)
    if fs.shape != y.shape:
        raise DimensionMismatch(f"{y.shape[0]} targets but {fs.shape[0]} source predictions")
    if tau == 0:
        return y.copy()
    return (y - tau * fs) / (1.0 - tau)


def blend(target_pred, source_pred, rho):
    """``(1 - rho) * target_pred + rho * source_pred``."""
    return (1.0 - rho) * target_pred + rho * source_pred


@dataclass(frozen=True, eq=False)
class TransferPredictor:
    rho: float
    source: Any
    target_model: Any
    tau: float = 0.0

    def __post_init__(self):
        _check_rho(self.rho)

    def predict_batch(self, features):
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("predict_batch takes a 2-d feature matrix")
        fs = self.source.predict_batch(X)
        if self.rho == 1.0:
            return fs.copy()
        return blend(self.target_model.predict_batch(X), fs, self.rho)

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionMismatch("predict takes a single feature vector")
        return float(self.predict_batch(x[None, :])[0])


def fit_transfer(dataset, source, hp, learner, source_predictions=None):
    """Fit the target model on transformed outputs and wrap it with the source.

    ``source_predictions`` may be passed when ``source.predict_batch`` on the
    training features has already been computed.
    """
    if source_predictions is None:
        source_predictions = source.predict_batch(dataset.features)
    z = transform_targets(dataset, source_predictions, hp.tau)
    model = learner.fit(dataset.features, z)
    return TransferPredictor(rho=hp.rho, source=source, target_model=model, tau=hp.tau)


def blend_predict(predictor, x):
    return predictor.predict(x)


# ---------------------------------------------------------------------------
# Training objectives, exposed for verification
# ---------------------------------------------------------------------------

def transfer_objective_terms(targets, source_pred, model_pred, tau):
    """``(sum (y - f)^2, -tau * sum (f_s - f)^2)``."""
    y, fs, f = (np.asarray(a, dtype=np.float64) for a in (targets, source_pred, model_pred))
    return float(np.sum((y - f) ** 2)), float(-tau * np.sum((fs - f) ** 2))


def transfer_objective(targets, source_pred, model_pred, tau):
    """Penalized residual sum ``sum (y - f)^2 - tau * (f_s - f)^2``."""
    fit, reg = transfer_objective_terms(targets, source_pred, model_pred, tau)
    return fit + reg


def gaussian_log_normalizer(f, f_s, sigma, eta):
    """``log int exp(-(u - f)^2 / sigma - (u - f_s)^2 / eta) du``, elementwise.

    Product of two Gaussian kernels: the exponent has curvature
    ``1/sigma + 1/eta`` and leaves ``-(f - f_s)^2 / (sigma + eta)`` behind.
    """
    f, f_s = np.asarray(f, dtype=np.float64), np.asarray(f_s, dtype=np.float64)
    prec = 1.0 / sigma + 1.0 / eta
    return 0.5 * np.log(np.pi / prec) - (f - f_s) ** 2 / (sigma + eta)


def density_ratio_terms(targets, source_pred, model_pred, rho, sigma=1.0):
    """Empirical KL risk of the reweighted target model, split into two sums.

    The density ratio is ``w(y, x) ~ exp(-(y - f(x))^2 / sigma)`` and the source
    density ``p_s(y | x) ~ exp(-(y - f_s(x))^2 / eta)`` with
    ``eta = sigma (1 - rho) / rho``. Returns ``sigma`` times
    ``(sum -log w(y_i, x_i), sum log int w p_s du)`` with the f-free constants
    removed, i.e. the data-fit and discrepancy terms of the risk.
    """
    if not 0.0 <= rho < 1.0:
        raise RhoOutOfRange(f"rho must lie in [0, 1), got {rho}")
    if not sigma > 0:
        raise InvalidParams("sigma must be positive")
    y, fs, f = (np.asarray(a, dtype=np.float64) for a in (targets, source_pred, model_pred))
    fit = float(np.sum((y - f) ** 2 / sigma)) * sigma
    if rho == 0.0:
        # flat source density: the normalizer no longer depends on f
        return fit, 0.0
    eta = sigma * (1.0 - rho) / rho
    log_z = gaussian_log_normalizer(f, fs, sigma, eta) - gaussian_log_normalizer(fs, fs, sigma, eta)
    return fit, float(np.sum(log_z)) * sigma


def density_ratio_objective(targets, source_pred, model_pred, rho, sigma=1.0):
    fit, disc = density_ratio_terms(targets, source_pred, model_pred, rho, sigma)
    return fit + disc


def transformed_rss(targets, source_pred, model_pred, tau):
    """``(1 - tau) * sum (z - f)^2`` minus the model-free constant.

    Completing the square gives
    ``transfer_objective == (1 - tau) * sum (z - f)^2 - tau / (1 - tau) * sum (y - f_s)^2``,
    so this returns the right-hand side for cross-checking.
    """
    _check_tau(tau)
    y, fs, f = (np.asarray(a, dtype=np.float64) for a in (targets, source_pred, model_pred))
    z = (y - tau * fs) / (1.0 - tau)
    return float((1.0 - tau) * np.sum((z - f) ** 2) - tau / (1.0 - tau) * np.sum((y - fs) ** 2))
