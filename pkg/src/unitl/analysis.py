"""Bias-variance decomposition of the blended predictor for linear smoothers.

For a linear smoother with weights ``h(x)`` fitted on transformed outputs,
the pointwise error of ``y_hat = (1 - rho) f_w + rho f_s`` splits as

    MSE = [a D + b B1 + c B2]^2 + b^2 V + sigma_eps^2

    a = (rho - tau) / (1 - tau)
    b = (1 - rho) / (1 - tau)
    c = -tau (1 - rho) / (1 - tau)

with ``D = f_t - f_s``, ``B1 = f_t - h^T f_t``, ``B2 = f_s - h^T f_s`` and
``V = sigma_eps^2 |h|^2``. Averaging over x leaves a quadratic in rho whose
minimizer, and the companion relation for tau, are available in closed form
from seven moments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

import numpy as np

from ._rng import substream
from .errors import (DegenerateDenominator, DimensionMismatch, EmptyInput,
                     InsufficientData, InvalidParams, TauOutOfRange)

_TINY = 1e-300


@dataclass(frozen=True)
class PointComponents:
    d: float
    b1: float
    b2: float
    v: float


@dataclass(frozen=True, eq=False)
class Components:
    """Vectorized ``PointComponents`` over a set of evaluation points."""

    d: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    v: np.ndarray

    def __len__(self):
        return self.d.shape[0]

    def __getitem__(self, i):
        return PointComponents(float(self.d[i]), float(self.b1[i]), float(self.b2[i]), float(self.v[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class MomentSet:
    e_d2: float
    e_b1_2: float
    e_b2_2: float
    e_db1: float
    e_db2: float
    e_b1b2: float
    e_v: float
    sigma_eps2: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise InvalidParams(f"moment {f.name} is not finite")
        for name in ("e_d2", "e_b1_2", "e_b2_2", "e_v", "sigma_eps2"):
            if getattr(self, name) < 0:
                raise InvalidParams(f"moment {name} must be non-negative")

    def cauchy_schwarz_ok(self, slack=1e-9):
        pairs = ((self.e_db1, self.e_d2, self.e_b1_2),
                 (self.e_db2, self.e_d2, self.e_b2_2),
                 (self.e_b1b2, self.e_b1_2, self.e_b2_2))
        return all(c * c <= a * b * (1 + slack) + slack for c, a, b in pairs)

    def scale_discrepancy(self, s):
        """Moments after replacing D by ``s * D``."""
        return MomentSet(self.e_d2 * s * s, self.e_b1_2, self.e_b2_2, self.e_db1 * s,
                         self.e_db2 * s, self.e_b1b2, self.e_v, self.sigma_eps2)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coefficients(tau, rho):
    if not np.all(np.asarray(tau) < 1):
        raise TauOutOfRange(f"tau must be < 1, got {tau}")
    denom = 1.0 - tau
    return (rho - tau) / denom, (1.0 - rho) / denom, -tau * (1.0 - rho) / denom


def mse_at(point, sigma_eps2, tau, rho):
    """Pointwise mean squared error of the blended predictor.

    ``point`` may be a ``PointComponents`` or a ``Components``; in the second
    case an array with one value per point is returned.
    """
    a, b, c = _coefficients(tau, rho)
    bias = a * point.d + b * point.b1 + c * point.b2
    return bias * bias + b * b * point.v + sigma_eps2


def expected_mse(m, tau, rho):
    """Average of ``mse_at`` over x, written in terms of the moments."""
    a, b, c = _coefficients(tau, rho)
    bias2 = (a * a * m.e_d2 + b * b * m.e_b1_2 + c * c * m.e_b2_2
             + 2 * a * b * m.e_db1 + 2 * a * c * m.e_db2 + 2 * b * c * m.e_b1b2)
    return bias2 + b * b * m.e_v + m.sigma_eps2


def estimate_components(eval_points, f_t, f_s, smoother, train_features=None, sigma_eps2=1.0):
    """Evaluate D, B1, B2 and V at each evaluation point.

    ``f_t`` and ``f_s`` are source-predictor-like objects (``predict_batch``);
    ``smoother`` is a fitted ``RidgeModel`` whose training rows define the
    vectors of true values the smoother is applied to.
    """
    E = np.asarray(eval_points, dtype=np.float64)
    if E.ndim != 2:
        raise DimensionMismatch("eval_points must be a 2-d matrix")
    X = smoother.training_features if train_features is None else np.asarray(train_features, dtype=np.float64)
    if smoother.training_features is None or X.shape != smoother.training_features.shape:
        raise DimensionMismatch("train_features do not match the smoother's training rows")
    H = smoother.smoother_matrix(E)
    ft_eval, fs_eval = f_t.predict_batch(E), f_s.predict_batch(E)
    ft_train, fs_train = f_t.predict_batch(X), f_s.predict_batch(X)
    return Components(d=ft_eval - fs_eval,
                      b1=ft_eval - H @ ft_train,
                      b2=fs_eval - H @ fs_train,
                      v=sigma_eps2 * np.sum(H * H, axis=1))


def estimate_moments(components, sigma_eps2):
    """Sample means of the pairwise products of the components."""
    if not isinstance(components, Components):
        components = list(components)
        if not components:
            raise EmptyInput("no components to average")
        components = Components(*(np.array([getattr(c, k) for c in components], dtype=np.float64)
                                  for k in ("d", "b1", "b2", "v")))
    if len(components) == 0:
        raise EmptyInput("no components to average")
    d, b1, b2, v = components.d, components.b1, components.b2, components.v
    return MomentSet(e_d2=float(np.mean(d * d)), e_b1_2=float(np.mean(b1 * b1)),
                     e_b2_2=float(np.mean(b2 * b2)), e_db1=float(np.mean(d * b1)),
                     e_db2=float(np.mean(d * b2)), e_b1b2=float(np.mean(b1 * b2)),
                     e_v=float(np.mean(v)), sigma_eps2=float(sigma_eps2))


def bootstrap_variance(train, learner, eval_points, n_boot=100, seed=0):
    """Per-point variance of predictions across bootstrap refits.

    Replicate ``b`` resamples rows with its own stream ``(seed, b)``, so the
    result does not depend on evaluation order. Uses the unbiased (n - 1)
    normalization.
    """
    if n_boot < 2:
        raise InsufficientData(f"need at least two bootstrap sets, got {n_boot}")
    E = np.asarray(eval_points, dtype=np.float64)
    n = train.n
    preds = np.empty((n_boot, E.shape[0]))
    for b in range(n_boot):
        rows = substream(seed, b).integers(0, n, size=n)
        model = learner.fit(train.features[rows], train.targets[rows])
        preds[b] = model.predict_batch(E)
    spread = preds - preds[0]
    return np.var(spread, axis=0, ddof=1)


# ---------------------------------------------------------------------------
# Closed-form optima
# ---------------------------------------------------------------------------
# Write the bias numerator as  rho * G + K'  with
#     G  = D - B1 + tau B2,     K' = -(tau D - B1 + tau B2) = -K.
# Setting the rho-derivative of E[(rho G - K)^2] + (1 - rho)^2 E[V] to zero
# gives rho* = (E[K G] + E[V]) / (E[G^2] + E[V]), where
#     E[K G] = tau e_d2 - (1 + tau) e_db1 + tau (1 + tau) e_db2
#              + e_b1_2 - 2 tau e_b1b2 + tau^2 e_b2_2
#     E[G^2] = e_d2 + e_b1_2 + tau^2 e_b2_2 - 2 e_db1 + 2 tau e_db2 - 2 tau e_b1b2

def _rho_star_parts(tau, m):
    num = (tau * m.e_d2 - (1 + tau) * m.e_db1 + tau * (1 + tau) * m.e_db2
           + m.e_b1_2 - 2 * tau * m.e_b1b2 + tau * tau * m.e_b2_2 + m.e_v)
    den = (m.e_d2 + m.e_b1_2 + tau * tau * m.e_b2_2 - 2 * m.e_db1
           + 2 * tau * m.e_db2 - 2 * tau * m.e_b1b2 + m.e_v)
    return num, den


def rho_star_unclipped(tau, m):
    if not tau < 1:
        raise TauOutOfRange(f"tau must be < 1, got {tau}")
    num, den = _rho_star_parts(tau, m)
    if den <= _TINY:
        raise DegenerateDenominator(f"expected MSE does not depend on rho at tau={tau}")
    return num / den


def rho_star(tau, m):
    """Optimal blend weight for a given tau, clipped to [0, 1]."""
    r = rho_star_unclipped(tau, m)
    if r <= 0:
        return 0.0
    if r >= 1:
        return 1.0
    return r


def tau_of_rho(rho, m):
    """tau at which both partial derivatives can vanish for the given rho.

    Eliminating E[V] between the two stationarity conditions leaves
    ``E[(a D + b B1 + c B2) B2] = 0``, which is linear in tau.
    """
    if not rho < 1:
        raise InvalidParams(f"rho must be < 1, got {rho}")
    den = (1 - rho) * m.e_b2_2 + m.e_db2
    if abs(den) <= _TINY:
        raise DegenerateDenominator(f"tau(rho) undefined at rho={rho}")
    return ((1 - rho) * m.e_b1b2 + rho * m.e_db2) / den


def d_mse_d_rho(tau, rho, m):
    """Partial derivative of ``expected_mse`` with respect to rho."""
    a, b, c = _coefficients(tau, rho)
    # d(bias)/d(rho) = G / (1 - tau) with G = D - B1 + tau B2
    s = 1.0 / (1.0 - tau)
    e_bias_g = (a * (m.e_d2 - m.e_db1 + tau * m.e_db2)
                + b * (m.e_db1 - m.e_b1_2 + tau * m.e_b1b2)
                + c * (m.e_db2 - m.e_b1b2 + tau * m.e_b2_2))
    return 2 * s * e_bias_g - 2 * b * s * m.e_v


def d_mse_d_tau(tau, rho, m):
    """Partial derivative of ``expected_mse`` with respect to tau."""
    a, b, c = _coefficients(tau, rho)
    # d(bias)/d(tau) = -(1 - rho) (D - B1 + B2) / (1 - tau)^2
    s = (1.0 - rho) / (1.0 - tau) ** 2
    e_bias_w = (a * (m.e_d2 - m.e_db1 + m.e_db2)
                + b * (m.e_db1 - m.e_b1_2 + m.e_b1b2)
                + c * (m.e_db2 - m.e_b1b2 + m.e_b2_2))
    return -2 * s * e_bias_w + 2 * b * b / (1.0 - tau) * m.e_v


def tau_relation_residual(tau, rho, m):
    """``E[(a D + b B1 + c B2) B2]``; zero on the curve ``tau = tau_of_rho(rho)``."""
    a, b, c = _coefficients(tau, rho)
    return a * m.e_db2 + b * m.e_b1b2 + c * m.e_b2_2


@dataclass(frozen=True)
class AsymptoticRow:
    scale: float
    tau: float
    rho_star: float
    gap: float


def asymptotic_report(m, scales=(1, 10, 100, 1e3, 1e4, 1e5, 1e6), tau_probe=(0.2, 0.5, 0.8)):
    """Tabulate ``|rho*(tau) - tau|`` as the discrepancy D is scaled up."""
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        raise InvalidParams("scales must be positive and increasing")
    rows = []
    for s in scales:
        ms = m if s == 1.0 else m.scale_discrepancy(s)
        for t in tau_probe:
            r = rho_star(t, ms)
            rows.append(AsymptoticRow(s, float(t), r, abs(r - t)))
    return rows


def report_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scale", "tau", "rho_star", "gap"])
    for r in rows:
        w.writerow([repr(r.scale), repr(r.tau), repr(r.rho_star), repr(r.gap)])
    return buf.getvalue()
