"""Base regressors: a closed-form ridge smoother and a CART regression forest.

Both learners are fitted on a plain ``(features, responses)`` pair and know
nothing about transfer; the transformed responses are produced upstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from ._rng import substream
from .errors import DimensionMismatch, InvalidParams, NumericalFailure

DEFAULT_LAMBDA = 1e-4


def _as_matrix(features):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d feature matrix, got shape {X.shape}")
    return X


def _check_rows(X, n_features):
    if X.shape[1] != n_features:
        raise DimensionMismatch(
            f"model was fitted on {n_features} features, got {X.shape[1]}")


# ---------------------------------------------------------------------------
# Ridge
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Fitted ridge regression ``x -> y_mean + (x - x_mean)^T coefficients``.

    Without centering ``x_mean`` is ``None`` and ``y_mean`` is zero, so the
    model is the pure linear smoother ``x^T (X^T X + lam I)^-1 X^T z``.
    ``training_features`` and ``gram_factor`` are kept so smoother weights can
    be produced; a model restored from a file has neither.
    """

    coefficients: np.ndarray
    lam: float
    training_features: Optional[np.ndarray] = None
    gram_factor: Optional[tuple] = None
    x_mean: Optional[np.ndarray] = None
    y_mean: float = 0.0

    @property
    def n_features(self):
        return self.coefficients.shape[0]

    @property
    def centered(self):
        return self.x_mean is not None

    def predict_batch(self, features):
        X = _as_matrix(features)
        _check_rows(X, self.n_features)
        if self.centered:
            return self.y_mean + (X - self.x_mean) @ self.coefficients
        return X @ self.coefficients

    def predict(self, x):
        return float(self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def smoother_matrix(self, features):
        """Rows ``h(x)`` such that ``predict(x) == h(x) @ z`` for any response ``z``."""
        if self.training_features is None or self.gram_factor is None:
            raise InvalidParams("smoother weights need a model fitted in this process")
        E = _as_matrix(features)
        _check_rows(E, self.n_features)
        Xt = self.training_features
        if self.centered:
            Xc = Xt - self.x_mean
            solved = linalg.cho_solve(self.gram_factor, (E - self.x_mean).T)
            return (Xc @ solved).T + 1.0 / Xt.shape[0]
        solved = linalg.cho_solve(self.gram_factor, E.T)
        return (Xt @ solved).T

    def smoother_weights(self, x):
        return self.smoother_matrix(np.asarray(x, dtype=np.float64)[None, :])[0]

    def to_dict(self):
        out = {"kind": "ridge", "lambda": self.lam,
               "coefficients": self.coefficients.tolist(), "centering": None}
        if self.centered:
            out["centering"] = {"x_mean": self.x_mean.tolist(), "y_mean": self.y_mean}
        return out

    @classmethod
    def from_dict(cls, d):
        centering = d.get("centering")
        x_mean, y_mean = None, 0.0
        if centering is not None:
            x_mean = np.asarray(centering["x_mean"], dtype=np.float64)
            y_mean = float(centering["y_mean"])
        return cls(coefficients=np.asarray(d["coefficients"], dtype=np.float64),
                   lam=float(d["lambda"]), x_mean=x_mean, y_mean=y_mean)


def fit_ridge(features, responses, lam=DEFAULT_LAMBDA, center=False):
    """Solve ``(X^T X + lam I) coef = X^T z`` by Cholesky factorization.

    Parameters
    ----------
    features : array of shape (n, p)
    responses : array of shape (n,)
    lam : float
        Strictly positive l2 penalty.
    center : bool
        Center the responses and feature columns before solving, which is
        equivalent to fitting an unpenalized intercept.
    """
    X = _as_matrix(features)
    z = np.asarray(responses, dtype=np.float64).reshape(-1)
    if not lam > 0:
        raise InvalidParams(f"ridge penalty must be positive, got {lam}")
    if X.shape[0] != z.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} feature rows but {z.shape[0]} responses")
    if X.shape[0] < 1:
        raise InvalidParams("ridge needs at least one row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(z))):
        raise NumericalFailure("non-finite values in ridge inputs")

    # sums are accumulated in a canonical row order so the fit is exactly
    # invariant to permutations of the training rows
    canon = np.lexsort(np.column_stack([X, z]).T[::-1])
    x_mean, y_mean = None, 0.0
    Xs, zs = X[canon], z[canon]
    if center:
        x_mean = Xs.mean(axis=0)
        y_mean = float(zs.mean())
        Xs, zs = Xs - x_mean, zs - y_mean

    gram = Xs.T @ Xs
    gram[np.diag_indices_from(gram)] += lam
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"ridge factorization failed: {exc}") from exc
    coef = linalg.cho_solve(factor, Xs.T @ zs)
    return RidgeModel(coefficients=coef, lam=float(lam), training_features=X.copy(),
                      gram_factor=factor, x_mean=x_mean, y_mean=y_mean)


def smoother_weights(model, x):
    """Weight vector ``h(x)`` of length n with ``prediction(x) = h(x)^T z``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("smoother_weights takes a single feature vector")
    return model.smoother_weights(x)


# ---------------------------------------------------------------------------
# Regression trees and forests
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tree:
    """Flattened regression tree.

    Node ``i`` is a leaf when ``feature[i] == -1``; otherwise rows with
    ``x[feature[i]] <= threshold[i]`` go to ``left[i]``, the rest to
    ``right[i]``. ``value`` holds the node's training mean.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def apply(self, X):
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while rows.size:
            node = idx[rows]
            feat = self.feature[node]
            internal = feat >= 0
            rows, node, feat = rows[internal], node[internal], feat[internal]
            if not rows.size:
                break
            go_left = X[rows, feat] <= self.threshold[node]
            idx[rows] = np.where(go_left, self.left[node], self.right[node])
        return idx

    def predict_batch(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(feature=np.asarray(d["feature"], dtype=np.int64),
                   threshold=np.asarray(d["threshold"], dtype=np.float64),
                   left=np.asarray(d["left"], dtype=np.int64),
                   right=np.asarray(d["right"], dtype=np.int64),
                   value=np.asarray(d["value"], dtype=np.float64))


def _leaf_value(y):
    lo, hi = y.min(), y.max()
    if lo == hi:
        return float(lo)
    return float(min(max(y.mean(), lo), hi))


def _best_split(X, y, features, min_leaf):
    """Best variance-reducing split over the candidate ``features``.

    Returns ``(feature, threshold)`` or ``None``. Ties in the gain go to the
    lowest feature index, then to the smallest threshold.
    """
    n = y.shape[0]
    yc = y - y.mean()
    cols = X[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    left_sum = np.cumsum(yc[order], axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    # with centered responses the right-hand sum is -left_sum
    gain = left_sum ** 2 * (n / (n_left * (n - n_left)))

    valid = xs[:-1] < xs[1:]
    valid[: min_leaf - 1] = False
    valid[n - min_leaf:] = False
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    if not best > 0:
        return None
    pos, col = np.nonzero(gain == best)
    k = np.lexsort((pos, col))[0]
    pos, col = pos[k], col[k]
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(features[col]), float(thr)


def grow_tree(X, y, m_try, min_leaf, rng):
    """Grow one CART regression tree depth-first on the given rows."""
    p = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(y[rows]))
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        yn = y[rows]
        if rows.shape[0] < 2 * min_leaf or yn.min() == yn.max():
            continue
        features = np.sort(rng.choice(p, size=m_try, replace=False))
        split = _best_split(X[rows], yn, features, min_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], rrows))
        stack.append((left[node], lrows))

    return Tree(feature=np.asarray(feature, dtype=np.int64),
                threshold=np.asarray(threshold, dtype=np.float64),
                left=np.asarray(left, dtype=np.int64),
                right=np.asarray(right, dtype=np.int64),
                value=np.asarray(value, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: list
    n_tree: int
    m_try: int
    min_leaf: int
    seed: int
    n_features: int
    bootstrap: bool = True

    def predict_batch(self, features):
        X = _as_matrix(features)
        _check_rows(X, self.n_features)
        per_tree = np.stack([t.predict_batch(X) for t in self.trees])
        base = per_tree[0]
        pred = base + (per_tree - base).mean(axis=0)
        # keep the average inside the hull of the tree outputs
        return np.clip(pred, per_tree.min(axis=0), per_tree.max(axis=0))

    def predict(self, x):
        return float(self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def to_dict(self):
        return {"kind": "forest", "n_tree": self.n_tree, "m_try": self.m_try,
                "min_leaf": self.min_leaf, "seed": self.seed,
                "n_features": self.n_features, "bootstrap": self.bootstrap,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls(trees=[Tree.from_dict(t) for t in d["trees"]], n_tree=int(d["n_tree"]),
                   m_try=int(d["m_try"]), min_leaf=int(d["min_leaf"]), seed=int(d["seed"]),
                   n_features=int(d["n_features"]), bootstrap=bool(d["bootstrap"]))


def default_m_try(p):
    return max(1, p // 3)


def fit_forest(features, responses, n_tree=200, m_try=None, min_leaf=5, seed=0,
               bootstrap=True):
    """Fit a random forest of CART regression trees.

    Each tree draws its own Philox stream from ``(seed, tree_index)``, and
    rows are sorted into a canonical order before resampling, so the fit is
    invariant to the order of the training rows and to the order in which
    trees are grown.
    """
    X = _as_matrix(features)
    y = np.asarray(responses, dtype=np.float64).reshape(-1)
    n, p = X.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"{n} feature rows but {y.shape[0]} responses")
    if m_try is None:
        m_try = default_m_try(p)
    if n < 2:
        raise InvalidParams("forest needs at least two rows")
    if n_tree < 1 or min_leaf < 1 or not 1 <= m_try <= p:
        raise InvalidParams(
            f"invalid forest parameters n_tree={n_tree} m_try={m_try} min_leaf={min_leaf} (p={p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidParams("non-finite values in forest inputs")

    canon = np.lexsort(np.column_stack([X, y]).T[::-1])
    X, y = X[canon], y[canon]

    trees = []
    for t in range(n_tree):
        rng = substream(seed, t)
        if bootstrap:
            rows = np.sort(rng.integers(0, n, size=n))
        else:
            rows = np.arange(n)
        trees.append(grow_tree(X[rows], y[rows], m_try, min_leaf, rng))
    return ForestModel(trees=trees, n_tree=n_tree, m_try=m_try, min_leaf=min_leaf,
                       seed=int(seed), n_features=p, bootstrap=bootstrap)


def predict(model, x):
    """Predict a single feature vector with either learner."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("predict takes a single feature vector")
    return model.predict(x)


# ---------------------------------------------------------------------------
# Learner specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RidgeLearner:
    lam: float = DEFAULT_LAMBDA
    center: bool = False

    def fit(self, features, responses):
        return fit_ridge(features, responses, lam=self.lam, center=self.center)

    def to_dict(self):
        return {"kind": "ridge", "lambda": self.lam, "center": self.center}


@dataclass(frozen=True)
class ForestLearner:
    n_tree: int = 200
    m_try: Optional[int] = None
    min_leaf: int = 5
    seed: int = 0
    bootstrap: bool = True

    def fit(self, features, responses):
        return fit_forest(features, responses, n_tree=self.n_tree, m_try=self.m_try,
                          min_leaf=self.min_leaf, seed=self.seed, bootstrap=self.bootstrap)

    def to_dict(self):
        return {"kind": "forest", "n_tree": self.n_tree, "m_try": self.m_try,
                "min_leaf": self.min_leaf, "seed": self.seed, "bootstrap": self.bootstrap}


def learner_from_dict(d):
    kind = d.get("kind")
    if kind == "ridge":
        return RidgeLearner(lam=float(d.get("lambda", DEFAULT_LAMBDA)),
                            center=bool(d.get("center", False)))
    if kind == "forest":
        return ForestLearner(n_tree=int(d.get("n_tree", 200)), m_try=d.get("m_try"),
                             min_leaf=int(d.get("min_leaf", 5)), seed=int(d.get("seed", 0)),
                             bootstrap=bool(d.get("bootstrap", True)))
    raise InvalidParams(f"unknown learner kind {kind!r}")


def model_from_dict(d):
    kind = d.get("kind")
    if kind == "ridge":
        return RidgeModel.from_dict(d)
    if kind == "forest":
        return ForestModel.from_dict(d)
    raise InvalidParams(f"unknown model kind {kind!r}")
