"""Synthetic source/target task pairs and the MSE-landscape experiment.

Random draws come from separate streams of one root seed: task weights on
stream 0, inputs on stream 1, observation noise on stream 2. Changing the
noise level therefore leaves inputs and weights untouched.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ._rng import child_seed, substream
from .core import Dataset, FunctionSource, LinearSource, TransferHyperparams, blend, transform_targets
from .errors import InvalidParams
from .learners import RidgeLearner
from .selection import CVEntry, default_grid, select_entry

WEIGHT_STREAM, X_STREAM, NOISE_STREAM = 0, 1, 2

RELU_HIDDEN, RELU_INPUTS = 50, 300
RELU_WEIGHT_VAR = 0.5


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParams(f"alpha must lie in [0, 1], got {alpha}")


@dataclass(frozen=True, eq=False)
class LinearTaskPair:
    """Source and target linear models; ``theta_t = (1 - alpha) theta_s + alpha theta_w``."""

    theta_s: np.ndarray
    theta_t: np.ndarray
    theta_w: np.ndarray
    alpha: float

    @property
    def p(self):
        return self.theta_s.shape[0]

    @property
    def source(self):
        return LinearSource(self.theta_s)

    @property
    def target(self):
        return LinearSource(self.theta_t)

    def to_dict(self):
        return {"kind": "linear", "alpha": self.alpha, "theta_s": self.theta_s.tolist(),
                "theta_t": self.theta_t.tolist(), "theta_w": self.theta_w.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(theta_s=np.asarray(d["theta_s"], dtype=np.float64),
                   theta_t=np.asarray(d["theta_t"], dtype=np.float64),
                   theta_w=np.asarray(d["theta_w"], dtype=np.float64),
                   alpha=float(d["alpha"]))


def gen_linear_tasks(p, alpha, seed):
    if p < 1:
        raise InvalidParams(f"p must be positive, got {p}")
    _check_alpha(alpha)
    rng = substream(seed, WEIGHT_STREAM)
    theta_s = rng.standard_normal(p)
    theta_w = rng.standard_normal(p)
    theta_t = theta_s.copy() if alpha == 0 else (1 - alpha) * theta_s + alpha * theta_w
    return LinearTaskPair(theta_s, theta_t, theta_w, float(alpha))


def relu_net(A, B):
    """``x -> B max(0, A x)`` as a batch function."""
    return lambda X: np.maximum(X @ A.T, 0.0) @ B.reshape(-1)


@dataclass(frozen=True, eq=False)
class ReluTaskPair:
    A_s: np.ndarray
    A_t: np.ndarray
    B_s: np.ndarray
    B_t: np.ndarray
    A_w: np.ndarray
    B_w: np.ndarray
    alpha: float

    @property
    def p(self):
        return self.A_s.shape[1]

    @property
    def source(self):
        return FunctionSource(relu_net(self.A_s, self.B_s), n_features=self.p)

    @property
    def target(self):
        return FunctionSource(relu_net(self.A_t, self.B_t), n_features=self.p)

    def to_dict(self):
        return {"kind": "relu", "alpha": self.alpha,
                **{k: getattr(self, k).tolist() for k in ("A_s", "A_t", "B_s", "B_t", "A_w", "B_w")}}

    @classmethod
    def from_dict(cls, d):
        arrs = {k: np.asarray(d[k], dtype=np.float64) for k in ("A_s", "A_t", "B_s", "B_t", "A_w", "B_w")}
        return cls(alpha=float(d["alpha"]), **arrs)


def gen_relu_tasks(alpha, seed, hidden=RELU_HIDDEN, p=RELU_INPUTS):
    """Single-hidden-layer ReLU networks with N(0, 0.5) weights (0.5 is the variance)."""
    _check_alpha(alpha)
    if hidden < 1 or p < 1:
        raise InvalidParams("network dimensions must be positive")
    rng = substream(seed, WEIGHT_STREAM)
    sd = np.sqrt(RELU_WEIGHT_VAR)
    A_s = sd * rng.standard_normal((hidden, p))
    A_w = sd * rng.standard_normal((hidden, p))
    B_s = sd * rng.standard_normal((1, hidden))
    B_w = sd * rng.standard_normal((1, hidden))
    if alpha == 0:
        A_t, B_t = A_s.copy(), B_s.copy()
    else:
        A_t = alpha * A_w + (1 - alpha) * A_s
        B_t = alpha * B_w + (1 - alpha) * B_s
    return ReluTaskPair(A_s, A_t, B_s, B_t, A_w, B_w, float(alpha))


def task_pair_from_dict(d):
    kind = d.get("kind")
    if kind == "linear":
        return LinearTaskPair.from_dict(d)
    if kind == "relu":
        return ReluTaskPair.from_dict(d)
    raise InvalidParams(f"unknown task kind {kind!r}")


def sample_dataset(f_t, p, n, sigma_eps, seed):
    """Draw ``x ~ N(0, I_p)`` and ``y = f_t(x) + eps`` with ``eps ~ N(0, sigma_eps^2)``."""
    if n < 1 or p < 1:
        raise InvalidParams(f"need n >= 1 and p >= 1, got n={n} p={p}")
    if not (np.isfinite(sigma_eps) and sigma_eps >= 0):
        raise InvalidParams(f"sigma_eps must be finite and non-negative, got {sigma_eps}")
    X = substream(seed, X_STREAM).standard_normal((n, p))
    f = f_t.predict_batch(X)
    if sigma_eps == 0:
        return Dataset(X, f)
    eps = substream(seed, NOISE_STREAM).standard_normal(n)
    return Dataset(X, f + sigma_eps * eps)


# ---------------------------------------------------------------------------
# Landscape experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "linear"
    alpha: float = 0.0
    sigma_eps: float = 1.0
    n_train: int = 50
    n_eval: int = 1000
    learner: Any = field(default_factory=RidgeLearner)
    grid: Any = field(default_factory=default_grid)
    seed: int = 0
    p: int = 300

    def __post_init__(self):
        if self.kind not in ("linear", "relu"):
            raise InvalidParams(f"unknown task kind {self.kind!r}")
        if self.n_train < 1 or self.n_eval < 1:
            raise InvalidParams("sample counts must be positive")
        if not (np.isfinite(self.sigma_eps) and self.sigma_eps >= 0):
            raise InvalidParams("sigma_eps must be finite and non-negative")
        _check_alpha(self.alpha)

    def tasks(self):
        seed = child_seed(self.seed, 0)
        if self.kind == "linear":
            return gen_linear_tasks(self.p, self.alpha, seed)
        return gen_relu_tasks(self.alpha, seed, p=self.p)


@dataclass(frozen=True)
class LandscapePoint:
    tau: float
    rho: float
    mse_raw: float
    mse_rescaled: float


@dataclass(frozen=True, eq=False)
class Landscape:
    points: list
    config: Optional[ExperimentConfig] = None

    def argmin(self):
        """Lowest-MSE point, with the same tie-breaking as hyperparameter selection."""
        e = select_entry([CVEntry(pt.tau, pt.rho, pt.mse_raw, ()) for pt in self.points])
        return TransferHyperparams(e.tau, e.rho)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "rho", "mse_raw", "mse_rescaled"])
        for pt in self.points:
            w.writerow([repr(pt.tau), repr(pt.rho), repr(pt.mse_raw), repr(pt.mse_rescaled)])
        return buf.getvalue()

    def to_json(self):
        rows = [{"tau": pt.tau, "rho": pt.rho, "mse_raw": pt.mse_raw,
                 "mse_rescaled": pt.mse_rescaled} for pt in self.points]
        return json.dumps({"points": rows}, indent=1) + "\n"


def rescale_unit(values):
    """Min-max rescale onto [0, 1]; non-finite entries stay as they are."""
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    if not finite.any():
        return v.copy()
    lo, hi = v[finite].min(), v[finite].max()
    out = v.copy()
    out[finite] = 0.0 if hi == lo else (v[finite] - lo) / (hi - lo)
    return out


def landscape_experiment(config):
    """Test MSE of the blended predictor over every grid point.

    One training set of ``n_train`` rows and one evaluation set of ``n_eval``
    fresh noisy rows are shared by all grid points. The learner is fitted once
    per distinct tau; rho only enters the blend.
    """
    pair = config.tasks()
    train = sample_dataset(pair.target, config.p, config.n_train, config.sigma_eps, child_seed(config.seed, 1))
    test = sample_dataset(pair.target, config.p, config.n_eval, config.sigma_eps, child_seed(config.seed, 2))
    source = pair.source
    fs_train = source.predict_batch(train.features)
    fs_test = source.predict_batch(test.features)

    pts = config.grid.points()
    raw = np.empty(len(pts))
    fits = {}
    for i, (t, r) in enumerate(pts):
        if r == 1.0:
            pred = fs_test
        else:
            if t not in fits:
                z = transform_targets(train, fs_train, t)
                fits[t] = config.learner.fit(train.features, z).predict_batch(test.features)
            pred = blend(fits[t], fs_test, r)
        raw[i] = np.mean((test.targets - pred) ** 2)
    scaled = rescale_unit(raw)
    return Landscape([LandscapePoint(t, r, float(m), float(s))
                      for (t, r), m, s in zip(pts, raw, scaled)], config)
