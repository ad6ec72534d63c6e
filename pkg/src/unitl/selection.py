"""Cross-validated grid search over (tau, rho) and regime classification."""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .core import TransferHyperparams, blend, transform_targets
from .errors import EmptyTable, InsufficientData, InvalidParams, TransferError

log = logging.getLogger(__name__)

_DECIMALS = 12


def _clean(values):
    return sorted({float(np.round(v, _DECIMALS)) for v in values})


@dataclass(frozen=True)
class GridSpec:
    tau_values: tuple
    rho_values: tuple
    include_diagonal: bool = True
    min_tau: float = -np.inf

    def __post_init__(self):
        taus, rhos = _clean(self.tau_values), _clean(self.rho_values)
        if not taus or not rhos:
            raise InvalidParams("grid needs at least one tau and one rho value")
        if any(not t < 1 for t in taus) or any(t < self.min_tau for t in taus):
            raise InvalidParams(f"tau values must lie in [{self.min_tau}, 1)")
        if any(not 0 <= r <= 1 for r in rhos):
            raise InvalidParams("rho values must lie in [0, 1]")
        object.__setattr__(self, "tau_values", tuple(taus))
        object.__setattr__(self, "rho_values", tuple(rhos))

    def points(self):
        """Grid points ``(tau, rho)`` ordered by tau, then rho, without duplicates.

        Diagonal points ``tau == rho`` are added for every rho below one; the
        point (1, 1) is not a valid setting and is skipped.
        """
        pts = {(t, r) for t in self.tau_values for r in self.rho_values}
        if self.include_diagonal:
            pts.update((r, r) for r in self.rho_values if r < 1)
        return sorted(pts)

    def to_dict(self):
        return {"tau_values": list(self.tau_values), "rho_values": list(self.rho_values),
                "include_diagonal": self.include_diagonal}


def default_grid():
    taus = np.round(np.arange(-20, 10) / 10.0, 1)
    rhos = np.round(np.arange(0, 11) / 10.0, 1)
    return GridSpec(tuple(taus), tuple(rhos), include_diagonal=True)


@dataclass(frozen=True)
class CVEntry:
    tau: float
    rho: float
    cv_mse: float
    fold_mses: tuple


@dataclass(frozen=True, eq=False)
class CVResultTable:
    entries: list
    k: int
    seed: int
    fold_ids: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.entries)

    def lookup(self, tau, rho):
        for e in self.entries:
            if np.isclose(e.tau, tau, rtol=0, atol=1e-12) and np.isclose(e.rho, rho, rtol=0, atol=1e-12):
                return e
        raise KeyError((tau, rho))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "rho", "cv_mse"] + [f"fold_{i + 1}" for i in range(self.k)])
        for e in self.entries:
            w.writerow([repr(e.tau), repr(e.rho), repr(e.cv_mse)] + [repr(m) for m in e.fold_mses])
        return buf.getvalue()


def make_folds(n, k, seed):
    """Fold label of each row from a seeded shuffle; sizes differ by at most one."""
    if k < 2:
        raise InvalidParams(f"need at least two folds, got {k}")
    if n < k:
        raise InsufficientData(f"{n} rows cannot fill {k} folds")
    perm = substream(seed, 0).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def cross_validate(dataset, source, grid, learner, k=5, seed=0):
    """k-fold cross-validation of every grid point on shared folds.

    The learner is fitted once per (fold, distinct tau); all rho values for
    that tau reuse the fit, since rho enters only through the blend. A fit
    that raises marks every cell depending on it as ``inf``.
    """
    folds = make_folds(dataset.n, k, seed)
    fs_all = np.asarray(source.predict_batch(dataset.features), dtype=np.float64)
    points = grid.points()
    by_tau = {}
    for t, r in points:
        by_tau.setdefault(t, []).append(r)

    fold_mse = {pt: np.full(k, np.inf) for pt in points}
    for j in range(k):
        test = folds == j
        train = ~test
        X_tr, y_tr, fs_tr = dataset.features[train], dataset.targets[train], fs_all[train]
        X_te, y_te, fs_te = dataset.features[test], dataset.targets[test], fs_all[test]
        for t, rhos in by_tau.items():
            try:
                z = transform_targets(y_tr, fs_tr, t)
                model = learner.fit(X_tr, z)
                f_w = model.predict_batch(X_te)
            except (TransferError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                log.warning("fit failed at tau=%s fold=%d: %s", t, j, exc)
                continue
            for r in rhos:
                pred = fs_te if r == 1.0 else blend(f_w, fs_te, r)
                mse = float(np.mean((y_te - pred) ** 2))
                fold_mse[(t, r)][j] = mse if np.isfinite(mse) else np.inf

    entries = [CVEntry(t, r, float(np.mean(fold_mse[(t, r)])), tuple(float(v) for v in fold_mse[(t, r)]))
               for t, r in points]
    return CVResultTable(entries=entries, k=k, seed=seed, fold_ids=folds)


def _selection_key(e):
    return (e.cv_mse, -e.rho, abs(e.tau - e.rho), abs(e.tau))


def select_entry(table):
    entries = table.entries if isinstance(table, CVResultTable) else list(table)
    if not entries:
        raise EmptyTable("cannot select from an empty table")
    return min(entries, key=_selection_key)


def select_hyperparams(table):
    """Grid point with the lowest CV error.

    Ties prefer the larger rho, then the point closer to the diagonal
    ``tau == rho``, then the smaller ``|tau|``.
    """
    e = select_entry(table)
    return TransferHyperparams(e.tau, e.rho)


class Regime(str, enum.Enum):
    DIRECT_SOURCE = "DirectSource"
    NO_TRANSFER = "NoTransfer"
    SIMILARITY_REGULARIZATION = "SimilarityRegularization"
    DENSITY_RATIO = "DensityRatio"
    HYBRID = "Hybrid"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RegimeLabel:
    regime: Regime
    tau: float
    rho: float


def classify_regime(hp, tol=1e-9):
    """Map a hyperparameter point onto the named transfer regimes.

    Rules are checked in order: direct source use (rho at one), no transfer
    (origin), similarity regularization (negative tau, rho at zero),
    density-ratio transfer (tau equals rho), else a hybrid.
    """
    if tol < 0:
        raise InvalidParams("tol must be non-negative")
    tau, rho = hp.tau, hp.rho
    if rho >= 1 - tol:
        regime = Regime.DIRECT_SOURCE
    elif abs(tau) <= tol and rho <= tol:
        regime = Regime.NO_TRANSFER
    elif tau < -tol and rho <= tol:
        regime = Regime.SIMILARITY_REGULARIZATION
    elif abs(tau - rho) <= tol and rho > tol:
        regime = Regime.DENSITY_RATIO
    else:
        regime = Regime.HYBRID
    return RegimeLabel(regime, tau, rho)
