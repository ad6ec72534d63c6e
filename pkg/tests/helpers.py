"""Shared setups and brute-force oracles for the test suite."""

import numpy as np

from unitl.analysis import Components, estimate_components, estimate_moments, expected_mse, mse_at
from unitl.learners import fit_ridge
from unitl.synthdata import gen_linear_tasks, sample_dataset

MC_PROBES = [(0.0, 0.0), (0.5, 0.5), (-0.5, 0.0), (0.0, 1.0), (-1.0, 0.3),
             (0.3, 0.8), (0.9, 0.9), (-2.0, 0.0), (0.6, 0.2)]


def linear_setup(p=20, n=40, alpha=0.5, lam=1e-4, sigma_eps=1.0, n_eval=50, seed=0):
    pair = gen_linear_tasks(p, alpha, seed)
    X = sample_dataset(pair.target, p, n, 0.0, seed + 1).features
    E = sample_dataset(pair.target, p, n_eval, 0.0, seed + 2).features
    smoother = fit_ridge(X, pair.target.predict_batch(X), lam=lam)
    return pair, X, E, smoother


def monte_carlo_mse(pair, X, E, lam, sigma_eps, tau, rho, n_rep=20_000, seed=0):
    """Empirical E[(y - y_hat(x))^2] per evaluation point over fresh noise.

    Each replicate redraws the training noise, refits ridge on the transformed
    outputs through an LU solve of the normal equations, and draws a fresh
    test response at every evaluation point.
    """
    rng = np.random.default_rng(seed)
    n, p = X.shape
    ft, fs = pair.target.predict_batch(X), pair.source.predict_batch(X)
    ft_e, fs_e = pair.target.predict_batch(E), pair.source.predict_batch(E)
    A = X.T @ X + lam * np.eye(p)
    sq = np.zeros(E.shape[0])
    sq2 = np.zeros(E.shape[0])
    chunk = 5000
    for start in range(0, n_rep, chunk):
        m = min(chunk, n_rep - start)
        y = ft + sigma_eps * rng.standard_normal((m, n))
        z = (y - tau * fs) / (1 - tau)
        coef = np.linalg.solve(A, X.T @ z.T)          # p x m
        pred = (1 - rho) * (E @ coef).T + rho * fs_e   # m x n_eval
        y_new = ft_e + sigma_eps * rng.standard_normal((m, E.shape[0]))
        err2 = (y_new - pred) ** 2
        sq += err2.sum(axis=0)
        sq2 += (err2 ** 2).sum(axis=0)
    mean = sq / n_rep
    se = np.sqrt(np.maximum(sq2 / n_rep - mean ** 2, 0.0) / n_rep)
    return mean, se


def analytic_mse(pair, E, smoother, sigma_eps, tau, rho):
    comps = estimate_components(E, pair.target, pair.source, smoother, sigma_eps2=sigma_eps ** 2)
    return mse_at(comps, sigma_eps ** 2, tau, rho)


def random_moment_set(rng, n_points=200):
    """Moments of randomly correlated, randomly scaled components."""
    L = rng.standard_normal((3, 3)) * 10 ** rng.uniform(-1, 1, size=(3, 1))
    comps = rng.standard_normal((n_points, 3)) @ L.T + rng.uniform(-1, 1, 3)
    v = rng.exponential(10 ** rng.uniform(-2, 1), n_points)
    sigma2 = float(rng.uniform(0, 2))
    return estimate_moments(Components(comps[:, 0], comps[:, 1], comps[:, 2], v), sigma2)


def brute_force_rho(m, tau, resolution=1e-4):
    grid = np.linspace(0.0, 1.0, int(round(1 / resolution)) + 1)
    return float(grid[np.argmin(expected_mse(m, tau, grid))])
