"""Covariance matrix adaptation evolution strategy on a box.

Canonical (mu/mu_w, lambda) CMA-ES with cumulative step-size adaptation and
rank-one plus rank-mu covariance updates; hyperparameters are the standard
defaults parameterized by dimension and population size.  Box bounds are
handled by reflecting samples into the box before evaluation and adding a
quadratic penalty on the pre-reflection violation, so the ranking still
feels the boundary while every evaluated point stays feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CmaesResult:
    x_best: np.ndarray
    f_best: float
    n_evaluations: int
    history_best_f: np.ndarray  # best-so-far objective per generation
    history_mean: np.ndarray  # distribution mean per generation
    history_best_x: np.ndarray  # best-so-far point per generation
    sigma_final: float


def reflect_into_box(x: np.ndarray, lower: np.ndarray,
                     upper: np.ndarray) -> np.ndarray:
    """Fold points into [lower, upper] with a triangular (mirror) map."""
    span = upper - lower
    y = np.mod(x - lower, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lower + y


def minimize_cmaes(fun, x0, sigma0, lower, upper, population=16,
                   generations=400, seed=0, penalty_weight=100.0):
    """Minimize fun over the box [lower, upper].

    fun is evaluated at reflected (feasible) points; non-finite values are
    treated as +inf.  Exactly population * generations evaluations are
    performed and two runs with the same seed produce identical histories.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = len(x0)
    lam = int(population)
    if lam < 4:
        raise ValueError("population must be >= 4")
    mu = lam // 2
    w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / np.sum(w**2)

    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, np.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1,
               2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

    rng = np.random.default_rng(seed)
    mean = x0.copy()
    sigma = float(sigma0)
    cov = np.eye(n)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)
    b_mat = np.eye(n)
    d_diag = np.ones(n)

    f_best = np.inf
    x_best = reflect_into_box(mean, lower, upper)
    hist_f = np.empty(generations)
    hist_mean = np.empty((generations, n))
    hist_x = np.empty((generations, n))
    n_eval = 0

    for g in range(generations):
        z = rng.standard_normal((lam, n))
        y = z @ (b_mat * d_diag).T  # B D z
        xs = mean + sigma * y
        xs_eval = reflect_into_box(xs, lower, upper)
        f_eff = np.empty(lam)
        for i in range(lam):
            f_pure = fun(xs_eval[i])
            n_eval += 1
            if not np.isfinite(f_pure):
                f_eff[i] = np.inf
                continue
            if f_pure < f_best:
                f_best = f_pure
                x_best = xs_eval[i].copy()
            violation = xs[i] - xs_eval[i]
            f_eff[i] = f_pure + penalty_weight * float(violation @ violation)
        order = np.argsort(f_eff, kind="stable")
        sel = xs[order[:mu]]
        y_sel = (sel - mean) / sigma

        mean_new = w @ sel
        # step-size path uses C^{-1/2} (m' - m) / sigma
        c_inv_half = b_mat @ np.diag(1.0 / d_diag) @ b_mat.T
        delta = (mean_new - mean) / sigma
        p_sigma = ((1.0 - c_sigma) * p_sigma
                   + np.sqrt(c_sigma * (2.0 - c_sigma) * mu_eff)
                   * (c_inv_half @ delta))
        h_sigma = (np.linalg.norm(p_sigma)
                   / np.sqrt(1.0 - (1.0 - c_sigma) ** (2 * (g + 1)))
                   < (1.4 + 2.0 / (n + 1.0)) * chi_n)
        p_c = ((1.0 - c_c) * p_c
               + h_sigma * np.sqrt(c_c * (2.0 - c_c) * mu_eff) * delta)
        rank_mu = (y_sel.T * w) @ y_sel
        cov = ((1.0 - c_1 - c_mu) * cov
               + c_1 * (np.outer(p_c, p_c)
                        + (1.0 - h_sigma) * c_c * (2.0 - c_c) * cov)
               + c_mu * rank_mu)
        sigma *= np.exp((c_sigma / d_sigma)
                        * (np.linalg.norm(p_sigma) / chi_n - 1.0))
        mean = mean_new

        cov = 0.5 * (cov + cov.T)
        eigval, b_mat = np.linalg.eigh(cov)
        d_diag = np.sqrt(np.clip(eigval, 1e-30, None))

        hist_f[g] = f_best
        hist_mean[g] = mean
        hist_x[g] = x_best
    return CmaesResult(x_best, f_best, n_eval, hist_f, hist_mean, hist_x,
                       sigma)
