"""Empirical-Bayes estimates of the instance covariance and the reward noise.

The covariance estimate is the centered scatter of per-instance OLS fits,
hard-thresholded entrywise and then pushed back to positive definiteness
by flooring its eigenvalues.  The noise variance pools residuals of all
instances of one arm.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import InsufficientInstancesError
from .posterior import ArmPriorState, HierarchicalArm, SufficientStats, symmetrize

OLS = "ols"
RIDGE = "ridge"
UNAVAILABLE = "unavailable"

MAX_CONDITION = 1e10


@dataclass(frozen=True)
class OLSResult:
    beta: Optional[np.ndarray]
    status: str

    @property
    def available(self) -> bool:
        return self.status != UNAVAILABLE


@dataclass(frozen=True)
class CovarianceEstimate:
    Sigma_hat: np.ndarray
    gamma: float
    n_contributing: int
    repaired: bool


@dataclass(frozen=True)
class EmpiricalBayesConfig:
    """Knobs of the per-arm re-estimation.

    Parameters
    ----------
    c_gamma : float
        Multiplier of the thresholding rate ``max_diag(S) * sqrt(log d / N')``.
    eig_floor : float
        Smallest eigenvalue allowed in the thresholded covariance.
    sigma2_floor : float
        Lower bound on the noise-variance estimate.
    ridge_fallback : float
        Ridge added when an instance's OLS problem is underdetermined.
    threshold_diagonal : bool
        Whether variances are thresholded along with covariances.  Turning
        this off keeps small but genuine variances out of the eigenvalue
        floor.
    """

    c_gamma: float = 0.5
    eig_floor: float = 1e-4
    sigma2_floor: float = 1e-6
    ridge_fallback: float = 1e-6
    threshold_diagonal: bool = True


def _ols_batch(gram, xty, count, ridge_fallback, with_ridge=True):
    """Vectorized :func:`ols_estimate` over a stack of instances.

    With ``with_ridge=False`` the ridge-fallback rows are left as NaN.
    """
    n, d = xty.shape
    eig = np.linalg.eigvalsh(gram)
    lo, hi = eig[:, 0], eig[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        well_posed = (count >= d) & (lo > 0) & (hi / np.where(lo > 0, lo, 1.0) < MAX_CONDITION)
    status = np.full(n, UNAVAILABLE, dtype=object)
    status[count >= 1] = RIDGE
    status[well_posed] = OLS
    betas = np.full((n, d), np.nan)
    if well_posed.any():
        betas[well_posed] = np.linalg.solve(gram[well_posed], xty[well_posed][..., None])[..., 0]
    ridge = (count >= 1) & ~well_posed if with_ridge else np.zeros(n, dtype=bool)
    for j in np.flatnonzero(ridge):
        A = gram[j] + ridge_fallback * np.eye(d)
        betas[j] = np.linalg.lstsq(A, xty[j], rcond=None)[0]
    return betas, status


def ols_estimate(stats: SufficientStats, ridge_fallback: float = 0.0) -> OLSResult:
    """Per-instance least squares, with a ridge fallback when ``X'X`` is not invertible."""
    if stats.count == 0:
        return OLSResult(None, UNAVAILABLE)
    betas, status = _ols_batch(stats.gram[None], stats.xty[None],
                               np.array([stats.count]), ridge_fallback)
    return OLSResult(betas[0], str(status[0]))


def _rss(gram, xty, yty, beta):
    quad = np.einsum("...i,...ij,...j->...", beta, gram, beta)
    return np.maximum(yty - 2.0 * np.einsum("...i,...i->...", beta, xty) + quad, 0.0)


def estimate_noise_variance(stats_by_instance: Sequence[SufficientStats],
                            beta_hat_by_instance, d: int,
                            floor: float = 1e-6) -> float:
    """Pooled residual variance ``sum_j ||y_j - X_j b_j||^2 / max(sum_j T_j - d - 1, 1)``."""
    stats_by_instance = list(stats_by_instance)
    if len(stats_by_instance) != len(beta_hat_by_instance):
        raise ValueError("stats and estimates must be aligned by instance")
    rss = 0.0
    total = 0
    for stats, beta in zip(stats_by_instance, beta_hat_by_instance):
        if stats.count == 0:
            continue
        rss += float(_rss(stats.gram, stats.xty, stats.yty, np.asarray(beta, dtype=float)))
        total += stats.count
    return max(rss / max(total - d - 1, 1), floor)


def sample_covariance(ols_estimates) -> np.ndarray:
    """Unbiased sample covariance of the per-instance OLS vectors (rows)."""
    B = np.atleast_2d(np.asarray(ols_estimates, dtype=float))
    if B.shape[0] < 2:
        raise InsufficientInstancesError(f"need at least 2 OLS estimates, got {B.shape[0]}")
    centered = B - B.mean(axis=0)
    return symmetrize(centered.T @ centered) / (B.shape[0] - 1)


def hard_threshold(S: np.ndarray, gamma: float, diagonal: bool = True) -> np.ndarray:
    """Zero every entry whose magnitude is below ``gamma``."""
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    S = np.asarray(S, dtype=float)
    T = np.where(np.abs(S) >= gamma, S, 0.0)
    if not diagonal:
        np.fill_diagonal(T, np.diag(S))
    return T


def threshold_covariance(S, gamma: float, eig_floor: float = 1e-4,
                         n_contributing: int = 0,
                         threshold_diagonal: bool = True) -> CovarianceEstimate:
    """Hard-threshold ``S`` and floor its eigenvalues at ``eig_floor``."""
    T = symmetrize(hard_threshold(S, gamma, threshold_diagonal))
    w, U = np.linalg.eigh(T)
    repaired = bool(w.min() < eig_floor)
    if repaired:
        T = symmetrize((U * np.maximum(w, eig_floor)) @ U.T)
    return CovarianceEstimate(T, float(gamma), int(n_contributing), repaired)


def select_threshold(S, N_prime: int, c_gamma: float = 0.5) -> float:
    """Threshold at the rate ``c_gamma * max_diag(S) * sqrt(log d / N')``."""
    if N_prime < 2:
        raise InsufficientInstancesError(f"N_prime must be at least 2, got {N_prime}")
    S = np.atleast_2d(S)
    d = S.shape[0]
    return float(c_gamma * np.max(np.diag(S)) * np.sqrt(np.log(d) / N_prime))


def estimate_covariance(ols_estimates, config: EmpiricalBayesConfig = EmpiricalBayesConfig()):
    B = np.atleast_2d(np.asarray(ols_estimates, dtype=float))
    S = sample_covariance(B)
    gamma = select_threshold(S, B.shape[0], config.c_gamma)
    return threshold_covariance(S, gamma, config.eig_floor, B.shape[0],
                                config.threshold_diagonal)


def default_prior(d: int, lam: float) -> ArmPriorState:
    """Cold-start prior: identity covariance and unit noise."""
    return ArmPriorState(1.0, np.eye(d), np.eye(d), float(lam))


def reestimate(arm: HierarchicalArm, config: EmpiricalBayesConfig = EmpiricalBayesConfig()):
    """Re-fit the prior of ``arm`` in place from its own data.

    The noise variance pools residuals against the arm's current posterior
    means; the covariance is the thresholded scatter of per-instance OLS
    fits.  Keeps the cold-start prior until the arm has ``d + 1`` pulls in
    total and at least two instances with a proper OLS fit.  Returns the
    covariance estimate, or ``None`` while cold.
    """
    d = arm.dim
    lam = arm.prior.lam
    total = int(arm.count.sum())
    betas, status = _ols_batch(arm.gram, arm.xty, arm.count, config.ridge_fallback,
                               with_ridge=False)
    ok = status == OLS
    if total < d + 1 or ok.sum() < 2:
        if not _is_default(arm.prior):
            arm.set_prior(default_prior(d, lam))
        return None
    seen = arm.count > 0
    means = arm.posterior_means()
    rss = _rss(arm.gram[seen], arm.xty[seen], arm.yty[seen], means[seen]).sum()
    sigma2 = max(rss / max(total - d - 1, 1), config.sigma2_floor)
    est = estimate_covariance(betas[ok], config)
    arm.set_prior(ArmPriorState.from_covariance(est.Sigma_hat, sigma2, lam))
    return est


def _is_default(prior: ArmPriorState) -> bool:
    d = prior.dim
    return prior.sigma2 == 1.0 and np.array_equal(prior.Sigma, np.eye(d))
