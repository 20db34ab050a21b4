"""Hierarchical Gaussian posterior for one arm shared across bandit instances.

The model for a single arm is::

    y | beta_j   ~ N(x' beta_j, sigma2)
    beta_j | b0  ~ N(b0, Sigma)
    b0           ~ N(0, I / lam)

Everything here works from per-instance sufficient statistics, so no
T x T matrix is ever formed.  The private helpers broadcast over leading
axes; :class:`HierarchicalArm` uses them on stacks of N instances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalIntegrityError

SYM_TOL = 1e-10
PSD_TOL = 1e-8


@dataclass(frozen=True)
class SufficientStats:
    """Accumulated ``X'X``, ``X'y``, ``y'y`` and pull count for one (arm, instance)."""

    gram: np.ndarray
    xty: np.ndarray
    count: int = 0
    yty: float = 0.0

    @classmethod
    def empty(cls, d: int) -> "SufficientStats":
        return cls(np.zeros((d, d)), np.zeros(d), 0, 0.0)

    @classmethod
    def from_data(cls, X, y) -> "SufficientStats":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        return cls(X.T @ X, X.T @ y, int(X.shape[0]), float(y @ y))

    @property
    def dim(self) -> int:
        return self.xty.shape[0]


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ArmPriorState:
    """Noise variance, instance covariance (with cached inverse) and ridge precision."""

    sigma2: float
    Sigma: np.ndarray
    Sigma_inv: np.ndarray
    lam: float

    @classmethod
    def from_covariance(cls, Sigma, sigma2: float, lam: float) -> "ArmPriorState":
        Sigma = symmetrize(np.asarray(Sigma, dtype=float))
        if sigma2 <= 0 or lam <= 0:
            raise ValueError(f"sigma2 and lam must be positive, got {sigma2}, {lam}")
        Sigma_inv = spd_inverse(Sigma, "prior covariance")
        return cls(float(sigma2), Sigma, Sigma_inv, float(lam))

    @property
    def dim(self) -> int:
        return self.Sigma.shape[0]


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def spd_inverse(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of a (stack of) symmetric positive definite matrices via Cholesky."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalIntegrityError(f"Cholesky factorization of {what} failed: {exc}") from exc
    L_inv = np.linalg.inv(L)
    return np.swapaxes(L_inv, -1, -2) @ L_inv


def check_covariance(C: np.ndarray, what: str = "covariance") -> np.ndarray:
    """Symmetrize ``C`` and reject it if any eigenvalue is below ``-PSD_TOL``."""
    C = symmetrize(C)
    lo = np.linalg.eigvalsh(C).min()
    if lo < -PSD_TOL:
        raise NumericalIntegrityError(f"{what} is not PSD (min eigenvalue {lo:.3e})")
    return C


def _check_dim(v: np.ndarray, d: int, what: str) -> None:
    if v.shape != (d,):
        raise ValueError(f"{what} must have shape ({d},), got {v.shape}")


# -- batched core ---------------------------------------------------------

def _ctilde(gram, prior: ArmPriorState):
    return spd_inverse(gram + prior.sigma2 * prior.Sigma_inv, "X'X + sigma2 Sigma^-1")


def _weighted(gram, xty, ctilde, prior: ArmPriorState):
    # X'V^-1 X = Sigma^-1 Ct X'X and X'V^-1 y = Sigma^-1 Ct X'y; algebraically equal to the
    # Woodbury forms but free of the Sigma^-1 - (...) cancellation.
    SiC = prior.Sigma_inv @ ctilde
    G = symmetrize(SiC @ gram)
    v = (SiC @ xty[..., None])[..., 0]
    return G, v


def _marginal(xty, ctilde, prior: ArmPriorState, shared: GaussianPosterior):
    M = prior.sigma2 * (ctilde @ prior.Sigma_inv)
    mean = (M @ shared.mean[:, None])[..., 0] + (ctilde @ xty[..., None])[..., 0]
    cov = prior.sigma2 * ctilde + M @ shared.cov @ np.swapaxes(M, -1, -2)
    return mean, symmetrize(cov)


# -- public operations ----------------------------------------------------

def update_stats(stats: SufficientStats, x, y: float) -> SufficientStats:
    """Return ``stats`` with the observation ``(x, y)`` folded in."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, stats.dim, "x")
    y = float(y)
    return SufficientStats(
        stats.gram + np.outer(x, x),
        stats.xty + x * y,
        stats.count + 1,
        stats.yty + y * y,
    )


def conditional_posterior(stats: SufficientStats, prior: ArmPriorState, beta_k0) -> GaussianPosterior:
    """Posterior of an instance parameter given the shared mean ``beta_k0``.

    Returns mean ``Ct (sigma2 Sigma^-1 beta_k0 + X'y)`` and covariance
    ``sigma2 Ct`` where ``Ct = (X'X + sigma2 Sigma^-1)^-1``.
    """
    beta_k0 = np.asarray(beta_k0, dtype=float)
    _check_dim(beta_k0, prior.dim, "beta_k0")
    if stats.count == 0:
        return GaussianPosterior(beta_k0.copy(), prior.Sigma.copy())
    ct = _ctilde(stats.gram, prior)
    mean = ct @ (prior.sigma2 * (prior.Sigma_inv @ beta_k0) + stats.xty)
    return GaussianPosterior(mean, symmetrize(prior.sigma2 * ct))


def weighted_gram(stats: SufficientStats, prior: ArmPriorState):
    """``(X'V^-1 X, X'V^-1 y)`` with ``V = X Sigma X' + sigma2 I``, using d x d algebra only."""
    d = prior.dim
    if stats.count == 0:
        return np.zeros((d, d)), np.zeros(d)
    ct = _ctilde(stats.gram, prior)
    return _weighted(stats.gram, stats.xty, ct, prior)


def shared_posterior(grams, lam: float) -> GaussianPosterior:
    """Posterior of the shared mean from per-instance weighted grams.

    ``grams`` is a sequence of ``(X'V^-1 X, X'V^-1 y)`` pairs.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    grams = list(grams)
    if not grams:
        raise ValueError("at least one instance is required")
    G = sum(g for g, _ in grams)
    v = sum(b for _, b in grams)
    d = G.shape[0]
    if any(g.shape != (d, d) or b.shape != (d,) for g, b in grams):
        raise ValueError("all weighted grams must share the same dimension")
    Phi = spd_inverse(G + lam * np.eye(d), "shared precision")
    return GaussianPosterior(Phi @ v, Phi)


def marginal_posterior(stats: SufficientStats, prior: ArmPriorState,
                       shared: GaussianPosterior) -> GaussianPosterior:
    """Posterior of an instance parameter with the shared mean integrated out."""
    if stats.count == 0:
        return GaussianPosterior(shared.mean.copy(), symmetrize(prior.Sigma + shared.cov))
    ct = _ctilde(stats.gram, prior)
    mean, cov = _marginal(stats.xty, ct, prior, shared)
    return GaussianPosterior(mean, cov)


def predict(posterior: GaussianPosterior, x):
    """Predicted reward ``x'mean`` and its variance ``x'Cx`` for context ``x``."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, posterior.dim, "x")
    mu = float(x @ posterior.mean)
    tau2 = float(x @ posterior.cov @ x)
    return mu, clamp_variance(tau2)


def clamp_variance(tau2: float) -> float:
    if tau2 < 0.0:
        if tau2 < -PSD_TOL:
            raise NumericalIntegrityError(f"negative predictive variance {tau2:.3e}")
        return 0.0
    return tau2


class HierarchicalArm:
    """Posterior state of one arm across ``n_instances`` bandit instances.

    Per-instance ``Ct`` and weighted grams are cached; an observation only
    refreshes its own instance, while a new prior refreshes all of them.
    Marginal posteriors are computed on demand and memoized until the next
    write.
    """

    def __init__(self, n_instances: int, prior: ArmPriorState):
        d = prior.dim
        self.n_instances = n_instances
        self.gram = np.zeros((n_instances, d, d))
        self.xty = np.zeros((n_instances, d))
        self.yty = np.zeros(n_instances)
        self.count = np.zeros(n_instances, dtype=np.int64)
        self.prior = prior
        self._refresh_all()

    @property
    def dim(self) -> int:
        return self.prior.dim

    def stats(self, j: int) -> SufficientStats:
        return SufficientStats(self.gram[j].copy(), self.xty[j].copy(),
                               int(self.count[j]), float(self.yty[j]))

    def all_stats(self):
        return [self.stats(j) for j in range(self.n_instances)]

    def update(self, j: int, x: np.ndarray, y: float) -> None:
        x = np.asarray(x, dtype=float)
        self.gram[j] += np.outer(x, x)
        self.xty[j] += x * y
        self.yty[j] += y * y
        self.count[j] += 1
        ct = _ctilde(self.gram[j], self.prior)
        G, v = _weighted(self.gram[j], self.xty[j], ct, self.prior)
        self._ctilde[j] = ct
        self._wgram[j] = G
        self._wvec[j] = v
        self._refresh_shared()

    def set_prior(self, prior: ArmPriorState) -> None:
        self.prior = prior
        self._refresh_all()

    def _refresh_all(self) -> None:
        self._ctilde = _ctilde(self.gram, self.prior)
        self._wgram, self._wvec = _weighted(self.gram, self.xty, self._ctilde, self.prior)
        self._refresh_shared()

    def _refresh_shared(self) -> None:
        d = self.dim
        G = self._wgram.sum(axis=0)
        Phi = spd_inverse(G + self.prior.lam * np.eye(d), "shared precision")
        self.shared = GaussianPosterior(Phi @ self._wvec.sum(axis=0), Phi)
        self._marginals = {}

    def posterior(self, j: int) -> GaussianPosterior:
        post = self._marginals.get(j)
        if post is None:
            mean, cov = _marginal(self.xty[j], self._ctilde[j], self.prior, self.shared)
            post = self._marginals[j] = GaussianPosterior(mean, cov)
        return post

    def posterior_means(self) -> np.ndarray:
        """Marginal posterior means of every instance, shape ``(N, d)``."""
        mean, _ = _marginal(self.xty, self._ctilde, self.prior, self.shared)
        return mean

    def weighted_gram(self, j: int):
        return self._wgram[j].copy(), self._wvec[j].copy()
