"""Regret-bound diagnostic and the exact joint-Gaussian posterior oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .posterior import GaussianPosterior, SufficientStats

MAX_ORACLE_DIM = 200


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the ebmUCB regret bound.

    ``lambda_1`` and ``lambda_d`` bound the eigenvalues of every
    ``Sigma_k^-1`` from above and below; ``n_j`` are per-instance step
    counts.
    """

    sigma: float
    lam: float
    lambda_1: float
    lambda_d: float
    x_max: float
    b_max: float
    d: int
    K: int
    N: int
    n: int
    n_j: tuple
    delta: float


def confidence_width(t, p: BoundParams) -> float:
    """Width ``alpha_t(delta)`` of the estimation-error confidence set."""
    s2 = p.sigma ** 2
    ratio = (max(p.lam, s2 * p.lambda_1) + t * p.x_max ** 2 / p.d) / (
        np.sqrt(p.lam * p.lambda_d * s2) * p.delta)
    inner = s2 * p.d * max(p.lambda_1 / p.lam, 1.0) * np.log(ratio)
    return p.sigma * p.N * p.b_max * np.sqrt(p.lambda_1) + 2.0 * np.sqrt(max(inner, 0.0))


def bound_constants(p: BoundParams):
    """``(c1, c2, c3, c4)`` of the ebmUCB bound."""
    s2, x2 = p.sigma ** 2, p.x_max ** 2
    c1 = (x2 / p.lambda_d) / np.log1p(x2 / (s2 * p.lambda_d))
    c2 = x2 / (s2 * p.d * p.lambda_d)
    shared = p.lambda_1 ** 2 * x2 / (p.lambda_d ** 2 * p.lam)
    c3 = shared * (1.0 + x2 / (s2 * p.lambda_d)) / np.log1p(shared / s2)
    c4 = p.lambda_1 / p.lam
    return c1, c2, c3, c4


def theoretical_bound_ucb(p: BoundParams) -> float:
    """Upper bound on ebmUCB cumulative regret after ``p.n`` steps at confidence ``1 - delta``."""
    if not 0.0 < p.delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {p.delta}")
    for name in ("sigma", "lam", "lambda_1", "lambda_d", "x_max", "b_max"):
        if not getattr(p, name) > 0:
            raise ValueError(f"{name} must be positive, got {getattr(p, name)}")
    if len(p.n_j) != p.N:
        raise ValueError(f"n_j must have N={p.N} entries, got {len(p.n_j)}")
    c1, c2, c3, c4 = bound_constants(p)
    ndK = p.n * p.d * p.K
    inst = c1 * ndK * sum(np.log1p(c2 * nj) for nj in p.n_j)
    prior = c3 * ndK * np.log1p(c4 * p.N)
    return float(2.0 * confidence_width(p.n, p) * np.sqrt(inst + prior)
                 + 2.0 * p.x_max * p.b_max * p.K * p.N * p.n * p.delta)


def bound_params_from_run(env, trace, lam: float, delta: float) -> BoundParams:
    """Fill the bound constants from the true environment and a realized trace."""
    inv_eigs = np.concatenate([1.0 / np.linalg.eigvalsh(S) for S in env.Sigma])
    return BoundParams(
        sigma=float(np.max(env.sigma)),
        lam=lam,
        lambda_1=float(inv_eigs.max()),
        lambda_d=float(inv_eigs.min()),
        x_max=float(np.linalg.norm(trace.contexts, axis=1).max()),
        b_max=float(np.linalg.norm(env.beta, axis=2).max()),
        d=env.d, K=env.K, N=env.N, n=trace.horizon,
        n_j=tuple(int(c) for c in trace.instance_counts()),
        delta=delta,
    )


def oracle_joint_posterior(stats: Sequence[SufficientStats], Sigma, sigma2: float, lam: float):
    """Exact posterior over the stacked ``(beta_0, beta_1, ..., beta_N)`` of one arm.

    Builds the full ``d(N+1)`` precision matrix of the hierarchical model,
    inverts it once and reads off the marginal blocks.  Test-scale only.
    Returns ``(shared, [marginal_1, ..., marginal_N])``.
    """
    stats = list(stats)
    N = len(stats)
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    D = d * (N + 1)
    if D > MAX_ORACLE_DIM:
        raise ValueError(f"joint dimension {D} exceeds the oracle guard {MAX_ORACLE_DIM}")
    P_sigma = np.linalg.inv(Sigma)
    P = np.zeros((D, D))
    rhs = np.zeros(D)
    P[:d, :d] = lam * np.eye(d) + N * P_sigma
    for j, s in enumerate(stats, start=1):
        blk = slice(j * d, (j + 1) * d)
        P[blk, blk] = P_sigma + s.gram / sigma2
        P[:d, blk] = -P_sigma
        P[blk, :d] = -P_sigma
        rhs[blk] = s.xty / sigma2
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ rhs
    blocks = [GaussianPosterior(mean[i * d:(i + 1) * d], cov[i * d:(i + 1) * d, i * d:(i + 1) * d])
              for i in range(N + 1)]
    return blocks[0], blocks[1:]
