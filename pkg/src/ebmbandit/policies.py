"""Arm-selection rules and the stateful agents that apply them during an episode.

Selection functions are stateless: they take posteriors (or ridge
statistics) and return a :class:`Decision`.  Ties go to the lowest arm
index everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .empirical_bayes import EmpiricalBayesConfig, default_prior, reestimate
from .exceptions import NumericalIntegrityError
from .posterior import (PSD_TOL, ArmPriorState, GaussianPosterior, HierarchicalArm,
                        SufficientStats, spd_inverse)

EBM_KINDS = ("ebmTS", "ebmUCB")
BASELINE_KINDS = ("LinTS", "LinUCB", "OLSGreedy")
POLICY_KINDS = EBM_KINDS + BASELINE_KINDS + ("Oracle",)

# Labels written to output files; OLSGreedy is not the forced-sampling OLSBandit.
OUTPUT_LABELS = {"OLSGreedy": "ols_greedy"}


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "ebmUCB"
    a: float = 0.1
    lam: float = 0.001
    min_pulls_per_arm: int = 1
    tie_break: str = "lowest_index"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.min_pulls_per_arm < 0:
            raise ValueError("min_pulls_per_arm must be nonnegative")
        if self.tie_break != "lowest_index":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")

    @property
    def label(self) -> str:
        return OUTPUT_LABELS.get(self.kind, self.kind)


@dataclass(frozen=True)
class Decision:
    arm: int
    scores: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    forced: bool = False


def exploration_scale(t: int, a: float) -> float:
    """Practical exploration multiplier ``a * sqrt(log t)``."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    return a * np.sqrt(np.log(t))


def _argmax(scores) -> int:
    # np.argmax returns the first maximizer, i.e. the lowest index among ties.
    return int(np.argmax(scores))


def _stack(posteriors: Sequence[GaussianPosterior]):
    return (np.stack([p.mean for p in posteriors]),
            np.stack([p.cov for p in posteriors]))


def _moments(means, covs, x):
    mu = means @ x
    tau2 = np.einsum("i,kij,j->k", x, covs, x)
    if tau2.min(initial=0.0) < -PSD_TOL:
        raise NumericalIntegrityError(f"negative predictive variance {tau2.min():.3e}")
    return mu, np.sqrt(np.maximum(tau2, 0.0))


def _cov_factor(covs):
    """Lower factors ``L`` with ``L L' = C`` for a stack of PSD matrices."""
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        pass
    # Semidefinite to round-off: fall back to a clipped eigen square root.
    w, U = np.linalg.eigh(covs)
    if w.min() < -PSD_TOL:
        raise NumericalIntegrityError(f"sampling covariance is not PSD (min eigenvalue {w.min():.3e})")
    return U * np.sqrt(np.maximum(w, 0.0))[..., None, :]


def select_ebm_ucb(posteriors: Sequence[GaussianPosterior], x, alpha: float) -> Decision:
    """Optimistic score ``mu + alpha * tau`` per arm."""
    means, covs = _stack(posteriors)
    mu, tau = _moments(means, covs, np.asarray(x, dtype=float))
    scores = mu + alpha * tau
    return Decision(_argmax(scores), scores, mu, tau)


def _sampled_scores(means, covs, x, alpha, rng):
    L = _cov_factor(covs)
    z = rng.standard_normal(means.shape)
    draws = means + alpha * (L @ z[..., None])[..., 0]
    return draws @ x


def select_ebm_ts(posteriors: Sequence[GaussianPosterior], x, alpha: float, rng) -> Decision:
    """Score each arm by ``x' beta`` with ``beta ~ N(mean, alpha^2 C)``."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    x = np.asarray(x, dtype=float)
    means, covs = _stack(posteriors)
    mu, tau = _moments(means, covs, x)
    scores = _sampled_scores(means, covs, x, alpha, rng)
    return Decision(_argmax(scores), scores, mu, tau)


def _ridge_decision(kind, gram, xty, x, alpha, lam, rng) -> Decision:
    d = x.shape[0]
    A_inv = spd_inverse(gram + lam * np.eye(d), "ridge design")
    theta = (A_inv @ xty[..., None])[..., 0]
    mu, tau = _moments(theta, A_inv, x)
    if kind == "LinUCB":
        scores = mu + alpha * tau
    elif kind == "LinTS":
        scores = _sampled_scores(theta, A_inv, x, alpha, rng)
    elif kind == "OLSGreedy":
        scores = mu
    else:
        raise ValueError(f"{kind!r} is not a baseline policy")
    return Decision(_argmax(scores), scores, mu, tau)


def select_baseline(kind: str, per_arm_stats: Sequence[SufficientStats], x, alpha: float,
                    lam: float, rng=None) -> Decision:
    """Independent per-instance ridge baselines: LinUCB, LinTS and OLSGreedy.

    ``per_arm_stats`` holds one instance's statistics for each arm; nothing
    is pooled across instances.
    """
    gram = np.stack([s.gram for s in per_arm_stats])
    xty = np.stack([s.xty for s in per_arm_stats])
    return _ridge_decision(kind, gram, xty, np.asarray(x, dtype=float), alpha, lam, rng)


def forced_initialization(pull_counts, min_pulls: int) -> Optional[int]:
    """Lowest arm of this instance pulled fewer than ``min_pulls`` times, else ``None``."""
    for k, c in enumerate(pull_counts):
        if c < min_pulls:
            return k
    return None


def _forced_decision(arm: int, K: int) -> Decision:
    nan = np.full(K, np.nan)
    return Decision(arm, nan, nan, nan, forced=True)


# -- agents --------------------------------------------------------------

class Agent:
    """Stateful policy driven by the episode loop.

    ``decide`` must not mutate learning state, so it can also be queried
    counterfactually for instances that did not arrive.
    """

    def __init__(self, config: PolicyConfig, n_instances: int, n_arms: int, dim: int):
        self.config = config
        self.N, self.K, self.d = n_instances, n_arms, dim
        self.counts = np.zeros((n_instances, n_arms), dtype=np.int64)

    def decide(self, j: int, x: np.ndarray, t: int, rng) -> Decision:
        arm = forced_initialization(self.counts[j], self.config.min_pulls_per_arm)
        if arm is not None:
            return _forced_decision(arm, self.K)
        return self._score(j, x, exploration_scale(t, self.config.a), rng)

    def update(self, j: int, k: int, x: np.ndarray, y: float) -> None:
        self.counts[j, k] += 1
        self._learn(j, k, x, y)

    def _score(self, j, x, alpha, rng) -> Decision:
        raise NotImplementedError

    def _learn(self, j, k, x, y) -> None:
        raise NotImplementedError


class HierarchicalAgent(Agent):
    """ebmTS / ebmUCB over one :class:`HierarchicalArm` per arm.

    With ``priors`` given the prior is fixed; otherwise it starts at the
    cold-start default and the pulled arm is re-estimated after each
    update.
    """

    def __init__(self, config, n_instances, n_arms, dim,
                 priors: Optional[Sequence[ArmPriorState]] = None,
                 eb_config: EmpiricalBayesConfig = EmpiricalBayesConfig()):
        super().__init__(config, n_instances, n_arms, dim)
        self.empirical = priors is None
        self.eb_config = eb_config
        if priors is None:
            priors = [default_prior(dim, config.lam) for _ in range(n_arms)]
        self.arms = [HierarchicalArm(n_instances, p) for p in priors]

    def _score(self, j, x, alpha, rng):
        posteriors = [arm.posterior(j) for arm in self.arms]
        if self.config.kind == "ebmUCB":
            return select_ebm_ucb(posteriors, x, alpha)
        return select_ebm_ts(posteriors, x, alpha, rng)

    def _learn(self, j, k, x, y):
        arm = self.arms[k]
        arm.update(j, x, y)
        if self.empirical:
            reestimate(arm, self.eb_config)


class IndependentAgent(Agent):
    """Per-(instance, arm) ridge statistics for the baselines."""

    def __init__(self, config, n_instances, n_arms, dim):
        super().__init__(config, n_instances, n_arms, dim)
        self.gram = np.zeros((n_instances, n_arms, dim, dim))
        self.xty = np.zeros((n_instances, n_arms, dim))

    def _score(self, j, x, alpha, rng):
        return _ridge_decision(self.config.kind, self.gram[j], self.xty[j], x,
                               alpha, self.config.lam, rng)

    def _learn(self, j, k, x, y):
        self.gram[j, k] += np.outer(x, x)
        self.xty[j, k] += x * y

    def stats(self, j: int, k: int) -> SufficientStats:
        return SufficientStats(self.gram[j, k].copy(), self.xty[j, k].copy(),
                               int(self.counts[j, k]))


class OracleAgent(Agent):
    """Knows the true parameters; its regret is zero by construction."""

    def __init__(self, config, beta: np.ndarray):
        N, K, d = beta.shape
        super().__init__(config, N, K, d)
        self.beta = beta

    def decide(self, j, x, t, rng):
        mu = self.beta[j] @ x
        return Decision(_argmax(mu), mu, mu, np.zeros(self.K))

    def _learn(self, j, k, x, y):
        pass


def make_agent(config: PolicyConfig, env, estimation: str = "empirical_bayes",
               eb_config: EmpiricalBayesConfig = EmpiricalBayesConfig()) -> Agent:
    """Build the agent for ``config`` on environment ``env``.

    ``estimation="fixed_prior"`` injects the true ``Sigma_k`` and ``sigma_k``
    into the hierarchical policies.
    """
    if config.kind == "Oracle":
        return OracleAgent(config, env.beta)
    if config.kind in BASELINE_KINDS:
        return IndependentAgent(config, env.N, env.K, env.d)
    if estimation == "fixed_prior":
        priors = [ArmPriorState.from_covariance(env.Sigma[k], env.sigma[k] ** 2, config.lam)
                  for k in range(env.K)]
    elif estimation == "empirical_bayes":
        priors = None
    else:
        raise ValueError(f"unknown estimation mode {estimation!r}")
    return HierarchicalAgent(config, env.N, env.K, env.d, priors, eb_config)
