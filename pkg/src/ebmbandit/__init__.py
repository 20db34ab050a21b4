"""Hierarchical empirical-Bayes multi-bandit learning (ebmTS / ebmUCB)."""
from .config import EnvSpec, RunConfig, load_config
from .diagnostics import BoundParams, oracle_joint_posterior, theoretical_bound_ucb
from .empirical_bayes import (CovarianceEstimate, EmpiricalBayesConfig, estimate_noise_variance,
                              ols_estimate, sample_covariance, select_threshold,
                              threshold_covariance)
from .environment import (ContextDistribution, EnvTruth, generate_hierarchical_env,
                          generate_sparse_env, load_env, save_env)
from .exceptions import InvalidEnvironmentError, NumericalIntegrityError
from .harness import (AggregateResult, RegretTrace, run_episode, run_replications,
                      weighted_regret_trace)
from .policies import Decision, PolicyConfig, exploration_scale
from .posterior import (ArmPriorState, GaussianPosterior, HierarchicalArm, SufficientStats,
                        conditional_posterior, marginal_posterior, predict, shared_posterior,
                        update_stats, weighted_gram)

__version__ = "0.1.0"
