"""Estimate the prior of one arm from per-user regressions.

The covariance of the user coefficients is the thresholded scatter of their
OLS fits; small entries are zeroed and the result is kept positive definite.
"""
import numpy as np

from ebmbandit import (SufficientStats, estimate_noise_variance, ols_estimate,
                       sample_covariance, select_threshold, threshold_covariance)

rng = np.random.default_rng(1)
d, N, T = 4, 60, 80
Sigma = np.diag([1.0, 0.5, 0.5, 0.25])
Sigma[0, 1] = Sigma[1, 0] = 0.4      # one real correlation, the rest zero

betas = rng.multivariate_normal(np.zeros(d), Sigma, size=N)
stats = []
for b in betas:
    X = rng.standard_normal((T, d))
    stats.append(SufficientStats.from_data(X, X @ b + 0.7 * rng.standard_normal(T)))

fits = np.array([ols_estimate(s).beta for s in stats])
S = sample_covariance(fits)
gamma = select_threshold(S, N, c_gamma=0.5)
est = threshold_covariance(S, gamma)

np.set_printoptions(precision=3, suppress=True)
print("raw scatter\n", S)
print(f"threshold gamma = {gamma:.3f}")
print("thresholded\n", est.Sigma_hat)
print("truth\n", Sigma)
print("noise variance estimate", round(estimate_noise_variance(stats, fits, d), 4), "(truth 0.49)")
