"""
Exact recovery from the true covariance
=======================================

With the exact measurement covariance and the true noise variance the
reduced Laplacian is the unique positive definite solution of
``L S L = C``, so the closed-form estimate returns it to rounding error,
whatever the (positive definite) state covariance.
"""

import numpy as np

from mlbest import dcmodel, estimators, graph

rng = np.random.default_rng(7)

for M in (5, 10, 20, 40):
    lp = graph.laplacian_from_graph(graph.watts_strogatz(M, seed=M))
    A = rng.standard_normal((M, M))
    prior = dcmodel.StatePrior(A @ A.T / M + 0.1 * np.eye(M))
    sigma2 = 0.5
    cov, cov_red = dcmodel.model_covariance(lp, prior, sigma2)

    # the smallest eigenvalue of the full covariance is the noise variance
    s2 = estimators.estimate_noise_variance(cov)
    L_red = estimators.pd_mixing_estimate(cov_red, prior.sigma_theta_reduced, s2, lp)
    print(f"M={M:>3}: sigma2_hat={s2:.12f}  ||L_hat - L||_F = {np.linalg.norm(L_red - lp.L_reduced):.2e}")
