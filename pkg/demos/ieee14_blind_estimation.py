"""
Blind topology and state estimation on the IEEE 14-bus system
=============================================================

Only the power injections are observed. From their covariance we recover
the weighted Laplacian (which buses are connected and by how much), the
noise level, and the bus angles.
"""

import numpy as np

from mlbest import dcmodel, estimators, graph

# the grid: 14 buses, 20 branches, susceptance 1/x on each
grid = graph.ieee14()
lp = graph.laplacian_from_graph(grid)
print(f"{grid.bus_count} buses, {grid.edge_count} branches")

# unit-variance independent angles and a 25 dB signal-to-noise ratio
prior = dcmodel.StatePrior.isotropic(lp.M, 1.0)
sigma2 = dcmodel.snr_to_noise_var(lp, prior, 25.0)
ms, theta = dcmodel.simulate(lp, prior, sigma2, 1500, seed=2024)
print(f"noise variance {sigma2:.3f}, {ms.N} snapshots")

for method in estimators.METHODS:
    res = estimators.ml_best(ms, prior.sigma_theta, method)
    err = np.linalg.norm(res.L_hat - lp.L) / np.linalg.norm(lp.L)
    state_mse = np.mean((res.states_hat - theta) ** 2)
    print(
        f"{method:>22}: F-score {graph.fscore(res.L_hat, lp.L):.3f}, "
        f"relative Laplacian error {err:.3f}, sigma2_hat {res.sigma2_hat:.3f}, "
        f"state MSE {state_mse:.4f}"
    )

# the estimator that knows L and sigma2 is the benchmark for the states
oracle = estimators.mmse_states(ms.P, lp.L, prior.sigma_theta, sigma2)
print(f"{'oracle MMSE':>22}: state MSE {np.mean((oracle - theta) ** 2):.4f}")

# edges that were missed or invented
res = estimators.ml_best(ms, prior.sigma_theta)
found, true = graph.edge_set(res.L_hat), graph.edge_set(lp.L)
print("missed:", sorted((a + 1, b + 1) for a, b in true - found))
print("spurious:", sorted((a + 1, b + 1) for a, b in found - true))
