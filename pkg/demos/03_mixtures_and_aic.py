"""
Gaussian mixtures and choosing their size
=========================================

A mixture is fitted by EM; the number of components is picked by AIC over
a list of candidates. Scores use the mixture density divided by the number
of components.
"""

import numpy as np

from weightanomaly.gmm import fit_gmm, log_density, sweep_components, total_log_likelihood

rng = np.random.default_rng(2)

# three blobs on a circle of radius 10
angles = 2 * np.pi * np.arange(3) / 3
centers = 10 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
X = centers[rng.integers(3, size=500)] + rng.normal(size=(500, 2))

sweep = sweep_components(X, [1, 2, 3, 5, 8], seed=0)
for n, aic in sweep.table():
    print(f"{n:2d} components  AIC {aic:10.2f}")
print("selected:", sweep.selected)

model = sweep.best_model
print("weights:", np.round(model.weights, 3))
print("means:\n", np.round(model.means, 2))
print("EM iterations:", model.fit_log.iterations, "converged:", model.fit_log.converged)

# a point near a blob scores far higher than one between blobs
print("log density at a center: %.2f" % log_density(model, centers[0]))
print("log density at origin:   %.2f" % log_density(model, np.zeros(2)))

# Starting EM with every component at the global variance can stall on
# stretched data: here x spans +-10 and y only +-1, so the first E-step
# splits points by y and both components straddle the two clusters.
X2 = np.array([[10.0, 0.0], [-10.0, 0.0]])[rng.integers(2, size=500)] + rng.normal(size=(500, 2))
for init in ("global", "kmeans"):
    lls = [total_log_likelihood(fit_gmm(X2, 2, seed=s, init=init), X2) for s in range(10)]
    print(f"init={init:7s} worst log-likelihood over 10 seeds: {min(lls):9.1f}")
