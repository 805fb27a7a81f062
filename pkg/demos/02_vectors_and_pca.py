"""
From a weight matrix to a low-dimensional point cloud
=====================================================

A layer is read as a bag of vectors. The forward view takes each column
(the outgoing weights of one input unit); the backward view takes each row
(the incoming weights of one output unit). PCA then keeps just enough
directions to explain 95% of the variance.
"""

import numpy as np

from weightanomaly.pca import fit_pca, n_components_for, project
from weightanomaly.vectorize import Interpretation, stack_corpus, vectorize_matrix
from weightanomaly.weightstore import WeightTensor

rng = np.random.default_rng(1)
W = WeightTensor("fc2", rng.normal(size=(10, 64)))

fwd = vectorize_matrix(W, Interpretation.FORWARD, "net-a")
bwd = vectorize_matrix(W, Interpretation.BACKWARD, "net-a")
print("forward:", fwd.vectors.shape, " backward:", bwd.vectors.shape)

# column j of W is forward vector j
print("column 5 == vector 5:", np.array_equal(W.data[:, 5], fwd.vectors[5]))

# vectors from several networks are pooled before PCA
nets = [WeightTensor("fc2", rng.normal(size=(10, 64)) @ np.diag(np.linspace(3, 0.1, 64))) for _ in range(5)]
pooled = stack_corpus([vectorize_matrix(w, "backward", f"net-{i}") for i, w in enumerate(nets)])
print("pooled:", pooled.vectors.shape, "from", len(set(pooled.network_ids)), "networks")

pca = fit_pca(pooled, retain=0.95)
print(f"kept {pca.n_components} of {pca.input_dim} directions, "
      f"explaining {pca.retained_fraction_actual:.3f} of the variance")
z = project(pca, pooled)
print("projected:", z.vectors.shape)

# the retention rule on a hand-made spectrum: 9.5 / 10 reaches 0.95 exactly
print("eigenvalues (9, 0.5, 0.5) keep", n_components_for(np.array([9.0, 0.5, 0.5]), 0.95))
