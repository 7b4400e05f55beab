"""Matrix-normal basics: density evaluation, the Kronecker identity, sampling.

A 2 x 3 observation gets one covariance matrix for its rows and one for
its columns; together they are equivalent to a single 6 x 6 Kronecker
covariance on the vectorized matrix.  This script checks that equivalence
numerically and shows the sampler's moments.
"""

import numpy as np
from scipy.stats import multivariate_normal

from matrixhmm import MatNormParams, log_density, sample

rng = np.random.default_rng(0)

M = np.array([[0.0, 1.0, 2.0],
              [1.0, 2.0, 3.0]])
Sigma = np.array([[1.0, 0.3],
                  [0.3, 0.5]])          # couples the two rows
Psi = np.array([[1.2, -0.2, 0.0],
                [-0.2, 0.9, 0.1],
                [0.0, 0.1, 1.0]])       # couples the three columns
params = MatNormParams(M, Sigma, Psi)

X = M + rng.normal(scale=0.5, size=(2, 3))
print("log-density at a nearby point:", log_density(X, params))

# the same number from the vectorized 6-dimensional normal
vec = multivariate_normal(mean=M.flatten(order="F"), cov=np.kron(Psi, Sigma))
print("vectorized-normal reference:  ", vec.logpdf(X.flatten(order="F")))

# scale can move freely between the two covariances without changing the law
for a in (0.1, 2.0, 25.0):
    rescaled = MatNormParams(M, a * Sigma, Psi / a)
    print(f"rescaled by a={a:<4}: log-density {log_density(X, rescaled):.12f}")

# sampling: empirical mean and vec-covariance approach M and kron(Psi, Sigma)
draws = sample(params, np.random.default_rng(1), size=200_000)
emp_mean = draws.mean(axis=0)
vecs = draws.transpose(0, 2, 1).reshape(len(draws), -1)
emp_cov = np.cov(vecs, rowvar=False)
print("max |empirical mean - M|:", np.max(np.abs(emp_mean - M)))
print("max |empirical cov - kron(Psi, Sigma)|:",
      np.max(np.abs(emp_cov - np.kron(Psi, Sigma))))
