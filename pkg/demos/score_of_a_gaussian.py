"""
Estimating the score of a Gaussian
==================================

The score of a density is the gradient of its log. For a zero-mean Gaussian
with covariance ``S`` it is ``-inv(S) @ x``, so we can see how close the
kernel estimate gets.
"""

import numpy as np

from adascore.score import stein_score_table

rng = np.random.default_rng(0)
cov = np.array([[1.0, 0.6], [0.6, 1.0]])
x = rng.multivariate_normal(np.zeros(2), cov, size=2000)

table = stein_score_table(x)
exact = -x @ np.linalg.inv(cov)

# relative error of the first derivatives, column by column
err = np.mean((table.first - exact) ** 2, axis=0) / np.mean(exact**2, axis=0)
print("relative MSE per column:", np.round(err, 3))

# The second derivatives of the log density are constant for a Gaussian.
# Their sample average should sit near -inv(cov).
print("mean Hessian estimate:\n", np.round(table.cross.mean(axis=0), 3))
print("exact Hessian:\n", np.round(-np.linalg.inv(cov), 3))

# A non-zero off-diagonal entry is what tells two variables apart from
# independent ones; here it is clearly away from zero.
