"""
Bayesian cubature in one dimension
==================================

Integrate f(x) = exp(sin(5x)^2 - x^2) over [-5, 5] under the uniform
measure, first with a fixed Matern kernel and then with the amplitude
marginalised (Student-t) and the lengthscale chosen by empirical Bayes.
"""

import numpy as np

from probcub.cubature import bc_posterior, bc_posterior_studentt, default_sigma_grid, eb_lengthscale
from probcub.harness.testfns import test_function, test_function_truth
from probcub.kernelmeans import KernelMean
from probcub.kernels import Brownian, MaternTP
from probcub.measures import UniformBox
from probcub.pointsets import mc_points

box = UniformBox([-5.0], [5.0])
f = test_function("f1")
truth = test_function_truth("f1", 1)
print(f"reference value {truth:.10f}")

# %%
# Fixed kernel: the posterior variance does not depend on the f values.
k = MaternTP(3.5, 0.5, 1.0, dim=1)
km = KernelMean(k, box)
X = mc_points(box, 100, seed=0).points
post = bc_posterior(k, km, X, f(X))
print(f"fixed kernel   mean {post.mean:.6f}  sd {np.sqrt(post.variance):.2e}")

# %%
# Empirical Bayes lengthscale plus the Student-t marginal over the amplitude.
sigma, _ = eb_lengthscale(MaternTP(3.5, 1.0, 1.0, dim=1), X, f(X), default_sigma_grid(1e-2, 1e2, 8))
k0 = MaternTP(3.5, float(np.squeeze(sigma)), 1.0, dim=1)
t = bc_posterior_studentt(k0, KernelMean(k0, box), X, f(X))
lo, hi = t.interval(0.05)
print(f"EB sigma {float(np.squeeze(sigma)):.3f}  t mean {t.mean:.6f}  95% [{lo:.6f}, {hi:.6f}]  dof {t.dof}")

# %%
# The Brownian kernel on [0, 1] reproduces the trapezium rule with a
# zero left end.
x = np.linspace(0.1, 1.0, 10)
w = bc_posterior(Brownian(), KernelMean(Brownian(), UniformBox.unit(1)), x[:, None], np.ones(10)).weights
print("Brownian weights", np.round(w, 4))
