"""
Worst-case error against n
==========================

The posterior standard deviation of Bayesian cubature equals the worst-case
error of its weights, so it can be tracked without evaluating any integrand.
Here it is computed on nested digital nets for three Matern smoothness
levels and on the packaged spherical designs.
"""

import math

import numpy as np

from probcub.cubature import bc_posterior
from probcub.harness.experiments import packaged_designs
from probcub.kernelmeans import KernelMean
from probcub.kernels import MaternTP, SphereSobolev32
from probcub.measures import UniformBox, UniformSphere
from probcub.pointsets import digital_net, load_sphere_design

box = UniformBox.unit(1)
for alpha in (1.5, 2.5, 3.5):
    k = MaternTP(alpha, 0.05, 1.0, dim=1)
    km = KernelMean(k, box)
    ns, wce = [], []
    for m in range(2, 10):
        X = digital_net(1, m).points
        ns.append(X.shape[0])
        wce.append(math.sqrt(bc_posterior(k, km, X, np.zeros(len(X))).variance))
    slope = np.polyfit(np.log(ns[-4:]), np.log(wce[-4:]), 1)[0]
    print(f"alpha={alpha}: WCE {wce[0]:.2e} -> {wce[-1]:.2e}, late slope {slope:.2f}")

# %%
# On the sphere the kernel mean is constant, so the weights only depend on
# the Gram matrix of the design.
k = SphereSobolev32()
km = KernelMean(k, UniformSphere(2))
for path in packaged_designs():
    D = load_sphere_design(path)
    v = bc_posterior(k, km, D.points, np.zeros(D.n)).variance
    print(f"t={D.t:2d} n={D.n:4d} WCE {math.sqrt(v):.3e}")
