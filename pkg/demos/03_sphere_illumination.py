"""
Global illumination on the sphere
=================================

Outgoing radiance at a surface point is an integral over incoming directions.
The integrand below combines a synthetic environment map with a
cosine-weighted reflectance and vanishes on the lower hemisphere.
Bayesian cubature on a spherical design is compared with plain Monte Carlo.
"""

import numpy as np

from probcub.cubature import bc_posterior_studentt
from probcub.harness import testfns
from probcub.harness.experiments import packaged_designs
from probcub.kernelmeans import KernelMean
from probcub.kernels import SphereSobolev32
from probcub.measures import UniformSphere
from probcub.pointsets import load_sphere_design, mc_points

f = testfns.illumination_integrand(testfns.make_radiance(3))
truth = testfns.sphere_truth(f)
print("reference RGB", np.round(truth, 6))

k = SphereSobolev32()
km = KernelMean(k, UniformSphere(2))
for path in packaged_designs()[2:]:
    D = load_sphere_design(path)
    F = f(D.points)
    mc = f(mc_points(UniformSphere(2), D.n, seed=D.n).points).mean(0)
    for c, name in enumerate("RGB"):
        post = bc_posterior_studentt(k, km, D.points, F[:, c])
        lo, hi = post.interval(0.05)
        print(f"n={D.n:4d} {name}: BQMC err {abs(post.mean - truth[c]):.1e} "
              f"(interval covers: {lo <= truth[c] <= hi})  MC err {abs(mc[c] - truth[c]):.1e}")
