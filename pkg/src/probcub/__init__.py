"""probcub: Bayesian cubature with Gaussian-process posteriors over integrals."""

from . import cubature, kernelmeans, kernels, measures, pointsets, thermo
from .cubature import (
    CubaturePosterior,
    approx_bc_posterior,
    bc_posterior,
    bc_posterior_studentt,
    bc_weights,
    credible_interval,
    eb_lengthscale,
    wce_squared,
)
from .exceptions import (
    ArgumentError,
    CapacityError,
    ConditioningError,
    ConfigError,
    DegenerateChainError,
    DesignFileError,
    ProbcubError,
    UnsupportedError,
    UnsupportedPairError,
)
from .kernelmeans import KernelMean, empirical_mean, mean_error_bound
from .kernels import Brownian, ExpQuadratic, MaternTP, SphereSobolev32, WeightedSobolev, gram
from .measures import Empirical, GaussianMixture, PowerPosterior, UniformBox, UniformSphere
from .pointsets import PointSet, digital_net, fill_distance, load_sphere_design, mc_points, mcmc_points

__version__ = "0.1.0"
