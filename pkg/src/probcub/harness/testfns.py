"""Integrands and synthetic models used by the experiments."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate
from scipy.special import expit, gammaln, log_expit, ndtri

from ..exceptions import UnsupportedError

C_VALUES = {"f1": 5.0, "f2": 20.0}
BOX = (-5.0, 5.0)


def test_function(name: str):
    """``f(x) = exp(sin(C x_1)^2 - |x|^2)`` with ``C = 5`` (f1) or ``C = 20`` (f2)."""
    C = C_VALUES[name]

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.exp(np.sin(C * X[:, 0]) ** 2 - np.sum(X**2, axis=1))

    f.__name__ = name
    return f


def test_function_truth(name: str, d: int) -> float:
    """Mean of ``f`` under the uniform law on [-5, 5]^d, by adaptive quadrature.

    The integrand factorises, so one oscillatory 1-D integral and a closed
    form for the Gaussian factors suffice.
    """
    if d > 3:
        raise UnsupportedError("truth oracle is limited to d <= 3")
    C = C_VALUES[name]
    lo, hi = BOX
    # split at the zeros of sin(Cx) so every panel is smooth and short
    cuts = np.arange(math.ceil(lo * C / math.pi), math.floor(hi * C / math.pi) + 1) * math.pi / C
    edges = np.unique(np.r_[lo, cuts, hi])
    first = sum(
        integrate.quad(lambda x: math.exp(math.sin(C * x) ** 2 - x * x), a, b, epsabs=1e-15, epsrel=1e-13)[0]
        for a, b in zip(edges[:-1], edges[1:])
    )
    gauss = math.sqrt(math.pi) * math.erf(hi)
    return first * gauss ** (d - 1) / (hi - lo) ** d


# --- sphere ---------------------------------------------------------------

NORMAL = np.array([0.0, 0.0, 1.0])


def make_radiance(seed: int = 3, bumps: int = 6):
    """Smooth positive three-channel radiance: constant plus von Mises-Fisher bumps."""
    rng = np.random.default_rng(seed)
    mus = rng.standard_normal((bumps, 3))
    mus /= np.linalg.norm(mus, axis=1, keepdims=True)
    kappas = rng.uniform(2.0, 10.0, bumps)
    amps = rng.uniform(0.2, 1.5, (3, bumps))
    base = rng.uniform(0.1, 0.4, 3)

    def radiance(W):
        W = np.atleast_2d(W)
        shapes = np.exp(kappas[None, :] * (W @ mus.T - 1.0))
        return base[None, :] + shapes @ amps.T

    return radiance


def brdf(wi, wo):
    return np.exp(wi @ wo - 1.0) / (2.0 * math.pi)


def illumination_integrand(radiance, wo=NORMAL):
    """``L_i(w) rho(w, wo) [w . wo]_+``, one column per colour channel."""
    wo = np.asarray(wo, dtype=float)

    def f(W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        cos = W @ wo
        return radiance(W) * (brdf(W, wo) * np.maximum(cos, 0.0))[:, None]

    return f


def sphere_truth(f, n_z: int = 256, n_phi: int = 512) -> np.ndarray:
    """Mean of ``f`` over the unit sphere, for integrands vanishing below the equator.

    Gauss-Legendre in ``z`` on [0, 1] and the periodic trapezium rule in
    the azimuth; the normalised surface measure is ``dz dphi / (4 pi)``.
    """
    z, wz = np.polynomial.legendre.leggauss(n_z)
    z = 0.5 * (z + 1.0)
    wz = 0.5 * wz
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    Z, P = np.meshgrid(z, phi, indexing="ij")
    R = np.sqrt(1.0 - Z**2)
    W = np.stack([R * np.cos(P), R * np.sin(P), Z], -1).reshape(-1, 3)
    vals = f(W).reshape(n_z, n_phi, -1)
    return np.einsum("i,ijk->k", wz, vals) * (2 * math.pi / n_phi) / (4 * math.pi)


# --- random effects -------------------------------------------------------


class RandomEffectsModel:
    """Poisson regression with a penalised truncated-linear spline.

    ``log lambda_j = b0 + b1 z1_j + b2 z2_j + sum_k u_k [z2_j - kappa_k]_+``
    with ``u_k ~ N(0, 1/tau)`` and ``d`` equally spaced knots.  The
    likelihood integral over ``u`` is mapped to the unit cube by
    ``u = Phi^{-1}(x) / sqrt(tau)``.
    """

    def __init__(self, d=50, n_obs=50, tau=10.0, beta=(0.0, 1.0, 1.0), seed=1):
        rng = np.random.default_rng(seed)
        self.d, self.tau = d, tau
        self.beta = np.asarray(beta, dtype=float)
        self.z1 = rng.integers(0, 2, n_obs).astype(float)
        self.z2 = rng.random(n_obs)
        self.knots = np.linspace(self.z2.min(), self.z2.max(), d)
        self.Phi = np.maximum(self.z2[:, None] - self.knots[None, :], 0.0)
        u = rng.normal(0.0, tau**-0.5, d)
        self.eta0 = self.beta[0] + self.beta[1] * self.z1 + self.beta[2] * self.z2
        self.y = rng.poisson(np.exp(self.eta0 + self.Phi @ u))
        self._lgy = gammaln(self.y + 1.0)
        # reference log-likelihood so integrand values are O(1)
        self.log_scale = float(self.loglik(np.full((1, d), 0.5))[0])

    def loglik(self, X, block=8192):
        X = np.atleast_2d(X)
        out = np.empty(X.shape[0])
        for i in range(0, X.shape[0], block):
            U = ndtri(np.clip(X[i:i + block], 1e-16, 1 - 1e-16)) / math.sqrt(self.tau)
            eta = self.eta0[None, :] + U @ self.Phi.T
            out[i:i + block] = (self.y * eta - np.exp(eta) - self._lgy).sum(1)
        return out

    def integrand(self, X):
        """``p(y | beta, u(x)) / exp(log_scale)``."""
        return np.exp(self.loglik(X) - self.log_scale)


# --- logistic-regression model selection ----------------------------------


class LogisticData:
    """Synthetic variable-selection data: only the first covariate is active."""

    def __init__(self, n=200, covariates=5, seed=1, beta1=1.0):
        rng = np.random.default_rng(seed)
        self.X = rng.standard_normal((n, covariates))
        beta = np.zeros(covariates)
        beta[0] = beta1
        self.y = (rng.random(n) < expit(self.X @ beta)).astype(float)
        self.covariates = covariates

    def models(self, max_active=2):
        """Active-variable subsets with at most ``max_active`` members, smallest first."""
        out = []
        for k in range(max_active + 1):
            out.extend(itertools.combinations(range(self.covariates), k))
        return out

    def log_likelihood(self, active):
        Xa = self.X[:, list(active)]
        y = self.y

        def ll(beta):
            eta = Xa @ np.atleast_1d(beta)
            return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))

        return ll

    def model(self, active, prior_precision=0.01):
        k = len(active)
        ll = self.log_likelihood(active)
        c = 0.5 * k * math.log(prior_precision / (2 * math.pi))

        def lp(beta):
            return c - 0.5 * prior_precision * float(np.sum(np.square(beta)))

        return {"log_likelihood": ll, "log_prior": lp, "dim": k}

    def log_evidence_quadrature(self, active, prior_precision=0.01, nodes=120):
        """Brute-force log-evidence for models with at most two parameters.

        Tensor Gauss-Hermite rule on the prior, re-centred and scaled at the
        posterior mode for accuracy.
        """
        from scipy.optimize import minimize

        k = len(active)
        if k == 0:
            return self.log_likelihood(active)(np.zeros(0))
        if k > 2:
            raise UnsupportedError("quadrature oracle limited to two parameters")
        m = self.model(active, prior_precision)
        neg = lambda b: -(m["log_likelihood"](b) + m["log_prior"](b))  # noqa: E731
        res = minimize(neg, np.zeros(k), method="BFGS")
        H = np.linalg.inv(res.hess_inv)
        L = np.linalg.cholesky(np.linalg.inv(H))
        g, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / math.sqrt(2 * math.pi)
        grids = np.meshgrid(*([g] * k), indexing="ij")
        Z = np.stack([gr.ravel() for gr in grids], -1)
        W = np.prod(np.meshgrid(*([w] * k), indexing="ij"), axis=0).ravel()
        B = res.x + Z @ L.T
        # importance weights against the Gaussian proposal N(mode, L L^T)
        logq = -0.5 * np.sum(Z**2, 1) - 0.5 * k * math.log(2 * math.pi) - np.sum(np.log(np.diag(L)))
        logt = np.array([m["log_likelihood"](b) + m["log_prior"](b) for b in B])
        a = logt - logq + np.log(W)
        mx = a.max()
        return float(mx + math.log(np.exp(a - mx).sum()))


def conjugate_gaussian_model(n_obs=10, theta=0.5, seed=0):
    """``theta ~ N(0, 1)``, ``y_i ~ N(theta, 1)``; returns (model, exact log-evidence, y)."""
    from scipy.stats import multivariate_normal

    rng = np.random.default_rng(seed)
    y = rng.normal(theta, 1.0, n_obs)
    k = n_obs

    def ll(th):
        return float(-0.5 * k * math.log(2 * math.pi) - 0.5 * np.sum((y - th[0]) ** 2))

    def lp(th):
        return float(-0.5 * math.log(2 * math.pi) - 0.5 * th[0] ** 2)

    truth = float(multivariate_normal(np.zeros(k), np.eye(k) + np.ones((k, k))).logpdf(y))
    return {"log_likelihood": ll, "log_prior": lp, "dim": 1}, truth, y
