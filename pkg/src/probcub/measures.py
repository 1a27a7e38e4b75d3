"""Target distributions: densities, samplers and integration domains.

Every measure is immutable after construction.  Samplers take an explicit
integer seed and return an ``(n, dim)`` array; wrapping the draws into a
deduplicated :class:`~probcub.pointsets.PointSet` is the job of
:func:`probcub.pointsets.mc_points`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .exceptions import ArgumentError, UnsupportedError

__all__ = [
    "Measure",
    "UniformBox",
    "GaussianMixture",
    "UniformSphere",
    "Empirical",
    "PowerPosterior",
    "log_density",
    "sample",
]


def _as_point(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != dim:
        raise ArgumentError(f"expected a point of dimension {dim}, got shape {x.shape}")
    return x


class Measure:
    """Base class.  Subclasses define ``dim`` and override what they support."""

    dim: int

    def log_density(self, x) -> float:
        raise UnsupportedError(f"{type(self).__name__} has no density")

    def sample(self, n: int, seed: int) -> np.ndarray:
        raise UnsupportedError(f"{type(self).__name__} cannot be sampled directly")

    def __str__(self):
        return type(self).__name__


@dataclass(frozen=True)
class UniformBox(Measure):
    """Uniform distribution on the box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ArgumentError("lo and hi must be vectors of equal length")
        if not np.all(lo < hi):
            raise ArgumentError("UniformBox requires lo < hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, dim: int = 1) -> "UniformBox":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def is_unit(self) -> bool:
        return bool(np.all(self.lo == 0.0) and np.all(self.hi == 1.0))

    def log_density(self, x) -> float:
        x = _as_point(x, self.dim)
        if np.any(x < self.lo) or np.any(x > self.hi):
            return -np.inf
        return -float(np.sum(np.log(self.hi - self.lo)))

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def __str__(self):
        return f"UniformBox(dim={self.dim})"


@dataclass(frozen=True)
class GaussianMixture(Measure):
    """Finite mixture of multivariate normals.

    ``means`` has shape ``(k, d)`` and ``covariances`` shape ``(k, d, d)``.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        k, d = mu.shape
        if w.shape != (k,) or cov.shape != (k, d, d):
            raise ArgumentError("inconsistent mixture component shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ArgumentError("mixture weights must be nonnegative and sum to 1")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ArgumentError("mixture covariances must be SPD") from exc
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def standard_normal(cls, dim: int = 1) -> "GaussianMixture":
        return cls(np.ones(1), np.zeros((1, dim)), np.eye(dim)[None])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_density(self, x) -> float:
        x = _as_point(x, self.dim)
        d = self.dim
        terms = []
        for w, m, L in zip(self.weights, self.means, self._chol):
            r = np.linalg.solve(L, x - m)
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
            terms.append(np.log(w) - 0.5 * (r @ r + logdet + d * np.log(2 * np.pi)))
        return float(logsumexp(terms))

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._chol[comp], z)

    def __str__(self):
        return f"GaussianMixture(k={len(self.weights)}, dim={self.dim})"


@dataclass(frozen=True)
class UniformSphere(Measure):
    """Normalised surface measure on the sphere S^d embedded in R^(d+1)."""

    d: int = 2

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ArgumentError("sphere dimension must be an integer >= 1")

    @property
    def dim(self) -> int:
        # ambient dimension
        return self.d + 1

    def log_density(self, x) -> float:
        from scipy.special import gammaln

        x = _as_point(x, self.dim)
        if abs(np.linalg.norm(x) - 1.0) > 1e-9:
            return -np.inf
        # density w.r.t. unnormalised surface area
        k = self.d + 1
        log_area = np.log(2.0) + 0.5 * k * np.log(np.pi) - gammaln(0.5 * k)
        return float(-log_area)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.dim))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def __str__(self):
        return f"UniformSphere(d={self.d})"


@dataclass(frozen=True)
class Empirical(Measure):
    """Atomic measure ``sum_j w_j delta_{x_j}``.  Weights may be negative."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ArgumentError("an empirical measure needs at least one atom")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.shape != (pts.shape[0],):
            raise ArgumentError("one weight per atom required")
        if not np.all(np.isfinite(w)):
            raise ArgumentError("empirical weights must be finite")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def log_density(self, x):
        raise UnsupportedError("atomic measures have no density")

    def sample(self, n, seed):
        w = self.weights
        if np.any(w < 0) or w.sum() <= 0:
            raise UnsupportedError("sampling needs nonnegative weights")
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(w), size=n, p=w / w.sum())
        return self.points[idx].copy()

    def __str__(self):
        return f"Empirical(m={self.points.shape[0]}, dim={self.dim})"


@dataclass(frozen=True)
class PowerPosterior(Measure):
    """Tempered posterior with unnormalised log density ``t*loglik + logprior``."""

    log_likelihood: Callable[[np.ndarray], float]
    log_prior: Callable[[np.ndarray], float]
    t: float
    dim: int = 1

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ArgumentError("inverse temperature must lie in [0, 1]")

    def log_density(self, x) -> float:
        x = _as_point(x, self.dim)
        lp = self.log_prior(x)
        if not np.isfinite(lp):
            return -np.inf
        if self.t == 0.0:
            return float(lp)
        return float(self.t * self.log_likelihood(x) + lp)

    def sample(self, n, seed):
        raise UnsupportedError("power posteriors are sampled with pointsets.mcmc_points")

    def __str__(self):
        return f"PowerPosterior(t={self.t:g})"


def log_density(measure: Measure, x) -> float:
    return measure.log_density(x)


def sample(measure: Measure, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points from ``measure``; a pure function of its arguments."""
    if int(n) != n or n < 1:
        raise ArgumentError("n must be a positive integer")
    return measure.sample(int(n), seed)
