"""Reproducing kernels and Gram-matrix factorisation.

All kernels are vectorised: ``kernel(X, Y)`` takes arrays of shape
``(n, d)`` and ``(m, d)`` and returns the ``(n, m)`` cross-covariance.
``kernel.eval(x, y)`` is the scalar convenience form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import bernoulli, comb

from .exceptions import ArgumentError, ConditioningError, UnsupportedError

__all__ = [
    "Kernel",
    "Brownian",
    "MaternTP",
    "ExpQuadratic",
    "WeightedSobolev",
    "SphereSobolev32",
    "GramFactor",
    "gram",
    "factorize",
    "as_array",
    "MATERN_POLYS",
    "bernoulli_poly",
]

DOMAIN_TOL = 1e-9

# Matern(nu = p + 1/2) = P_p(s) exp(-s) with s = sqrt(2 nu) r / sigma;
# coefficients in increasing powers of s.
MATERN_POLYS = {
    1.5: np.array([1.0, 1.0]),
    2.5: np.array([1.0, 1.0, 1.0 / 3.0]),
    3.5: np.array([1.0, 1.0, 2.0 / 5.0, 1.0 / 15.0]),
}


def as_array(X, dim=None) -> np.ndarray:
    """Coerce a PointSet, a vector or an array into an ``(n, d)`` float array."""
    X = getattr(X, "points", X)
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None] if dim in (None, 1) else X[None, :]
    if dim is not None and X.shape[1] != dim:
        raise ArgumentError(f"expected points of dimension {dim}, got {X.shape[1]}")
    return X


def bernoulli_poly(k: int) -> np.ndarray:
    """Coefficients (increasing powers) of the Bernoulli polynomial B_k."""
    b = bernoulli(k)
    # B_k(x) = sum_j C(k, j) B_j x^(k-j)
    coef = np.zeros(k + 1)
    for j in range(k + 1):
        coef[k - j] = comb(k, j, exact=True) * b[j]
    return coef


class Kernel:
    """Base class for positive-definite kernels."""

    dim: int | None = None

    def __call__(self, X, Y=None) -> np.ndarray:
        X = as_array(X, self.dim)
        Y = X if Y is None else as_array(Y, X.shape[1])
        self.check_domain(X)
        if Y is not X:
            self.check_domain(Y)
        return self._cross(X, Y)

    def _cross(self, X, Y):
        raise NotImplementedError

    def eval(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(self(x[None, :], y[None, :])[0, 0])

    def diag(self, X) -> np.ndarray:
        X = as_array(X, self.dim)
        self.check_domain(X)
        return np.array([self._cross(x[None], x[None])[0, 0] for x in X])

    def check_domain(self, X):
        pass

    def sup_diag(self) -> float:
        """Supremum of ``k(x, x)`` over the kernel's domain."""
        raise UnsupportedError(f"{type(self).__name__} has no finite diagonal bound")

    def with_amplitude(self, lam: float) -> "Kernel":
        raise UnsupportedError(f"{type(self).__name__} has no amplitude parameter")

    @property
    def amplitude(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Brownian(Kernel):
    """Brownian-motion covariance ``min(x, y)`` on [0, 1]."""

    dim = 1

    def check_domain(self, X):
        if np.any(X < -DOMAIN_TOL) or np.any(X > 1 + DOMAIN_TOL):
            raise ArgumentError("Brownian kernel is defined on [0, 1]")

    def _cross(self, X, Y):
        return np.minimum(X[:, 0][:, None], Y[:, 0][None, :])

    def diag(self, X):
        X = as_array(X, 1)
        self.check_domain(X)
        return X[:, 0].copy()

    def sup_diag(self):
        return 1.0

    def __str__(self):
        return "Brownian"


@dataclass(frozen=True)
class MaternTP(Kernel):
    """Tensor product of half-integer Matern kernels.

    ``k(x, y) = lam * prod_i P(s_i) exp(-s_i)``, ``s_i = sqrt(2 alpha) |x_i - y_i| / sigma_i``.

    Parameters
    ----------
    alpha : float
        Smoothness, one of 3/2, 5/2, 7/2.
    sigma : float or array_like
        Lengthscale, shared or one per dimension.
    lam : float
        Amplitude.
    dim : int, optional
        Input dimension; inferred from ``sigma`` when it is a vector.
    """

    alpha: float = 1.5
    sigma: np.ndarray = 1.0
    lam: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        if self.alpha not in MATERN_POLYS:
            raise ArgumentError("MaternTP supports alpha in {3/2, 5/2, 7/2}")
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        dim = self.dim
        if dim is None:
            dim = sigma.shape[0]
        if sigma.shape[0] == 1 and dim > 1:
            sigma = np.full(dim, sigma[0])
        if sigma.shape != (dim,):
            raise ArgumentError("one lengthscale per dimension required")
        if np.any(sigma <= 0) or self.lam <= 0:
            raise ArgumentError("lengthscales and amplitude must be positive")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "dim", int(dim))

    @property
    def rate(self) -> np.ndarray:
        """Per-dimension factor ``sqrt(2 alpha) / sigma``."""
        return math.sqrt(2 * self.alpha) / self.sigma

    @property
    def amplitude(self):
        return self.lam

    def with_amplitude(self, lam):
        return MaternTP(self.alpha, self.sigma, lam, self.dim)

    def with_sigma(self, sigma):
        return MaternTP(self.alpha, sigma, self.lam, self.dim)

    def factor(self, i: int, x, y) -> np.ndarray:
        """One-dimensional factor (unit amplitude) along coordinate ``i``."""
        s = self.rate[i] * np.abs(np.subtract.outer(np.ravel(x), np.ravel(y)))
        return npoly.polyval(s, MATERN_POLYS[self.alpha]) * np.exp(-s)

    def _cross(self, X, Y):
        poly = MATERN_POLYS[self.alpha]
        out = np.full((X.shape[0], Y.shape[0]), float(self.lam))
        ssum = np.zeros_like(out)
        for i in range(self.dim):
            s = self.rate[i] * np.abs(X[:, i][:, None] - Y[:, i][None, :])
            out *= npoly.polyval(s, poly)
            ssum += s
        return out * np.exp(-ssum)

    def diag(self, X):
        return np.full(as_array(X, self.dim).shape[0], float(self.lam))

    def sup_diag(self):
        return float(self.lam)

    def __str__(self):
        return f"MaternTP(alpha={self.alpha:g})"


@dataclass(frozen=True)
class ExpQuadratic(Kernel):
    """Gaussian kernel ``lam * exp(-|x - y|^2 / (2 sigma^2))``."""

    sigma: float = 1.0
    lam: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        if self.sigma <= 0 or self.lam <= 0:
            raise ArgumentError("sigma and lam must be positive")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def amplitude(self):
        return self.lam

    def with_amplitude(self, lam):
        return ExpQuadratic(self.sigma, lam, self.dim)

    def with_sigma(self, sigma):
        return ExpQuadratic(float(np.ravel(sigma)[0]), self.lam, self.dim)

    def _cross(self, X, Y):
        d2 = (
            np.sum(X**2, 1)[:, None]
            + np.sum(Y**2, 1)[None, :]
            - 2.0 * X @ Y.T
        )
        np.maximum(d2, 0.0, out=d2)
        return self.lam * np.exp(-0.5 * d2 / self.sigma**2)

    def diag(self, X):
        return np.full(as_array(X, self.dim).shape[0], self.lam)

    def sup_diag(self):
        return self.lam

    def __str__(self):
        return "ExpQuadratic"


class WeightedSobolev(Kernel):
    """Weighted Sobolev kernel of dominating mixed smoothness on [0, 1]^d.

    ``k(x, y) = sum_u gamma_u prod_{i in u} a(x_i, y_i)`` with the Bernoulli
    polynomial factor ``a(s, t) = sum_{k<=alpha} B_k(s) B_k(t) / (k!)^2
    - (-1)^alpha B_{2 alpha}(|s - t|) / (2 alpha)!``.

    Two weight representations are accepted.  ``gamma`` may be a mapping from
    coordinate subsets (any iterable of 0-based indices, the empty tuple for
    the constant term) to weights; the kernel is then a literal sum over the
    listed subsets.  Alternatively use :meth:`order_dependent`, where
    ``gamma_u`` depends only on ``|u|``; this is evaluated through elementary
    symmetric polynomials in O(d * d_max) per entry.
    """

    MAX_ORDER = 3
    MAX_FULL_DIM = 20

    def __init__(self, alpha: int, d: int, gamma: Mapping | None = None, *, order_weights=None):
        if int(alpha) != alpha or alpha < 1:
            raise ArgumentError("alpha must be a positive integer")
        if int(d) != d or d < 1:
            raise ArgumentError("d must be a positive integer")
        self.alpha = int(alpha)
        self.dim = int(d)
        if (gamma is None) == (order_weights is None):
            raise ArgumentError("give exactly one of gamma or order_weights")
        if gamma is not None:
            subsets = {}
            for u, g in gamma.items():
                key = tuple(sorted(set(int(i) for i in u)))
                if key and (key[0] < 0 or key[-1] >= d):
                    raise ArgumentError(f"subset {key} out of range for d={d}")
                if g < 0:
                    raise ArgumentError("weights must be nonnegative")
                subsets[key] = subsets.get(key, 0.0) + float(g)
            dmax = max((len(u) for u in subsets), default=0)
            self.subsets = subsets
            self.order_weights = None
        else:
            ow = np.asarray(order_weights, dtype=float)
            if ow.ndim != 1 or np.any(ow < 0):
                raise ArgumentError("order_weights must be a nonnegative vector")
            dmax = ow.shape[0] - 1
            self.subsets = None
            self.order_weights = ow
        if dmax > self.MAX_ORDER and self.dim > self.MAX_FULL_DIM:
            raise UnsupportedError(
                f"interaction order {dmax} refused for d={d} > {self.MAX_FULL_DIM}"
            )
        self.d_max = dmax
        self._b = [bernoulli_poly(k) for k in range(self.alpha + 1)]
        self._b2a = bernoulli_poly(2 * self.alpha)
        self._fact = [math.factorial(k) ** 2 for k in range(self.alpha + 1)]
        self._sign = (-1) ** self.alpha / math.factorial(2 * self.alpha)

    @classmethod
    def order_dependent(cls, alpha, d, d_max=2, weights=None):
        """All subsets with ``|u| <= d_max`` weighted by ``weights[|u|]`` (default 1)."""
        if weights is None:
            weights = np.ones(d_max + 1)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (d_max + 1,):
            raise ArgumentError("need one weight per interaction order 0..d_max")
        return cls(alpha, d, order_weights=weights[: min(d_max, d) + 1])

    @property
    def gamma_empty(self) -> float:
        if self.subsets is not None:
            return self.subsets.get((), 0.0)
        return float(self.order_weights[0])

    def expand_weights(self) -> dict:
        """The explicit subset-to-weight map (exponential in d; small d only)."""
        if self.subsets is not None:
            return dict(self.subsets)
        if self.dim > self.MAX_FULL_DIM:
            raise UnsupportedError("explicit subset expansion refused for large d")
        out = {}
        for k, g in enumerate(self.order_weights):
            for u in itertools.combinations(range(self.dim), k):
                out[u] = g
        return out

    def check_domain(self, X):
        if np.any(X < -DOMAIN_TOL) or np.any(X > 1 + DOMAIN_TOL):
            raise ArgumentError("WeightedSobolev kernel is defined on [0, 1]^d")

    def factor(self, x, y) -> np.ndarray:
        """One-dimensional factor ``a(x, y)`` on the outer grid of ``x`` and ``y``."""
        x = np.ravel(x)
        y = np.ravel(y)
        out = -self._sign * npoly.polyval(np.abs(np.subtract.outer(x, y)), self._b2a)
        for k in range(1, self.alpha + 1):
            out += np.outer(npoly.polyval(x, self._b[k]), npoly.polyval(y, self._b[k])) / self._fact[k]
        return out

    def _factor_into(self, x, y, out):
        """Write ``a(x_i, y_j)`` into ``out`` without temporaries of full size."""
        np.subtract.outer(x, y, out=out)
        np.abs(out, out=out)
        c = self._b2a
        r = out.copy()
        out.fill(c[-1])
        for coef in c[-2::-1]:  # Horner
            out *= r
            out += coef
        out *= -self._sign
        U = np.column_stack([npoly.polyval(x, self._b[k]) / self._fact[k] for k in range(1, self.alpha + 1)])
        V = np.column_stack([npoly.polyval(y, self._b[k]) for k in range(1, self.alpha + 1)])
        out += U @ V.T
        return out

    def _cross_block(self, X, Y):
        if self.subsets is not None:
            factors = [self.factor(X[:, i], Y[:, i]) for i in range(self.dim)]
            out = np.zeros((X.shape[0], Y.shape[0]))
            for u, g in self.subsets.items():
                term = np.full_like(out, g)
                for i in u:
                    term *= factors[i]
                out += term
            return out
        # power sums p_k = sum_i a_i^k, then Newton's identities for e_0..e_dmax
        dm = self.d_max
        shape = (X.shape[0], Y.shape[0])
        p = [np.zeros(shape) for _ in range(dm)]
        a = np.empty(shape)
        ak = np.empty(shape)
        for i in range(self.dim):
            self._factor_into(X[:, i], Y[:, i], a)
            if dm >= 1:
                p[0] += a
            if dm >= 2:
                np.multiply(a, a, out=ak)
                p[1] += ak
            for k in range(2, dm):
                ak *= a
                p[k] += ak
        e = [np.ones(shape)]
        for k in range(1, dm + 1):
            acc = np.zeros(shape)
            for j in range(1, k + 1):
                acc += (-1) ** (j - 1) * e[k - j] * p[j - 1]
            e.append(acc / k)
        return sum(g * ek for g, ek in zip(self.order_weights, e))

    def _cross(self, X, Y, block=32):
        # small row blocks keep the working arrays in cache
        n = X.shape[0]
        out = np.empty((n, Y.shape[0]))
        if Y is X:
            for i in range(0, n, block):
                out[i:i + block, i:] = self._cross_block(X[i:i + block], X[i:])
            iu = np.triu_indices(n, 1)
            out[(iu[1], iu[0])] = out[iu]
            return out
        for i in range(0, n, block):
            out[i:i + block] = self._cross_block(X[i:i + block], Y)
        return out

    def diag(self, X):
        X = as_array(X, self.dim)
        self.check_domain(X)
        return np.array([self._cross_block(x[None], x[None])[0, 0] for x in X])

    def sup_diag(self, grid_size: int = 10_000) -> float:
        # weights are nonnegative and a(t, t) > 0, so the sup sits on the diagonal x = t*1
        t = np.linspace(0.0, 1.0, grid_size)
        a = np.diag(self.factor(t, t)) if grid_size <= 2000 else self._diag_factor(t)
        if np.ptp(a) == 0.0:
            tstar = 0.0
        else:
            tstar = t[np.argmax(a)]
        x = np.full((1, self.dim), tstar)
        return float(self._cross_block(x, x)[0, 0])

    def _diag_factor(self, t):
        out = -self._sign * npoly.polyval(np.zeros_like(t), self._b2a)
        for k in range(1, self.alpha + 1):
            out = out + npoly.polyval(t, self._b[k]) ** 2 / self._fact[k]
        return out

    def __repr__(self):
        return f"WeightedSobolev(alpha={self.alpha}, d={self.dim}, d_max={self.d_max})"

    __str__ = __repr__


@dataclass(frozen=True)
class SphereSobolev32(Kernel):
    """``k(x, y) = 8/3 - |x - y|`` on the unit sphere S^2."""

    dim = 3

    def check_domain(self, X):
        if np.any(np.abs(np.linalg.norm(X, axis=1) - 1.0) > DOMAIN_TOL):
            raise ArgumentError("SphereSobolev32 is defined on the unit sphere S^2")

    def _cross(self, X, Y):
        d2 = np.sum(X**2, 1)[:, None] + np.sum(Y**2, 1)[None, :] - 2.0 * X @ Y.T
        return 8.0 / 3.0 - np.sqrt(np.maximum(d2, 0.0))

    def diag(self, X):
        return np.full(as_array(X, 3).shape[0], 8.0 / 3.0)

    def sup_diag(self):
        return 8.0 / 3.0

    def __str__(self):
        return "SphereSobolev32"


@dataclass
class GramFactor:
    """Cholesky factorisation of a Gram matrix plus the jitter that was needed.

    ``matrix`` is the unjittered Gram matrix; ``jitter`` the value added to
    its diagonal before factorisation (0.0 when none was required).
    """

    matrix: np.ndarray
    jitter: float
    _cho: tuple = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b) -> np.ndarray:
        return cho_solve(self._cho, b, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._cho[0]))))

    def quad(self, a, b=None) -> float:
        """``a^T K^{-1} b`` (``b`` defaults to ``a``)."""
        return float(np.dot(a, self.solve(a if b is None else b)))


def _condition_estimate(K):
    try:
        ev = np.linalg.eigvalsh(K)
    except LinAlgError:
        return float("inf")
    if ev[0] <= 0:
        return float("inf")
    return float(ev[-1] / ev[0])


def factorize(K: np.ndarray, *, max_rel_jitter=1e-6, start_rel_jitter=1e-12) -> GramFactor:
    """Cholesky-factorise ``K`` with bounded diagonal jitter escalation.

    The first attempt adds nothing.  On failure ``start_rel_jitter * tr(K)/n``
    is added and multiplied by ten per retry up to ``max_rel_jitter * tr(K)/n``.

    Raises
    ------
    ConditioningError
        If the matrix is not factorisable at the maximum jitter.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n == 0:
        return GramFactor(K, 0.0, (np.zeros((0, 0)), True))
    scale = float(np.trace(K)) / n
    if not np.isfinite(scale) or scale <= 0:
        raise ConditioningError("Gram matrix has nonpositive trace", _condition_estimate(K))
    rel = 0.0
    while True:
        Kj = K if rel == 0.0 else K + (rel * scale) * np.eye(n)
        try:
            cho = cho_factor(Kj, lower=True, check_finite=False)
            if np.all(np.diag(cho[0]) > 0) and np.all(np.isfinite(cho[0])):
                return GramFactor(K, rel * scale, cho)
        except LinAlgError:
            pass
        if rel == 0.0:
            rel = start_rel_jitter
        elif rel < max_rel_jitter * (1 - 1e-9):
            rel = min(rel * 10.0, max_rel_jitter)
        else:
            raise ConditioningError("Cholesky failed at maximum jitter", _condition_estimate(K))


def gram(kernel: Kernel, X) -> GramFactor:
    """Gram matrix of ``kernel`` on ``X`` with its jittered Cholesky factor."""
    return factorize(kernel(X))
