"""Kernel means ``mu(x) = int k(x', x) dpi(x')`` and initial errors ``int int k``.

Closed forms are provided for a whitelist of (kernel, measure) pairs; any
kernel can be paired with an atomic (empirical) measure.  Empirical kernel
means built from samples of an intractable target carry the bookkeeping
needed to bound their own error.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import erf

from . import kernels as K
from .exceptions import ArgumentError, UnsupportedPairError
from .measures import Empirical, GaussianMixture, Measure, UniformBox, UniformSphere

__all__ = [
    "KernelMean",
    "empirical_mean",
    "mean_error_bound",
    "TABLE_PAIRS",
    "matern_mean_1d",
    "matern_initial_error_1d",
]

# Recognised kernel/measure families.  Only "implemented" rows have code.
TABLE_PAIRS = {
    ("MaternTP", "UniformBox"): "implemented",
    ("ExpQuadratic", "UniformBox"): "implemented",
    ("ExpQuadratic", "GaussianMixture"): "implemented",
    ("WeightedSobolev", "UniformBox"): "implemented",
    ("SphereSobolev32", "UniformSphere"): "implemented",
    ("Brownian", "UniformBox"): "implemented",
    ("WendlandTP", "UniformBox"): "recognised, not implemented",
    ("Spline", "UniformBox"): "recognised, not implemented",
    ("PolynomialTP", "KnownMoments"): "recognised, not implemented",
    ("GradientBased", "KnownScore"): "recognised, not implemented",
    ("Trigonometric", "UniformBox"): "recognised, not implemented",
    ("Trigonometric", "GaussianMixture"): "recognised, not implemented",
}

_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 40


def _derivative_sum(p):
    """Coefficients of ``P + P' + P'' + ...`` so that ``d/du[-Q e^-u] = P e^-u``."""
    q = np.zeros(len(p))
    d = np.asarray(p, dtype=float)
    while d.size and np.any(d):
        q[: d.size] += d
        d = npoly.polyder(d) if d.size > 1 else np.zeros(0)
    return q


def _exp_series_integral(p, shift):
    """Taylor coefficients of ``int_0^U u^shift P(u) e^-u du`` in powers of U."""
    e = np.array([(-1.0) ** k / math.factorial(k) for k in range(_SERIES_TERMS)])
    c = npoly.polymul(np.r_[np.zeros(shift), p], e)[:_SERIES_TERMS]
    return npoly.polyint(c)


class _Antiderivative:
    """``int_0^U u^shift P(u) exp(-u) du`` for U >= 0, accurate for all U."""

    def __init__(self, p, shift=0):
        poly = np.r_[np.zeros(shift), p]
        self.q = _derivative_sum(poly)
        self.series = _exp_series_integral(p, shift)

    def __call__(self, U):
        U = np.asarray(U, dtype=float)
        out = self.q[0] - npoly.polyval(U, self.q) * np.exp(-U)
        small = U < _SERIES_CUTOFF
        if np.any(small):
            out = np.where(small, npoly.polyval(np.where(small, U, 0.0), self.series), out)
        return out


_G = {a: _Antiderivative(p) for a, p in K.MATERN_POLYS.items()}
_H = {a: _Antiderivative(p, shift=1) for a, p in K.MATERN_POLYS.items()}


def matern_mean_1d(alpha, rate, a, b, x):
    """``(b-a)^-1 int_a^b P(rate|t-x|) exp(-rate|t-x|) dt`` for arbitrary real x."""
    G = _G[alpha]
    u_hi = rate * (b - x)
    u_lo = rate * (a - x)
    F = lambda u: np.sign(u) * G(np.abs(u))  # noqa: E731
    return (F(u_hi) - F(u_lo)) / (rate * (b - a))


def matern_initial_error_1d(alpha, rate, L):
    """``L^-2 int int_[0,L]^2 P(rate|s-t|) exp(-rate|s-t|) ds dt``."""
    U = rate * L
    # 2 int_0^L (L - r) k(r) dr, substituting u = rate * r
    return 2.0 * (U * _G[alpha](U) - _H[alpha](U)) / (rate * L) ** 2


def _eq_mean_1d(sigma, a, b, x):
    s = math.sqrt(2.0) * sigma
    return sigma * math.sqrt(math.pi / 2) * (erf((b - x) / s) - erf((a - x) / s)) / (b - a)


def _eq_initial_error_1d(sigma, L):
    t1 = L * sigma * math.sqrt(math.pi / 2) * math.erf(L / (math.sqrt(2) * sigma))
    t2 = -(sigma**2) * math.expm1(-(L**2) / (2 * sigma**2))
    return 2.0 * (t1 - t2) / L**2


def _gauss_conv(sigma, d, means, covs, x):
    """``(2 pi sigma^2)^{d/2} N(x; m, S + sigma^2 I)`` for each row of x, each component."""
    out = np.empty((x.shape[0], means.shape[0]))
    for j, (m, S) in enumerate(zip(means, covs)):
        A = S + sigma**2 * np.eye(d)
        L = np.linalg.cholesky(A)
        r = np.linalg.solve(L, (x - m).T)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, j] = np.exp(-0.5 * np.sum(r**2, 0) - 0.5 * logdet + d * math.log(sigma))
    return out


class KernelMean:
    """Kernel mean of ``kernel`` under ``measure``.

    Construct with a supported (kernel, measure) pair for the analytic form,
    or through :func:`empirical_mean` for the sample-based form.

    Raises
    ------
    UnsupportedPairError
        If no closed form is implemented for the pair.
    """

    def __init__(self, kernel: K.Kernel, measure: Measure, *, form: str = "analytic"):
        self.kernel = kernel
        self.measure = measure
        self.form = form
        self._ie = None
        self._impl = self._select()

    # pair dispatch -----------------------------------------------------
    def _select(self):
        k, pi = self.kernel, self.measure
        kname, mname = type(k).__name__, type(pi).__name__
        if isinstance(pi, Empirical):
            if k.dim is not None and k.dim != pi.dim:
                raise UnsupportedPairError(k, pi, "dimension mismatch")
            return "empirical"
        if (kname, mname) not in TABLE_PAIRS:
            raise UnsupportedPairError(k, pi)
        if k.dim is not None and k.dim != pi.dim:
            raise UnsupportedPairError(k, pi, "dimension mismatch")
        if isinstance(k, K.WeightedSobolev) or isinstance(k, K.Brownian):
            if not pi.is_unit():
                raise UnsupportedPairError(k, pi, "requires the unit cube")
        if isinstance(k, K.SphereSobolev32) and pi.d != 2:
            raise UnsupportedPairError(k, pi, "closed form only on S^2")
        return kname

    @property
    def samples(self) -> np.ndarray | None:
        return self.measure.points if isinstance(self.measure, Empirical) else None

    @property
    def weights(self) -> np.ndarray | None:
        return self.measure.weights if isinstance(self.measure, Empirical) else None

    @property
    def m(self) -> int | None:
        s = self.samples
        return None if s is None else s.shape[0]

    # evaluation ----------------------------------------------------------
    def mean_at(self, X) -> np.ndarray:
        """Kernel mean evaluated at each row of ``X``; returns shape ``(n,)``."""
        X = K.as_array(X, self.measure.dim)
        self.kernel.check_domain(X)
        impl = self._impl
        k, pi = self.kernel, self.measure
        if impl == "empirical":
            out = np.zeros(X.shape[0])
            pts, w = pi.points, pi.weights
            block = max(1, 4_000_000 // max(1, X.shape[0]))
            for i in range(0, pts.shape[0], block):
                out += k._cross(X, pts[i:i + block]) @ w[i:i + block]
            return out
        if impl == "MaternTP":
            out = np.full(X.shape[0], k.lam)
            for i in range(k.dim):
                out *= matern_mean_1d(k.alpha, k.rate[i], pi.lo[i], pi.hi[i], X[:, i])
            return out
        if impl == "ExpQuadratic" and isinstance(pi, UniformBox):
            out = np.full(X.shape[0], k.lam)
            for i in range(pi.dim):
                out *= _eq_mean_1d(k.sigma, pi.lo[i], pi.hi[i], X[:, i])
            return out
        if impl == "ExpQuadratic" and isinstance(pi, GaussianMixture):
            return k.lam * _gauss_conv(k.sigma, pi.dim, pi.means, pi.covariances, X) @ pi.weights
        if impl == "WeightedSobolev":
            return np.full(X.shape[0], k.gamma_empty)
        if impl == "Brownian":
            x = X[:, 0]
            return x - 0.5 * x**2
        if impl == "SphereSobolev32":
            return np.full(X.shape[0], 4.0 / 3.0)
        raise UnsupportedPairError(k, pi)  # pragma: no cover

    __call__ = mean_at

    def initial_error(self) -> float:
        """Double integral of the kernel under the measure (prior variance of the integral)."""
        if self._ie is None:
            self._ie = float(self._initial_error())
        return self._ie

    def _initial_error(self):
        impl = self._impl
        k, pi = self.kernel, self.measure
        if impl == "empirical":
            pts, w = pi.points, pi.weights
            # symmetric double sum: diagonal blocks once, off-diagonal blocks twice
            m = pts.shape[0]
            block = max(64, min(m, int(math.sqrt(4_000_000))))
            total = 0.0
            for i in range(0, m, block):
                wi = w[i:i + block]
                total += wi @ (k._cross(pts[i:i + block], pts[i:i + block]) @ wi)
                # square tiles keep memory at block**2 floats
                for j in range(i + block, m, block):
                    total += 2.0 * wi @ (k._cross(pts[i:i + block], pts[j:j + block]) @ w[j:j + block])
            return total
        if impl == "MaternTP":
            out = k.lam
            for i in range(k.dim):
                out *= matern_initial_error_1d(k.alpha, k.rate[i], pi.hi[i] - pi.lo[i])
            return out
        if impl == "ExpQuadratic" and isinstance(pi, UniformBox):
            out = k.lam
            for i in range(pi.dim):
                out *= _eq_initial_error_1d(k.sigma, pi.hi[i] - pi.lo[i])
            return out
        if impl == "ExpQuadratic" and isinstance(pi, GaussianMixture):
            d = pi.dim
            total = 0.0
            for wa, ma, Sa in zip(pi.weights, pi.means, pi.covariances):
                conv = _gauss_conv(k.sigma, d, pi.means, pi.covariances + Sa, ma[None, :])[0]
                total += wa * (conv @ pi.weights)
            return k.lam * total
        if impl == "WeightedSobolev":
            return k.gamma_empty
        if impl == "Brownian":
            return 1.0 / 3.0
        if impl == "SphereSobolev32":
            return 4.0 / 3.0
        raise UnsupportedPairError(k, pi)  # pragma: no cover

    def __repr__(self):
        return f"KernelMean({self.kernel}, {self.measure}, form={self.form!r})"


def empirical_mean(kernel: K.Kernel, samples, weights=None) -> KernelMean:
    """Kernel mean of the atomic measure ``sum_j w_j delta_{x_j}`` (uniform by default)."""
    pts = K.as_array(samples, kernel.dim)
    if pts.shape[0] == 0:
        raise ArgumentError("samples must be nonempty")
    if weights is not None:
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        if weights.shape != (pts.shape[0],):
            raise ArgumentError("weights must match the number of samples")
    return KernelMean(kernel, Empirical(pts, weights), form="empirical")


def mean_error_bound(kernel: K.Kernel, m: float, delta: float = 0.05) -> float:
    """High-probability bound on the RKHS error of a uniform-weight empirical kernel mean.

    ``2 / sqrt(m) * sup_x sqrt(k(x, x)) + sqrt(log(2 / delta) / (2 m))``, valid
    with probability at least ``1 - delta`` for ``m`` independent draws.  For
    correlated draws pass an effective sample size as ``m``; the bound is
    then heuristic.
    """
    if not 0.0 < delta <= 1.0:
        raise ArgumentError("delta must lie in (0, 1]")
    if m <= 0:
        raise ArgumentError("m must be positive")
    return 2.0 / math.sqrt(m) * math.sqrt(kernel.sup_diag()) + math.sqrt(math.log(2.0 / delta) / (2.0 * m))
