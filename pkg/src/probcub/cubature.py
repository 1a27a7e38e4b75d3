"""Bayesian cubature: optimal weights, posteriors over the integral and
kernel-scale selection.

Under a zero-mean GP prior with covariance ``k`` and states ``X`` the
integral ``int f dpi`` has a Gaussian posterior with mean ``z^T K^{-1} f``
and variance ``int int k - z^T K^{-1} z`` where ``z`` is the kernel mean at
``X``.  The variance equals the squared worst-case error of the rule with
weights ``K^{-1} z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.spatial import cKDTree
from scipy.special import gammaln

from .exceptions import ArgumentError, ConditioningError, UnsupportedError
from .kernelmeans import KernelMean, mean_error_bound
from .kernels import Kernel, as_array, factorize
from .pointsets import DUP_TOL

__all__ = [
    "CubaturePosterior",
    "VarianceClampWarning",
    "bc_weights",
    "bc_posterior",
    "bc_posterior_studentt",
    "wce_squared",
    "eb_lengthscale",
    "log_marginal",
    "approx_bc_posterior",
    "credible_interval",
    "split_samples",
    "default_sigma_grid",
]

CLAMP_REL = 1e-6


class VarianceClampWarning(RuntimeWarning):
    """A slightly negative variance was set to zero."""


@dataclass
class CubaturePosterior:
    """Posterior over the value of an integral.

    For ``family == "student-t"`` the ``variance`` field is the squared scale
    of the t distribution (the quantity that multiplies the t quantile).
    ``inflation`` is the additive error-bound term used when the kernel mean
    was itself estimated from samples; ``delta`` is the failure probability
    attached to that bound.
    """

    mean: float
    variance: float
    family: str = "gaussian"
    dof: int | None = None
    inflation: float | None = None
    weights: np.ndarray = field(default=None, repr=False)
    n: int = 0
    jitter: float = 0.0
    delta: float | None = None

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def interval(self, gamma: float = 0.05):
        return credible_interval(self, gamma)


def _clamp(v, scale, what="variance"):
    if v >= 0.0:
        return float(v)
    if v >= -CLAMP_REL * abs(scale):
        warnings.warn(f"{what} {v:.3e} clamped to 0", VarianceClampWarning, stacklevel=3)
        return 0.0
    raise ConditioningError(f"negative {what} {v:.3e} beyond round-off")


def _setup(kernel: Kernel, km: KernelMean, X):
    X = as_array(X, km.measure.dim)
    G = factorize(kernel(X)) if X.shape[0] else None
    z = km.mean_at(X) if X.shape[0] else np.zeros(0)
    return X, G, z


def bc_weights(kernel: Kernel, km: KernelMean, X, *, return_jitter=False):
    """Cubature weights ``w = K^{-1} z`` (never via an explicit inverse)."""
    X, G, z = _setup(kernel, km, X)
    if G is None:
        w, jit = np.zeros(0), 0.0
    else:
        w, jit = G.solve(z), G.jitter
    return (w, jit) if return_jitter else w


def bc_posterior(kernel: Kernel, km: KernelMean, X, f_values) -> CubaturePosterior:
    """Gaussian posterior over ``int f dpi`` given ``f`` at the states ``X``.

    With no states the prior ``N(0, int int k)`` is returned.
    """
    X, G, z = _setup(kernel, km, X)
    f = np.asarray(f_values, dtype=float).ravel()
    if f.shape[0] != X.shape[0]:
        raise ArgumentError("f_values must align with X")
    ie = km.initial_error()
    if G is None:
        return CubaturePosterior(0.0, ie, weights=np.zeros(0), n=0)
    w = G.solve(z)
    var = _clamp(ie - float(z @ w), ie)
    return CubaturePosterior(float(w @ f), var, weights=w, n=X.shape[0], jitter=G.jitter)


def bc_posterior_studentt(kernel0: Kernel, km0: KernelMean, X, f_values) -> CubaturePosterior:
    """Student-t posterior after marginalising the amplitude under ``p(lam) ~ 1/lam``.

    ``kernel0`` is the unit-amplitude kernel.  The mean is the Gaussian
    posterior mean; the squared scale is ``(f^T C0^{-1} f / n)`` times the
    unit-amplitude posterior variance; there are ``n`` degrees of freedom.
    """
    X, G, z = _setup(kernel0, km0, X)
    f = np.asarray(f_values, dtype=float).ravel()
    n = X.shape[0]
    if n < 2:
        raise ArgumentError("the Student-t posterior needs n >= 2")
    if f.shape[0] != n:
        raise ArgumentError("f_values must align with X")
    if kernel0.amplitude != 1.0:
        warnings.warn("kernel0 amplitude is not 1; it cancels from the t scale", RuntimeWarning, stacklevel=2)
    w = G.solve(z)
    alpha = G.solve(f)
    ie = km0.initial_error()
    v0 = _clamp(ie - float(z @ w), ie)
    scale2 = float(f @ alpha) / n * v0
    return CubaturePosterior(
        float(w @ f), scale2, family="student-t", dof=n, weights=w, n=n, jitter=G.jitter
    )


def wce_squared(kernel: Kernel, km: KernelMean, X, w) -> float:
    """Squared worst-case error ``w^T K w - 2 w^T z + int int k`` of the rule ``(X, w)``."""
    X = as_array(X, km.measure.dim)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != X.shape[0]:
        raise ArgumentError("weights must align with X")
    ie = km.initial_error()
    if X.shape[0] == 0:
        return ie
    Kx = kernel(X)
    z = km.mean_at(X)
    return _clamp(float(w @ Kx @ w - 2.0 * w @ z + ie), ie, "squared WCE")


# --- hyperparameters ------------------------------------------------------


def default_sigma_grid(lo=1e-3, hi=1e3, per_decade=32) -> np.ndarray:
    decades = math.log10(hi / lo)
    return np.logspace(math.log10(lo), math.log10(hi), int(round(decades * per_decade)) + 1)


def log_marginal(kernel: Kernel, X, f_values, amplitude=None) -> float:
    """Log marginal likelihood of ``f`` under the GP prior.

    With ``amplitude=None`` the amplitude is integrated out under the
    improper prior ``1/lam`` (``kernel`` should have unit amplitude);
    otherwise ``kernel`` is rescaled to the given amplitude.
    """
    f = np.asarray(f_values, dtype=float).ravel()
    n = f.shape[0]
    G = factorize(kernel(X))
    q = float(f @ G.solve(f))
    if amplitude is None:
        if q <= 0:
            return math.inf
        return float(gammaln(n / 2) - 0.5 * n * math.log(math.pi * q) - 0.5 * G.logdet())
    lam = float(amplitude) / kernel.amplitude
    return float(-0.5 * q / lam - 0.5 * (G.logdet() + n * math.log(lam)) - 0.5 * n * math.log(2 * math.pi))


def _family(kernel_family):
    if callable(kernel_family) and not isinstance(kernel_family, Kernel):
        return kernel_family
    if hasattr(kernel_family, "with_sigma"):
        return kernel_family.with_sigma
    raise ArgumentError("kernel_family must be a callable sigma -> Kernel or expose with_sigma")


def _safe(obj):
    def wrapped(s):
        try:
            v = obj(s)
        except ConditioningError:
            return -math.inf
        return v if np.isfinite(v) else -math.inf
    return wrapped


def _grid_then_golden(obj, grid, rtol):
    vals = np.array([obj(s) for s in grid])
    if not np.any(np.isfinite(vals)):
        raise ConditioningError("every grid point was numerically singular")
    i = int(np.argmax(vals))
    if i == 0 or i == len(grid) - 1 or len(grid) < 3:
        return float(grid[i]), float(vals[i])
    a, b, c = grid[i - 1], grid[i], grid[i + 1]
    res = optimize.minimize_scalar(
        lambda s: -obj(s) if a <= s <= c else math.inf,
        bracket=(a, b, c),
        method="golden",
        options={"xtol": rtol},
    )
    s_best, v_best = float(res.x), -float(res.fun)
    if not np.isfinite(v_best) or v_best < vals[i]:
        return float(b), float(vals[i])
    return s_best, v_best


def eb_lengthscale(
    kernel_family,
    X,
    f_values,
    sigma_grid=None,
    *,
    per_dimension: bool = False,
    amplitude: float | None = None,
    rtol: float = 1e-3,
    sweeps: int = 2,
):
    """Empirical-Bayes lengthscale: log-spaced grid search, then golden-section refinement.

    Parameters
    ----------
    kernel_family : callable or Kernel
        ``sigma -> Kernel`` (unit amplitude when ``amplitude`` is None), or a
        kernel exposing ``with_sigma``.
    sigma_grid : array_like, optional
        Candidate lengthscales; defaults to :func:`default_sigma_grid`.
    per_dimension : bool
        Optimise one lengthscale per coordinate by coordinate-wise sweeps
        started from the isotropic optimum.
    amplitude : float, optional
        Fix the amplitude instead of integrating it out.

    Returns
    -------
    sigma : ndarray
        Selected lengthscale(s); length ``d`` in per-dimension mode, else 1.
    log_marginal : float
    """
    build = _family(kernel_family)
    X = as_array(X)
    f = np.asarray(f_values, dtype=float).ravel()
    grid = default_sigma_grid() if sigma_grid is None else np.sort(np.atleast_1d(np.asarray(sigma_grid, float)))
    if grid.size == 0 or np.any(grid <= 0):
        raise ArgumentError("sigma_grid must be a nonempty set of positive values")
    d = X.shape[1]

    def lml(sig):
        return log_marginal(build(sig), X, f, amplitude)

    iso = _safe(lambda s: lml(np.full(d, s) if per_dimension else s))
    s0, v0 = _grid_then_golden(iso, grid, rtol)
    if not per_dimension or d == 1:
        return np.full(d if per_dimension else 1, s0), v0
    sig = np.full(d, s0)
    best = v0
    for _ in range(sweeps):
        for i in range(d):
            def coord(s, i=i):
                trial = sig.copy()
                trial[i] = s
                return lml(trial)
            si, vi = _grid_then_golden(_safe(coord), grid, rtol)
            if vi >= best:
                sig[i], best = si, vi
    return sig, best


# --- approximate kernel means ---------------------------------------------


def split_samples(samples, frac: float = 0.5, alternate: bool = True):
    """Split samples into (regression states, kernel-mean samples).

    With ``alternate=True`` and ``frac=0.5`` even indices go to the first
    part and odd indices to the second.  Otherwise the first ``frac`` share
    (in order) forms the regression part.
    """
    S = as_array(samples)
    n = S.shape[0]
    if not 0.0 < frac < 1.0:
        raise ArgumentError("frac must lie in (0, 1)")
    if alternate and frac == 0.5:
        return S[0::2], S[1::2]
    k = int(round(frac * n))
    return S[:k], S[k:]


def approx_bc_posterior(
    kernel: Kernel,
    km_emp: KernelMean,
    X,
    f_values,
    delta: float = 0.05,
    *,
    m_eff: float | None = None,
) -> CubaturePosterior:
    """Bayesian cubature with an empirical kernel mean and an inflated variance.

    The weights are ``K^{-1} z_a`` with ``z_a`` the empirical kernel mean at
    ``X``.  The reported variance is the conservative square
    ``(sqrt(v_a) + b)^2`` where ``v_a`` is the exact posterior variance
    relative to the empirical measure and ``b`` is
    :func:`~probcub.kernelmeans.mean_error_bound` (with ``m_eff`` in place of
    the sample count when given).
    """
    if km_emp.samples is None:
        raise UnsupportedError("approx_bc_posterior needs an empirical kernel mean")
    if not 0.0 < delta < 1.0:
        raise ArgumentError("delta must lie in (0, 1)")
    X = as_array(X, km_emp.measure.dim)
    if X.shape[0] and cKDTree(km_emp.samples).query(X, k=1, p=np.inf)[0].min() <= DUP_TOL:
        raise ArgumentError("kernel-mean samples overlap the regression states")
    post = bc_posterior(kernel, km_emp, X, f_values)
    bound = mean_error_bound(kernel, km_emp.m if m_eff is None else m_eff, delta)
    post.variance = (math.sqrt(post.variance) + bound) ** 2
    post.inflation = bound
    post.delta = delta
    return post


def credible_interval(post: CubaturePosterior, gamma: float = 0.05):
    """Central ``100(1 - gamma)%`` credible interval."""
    if not 0.0 < gamma < 1.0:
        raise ArgumentError("gamma must lie in (0, 1)")
    s = math.sqrt(max(post.variance, 0.0))
    if s == 0.0:
        return post.mean, post.mean
    if post.family == "student-t":
        q = stats.t.ppf(1.0 - gamma / 2.0, post.dof)
    else:
        q = stats.norm.ppf(1.0 - gamma / 2.0)
    return post.mean - q * s, post.mean + q * s
