"""Probabilistic thermodynamic integration.

The log-evidence is the nested integral

    log p(y) = int_0^1 g(t) dt,   g(t) = E_{pi_t}[log p(y | theta)],

with pi_t the power posterior.  The inner integrals g(t_a) are estimated
jointly by Bayesian cubature on the pooled likelihood evaluations from every
rung; the outer integral is rewritten as ``int h(t) pi(t) dt`` with
``h = g / pi`` for an importance density ``pi`` that concentrates near
``t = 0``, and ``h`` gets a stationary GP prior.  The inner covariance is
propagated through the outer rule.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .cubature import VarianceClampWarning, default_sigma_grid, eb_lengthscale
from .exceptions import ArgumentError, ConditioningError, DegenerateChainError
from .kernels import ExpQuadratic, Kernel, as_array, factorize
from .pointsets import _dedup_indices, mcmc_points

__all__ = [
    "TemperatureSchedule",
    "TIPosterior",
    "default_schedule",
    "importance_density",
    "importance_constant",
    "inner_posterior",
    "outer_posterior",
    "run_ti",
    "tune_step",
    "effective_sample_size",
    "EPSILON",
    "POOL_CAP",
    "OUTER_NODES",
]

EPSILON = 0.01
POOL_CAP = 2000
OUTER_NODES = 512
EB_SUBSET = 300


@dataclass(frozen=True)
class TemperatureSchedule:
    """Strictly increasing temperatures from exactly 0 to exactly 1."""

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        if t.size < 2 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ArgumentError("schedule must increase strictly from 0 to 1")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def m(self) -> int:
        return self.t.size

    def __len__(self):
        return self.m


def default_schedule(m: int) -> TemperatureSchedule:
    """Fifth-power ladder ``t_i = ((i - 1) / (m - 1))**5``."""
    if m < 2:
        raise ArgumentError("need at least two rungs")
    t = (np.arange(m) / (m - 1)) ** 5
    t[-1] = 1.0
    return TemperatureSchedule(t)


@functools.lru_cache(maxsize=None)
def importance_constant(eps: float = EPSILON) -> float:
    """Normalising constant of ``1 / (eps + 5 t^{4/5})`` on [0, 1], by quadrature.

    Substituting ``t = s^5`` removes the cusp at the origin.
    """
    val, _ = integrate.quad(lambda s: 5 * s**4 / (eps + 5 * s**4), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    c = 1.0 / val
    if eps == EPSILON and abs(c - 1.306) > 1e-2:
        raise RuntimeError(f"importance constant {c} disagrees with the reference 1.306")
    return c


def importance_density(t) -> np.ndarray | float:
    """``c / (0.01 + 5 t^{4/5})`` on [0, 1] with ``c`` recomputed by quadrature."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0) or np.any(ta > 1) or np.any(np.isnan(ta)):
        raise ArgumentError("importance density is defined on [0, 1]")
    out = importance_constant() / (EPSILON + 5.0 * ta**0.8)
    return float(out) if out.ndim == 0 else out


def _warp(t):
    return (np.asarray(t, dtype=float) ** 0.2)[:, None]


def _outer_nodes(n=OUTER_NODES):
    """Quadrature nodes/weights for ``int . pi(t) dt`` via ``t = s^5``."""
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    t = s**5
    w = w * 5.0 * s**4 * importance_density(t)
    return t, w


@dataclass
class TIPosterior:
    """Gaussian posterior over the log-evidence.

    ``mu`` and ``Sigma`` describe the inner posterior over ``g(t_a)``;
    ``logZ_var_outer`` is the outer cubature variance and
    ``logZ_var_propagated`` is the inner uncertainty pushed through the
    outer weights.
    """

    mu: np.ndarray
    Sigma: np.ndarray
    logZ_mean: float
    logZ_var_outer: float
    logZ_var_propagated: float
    schedule: TemperatureSchedule | None = None
    weights: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def logZ_var(self) -> float:
        return self.logZ_var_outer + self.logZ_var_propagated

    @property
    def logZ_std(self) -> float:
        return math.sqrt(self.logZ_var)

    def interval(self, gamma: float = 0.05):
        if not 0.0 < gamma < 1.0:
            raise ArgumentError("gamma must lie in (0, 1)")
        q = stats.norm.ppf(1.0 - gamma / 2.0) * self.logZ_std
        return self.logZ_mean - q, self.logZ_mean + q

    def to_csv(self, path=None) -> str:
        """Per-rung rows ``rung,t,mu,sigma_diag`` followed by a summary block."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rung", "t", "mu", "sigma_diag"])
        t = self.schedule.t if self.schedule is not None else np.full(self.mu.size, np.nan)
        for a in range(self.mu.size):
            w.writerow([a + 1, repr(float(t[a])), repr(float(self.mu[a])), repr(float(self.Sigma[a, a]))])
        w.writerow(["logZ_mean", "var_outer", "var_propagated", "var_total"])
        w.writerow([repr(self.logZ_mean), repr(self.logZ_var_outer),
                    repr(self.logZ_var_propagated), repr(self.logZ_var)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _nonneg(v, scale):
    if v < 0 and v >= -1e-8 * max(abs(scale), 1e-300):
        return 0.0
    if v < 0:
        raise ConditioningError(f"negative variance {v:.3e}")
    return float(v)


def _thin(X, f, cap):
    n = X.shape[0]
    if n <= cap:
        return X, f
    idx = np.unique(np.floor(np.arange(cap) * (n / cap)).astype(int))
    return X[idx], f[idx]


def _pool(samples_per_rung, f_per_rung, split):
    """Split every rung; return empirical parts and the pooled regression set."""
    if not 0.0 < split < 1.0:
        raise ArgumentError("split must lie in (0, 1)")
    if len(samples_per_rung) != len(f_per_rung):
        raise ArgumentError("need one f-vector per rung")
    emp, Xs, fs = [], [], []
    for S, fv in zip(samples_per_rung, f_per_rung):
        S = as_array(S)
        fv = np.asarray(fv, dtype=float).ravel()
        if fv.shape[0] != S.shape[0]:
            raise ArgumentError("f-values must align with the rung samples")
        k = int(round(split * S.shape[0]))
        if k < 1 or S.shape[0] - k < 4:
            raise ArgumentError("every rung needs at least 4 samples after the split")
        emp.append(S[:k])
        Xs.append(S[k:])
        fs.append(fv[k:])
    X = np.vstack(Xs)
    f = np.concatenate(fs)
    # repeated states across rungs would make the Gram singular
    X_u, idx = _unique_rows(X)
    return emp, X_u, f[idx]


def _unique_rows(X):
    idx = _dedup_indices(X)
    return X[idx], idx


def inner_posterior(kf: Kernel, samples_per_rung, f_values, schedule: TemperatureSchedule | None = None,
                    split: float = 0.5, *, pool_cap: int = POOL_CAP):
    """Joint posterior over ``g(t_a)`` from pooled likelihood evaluations.

    Each rung's samples are split: the first ``split`` share defines the
    empirical measure standing in for ``pi_{t_a}``, the rest join the
    regression set shared by all rungs (thinned to ``pool_cap`` points).

    Returns
    -------
    mu : ndarray, shape (m,)
    Sigma : ndarray, shape (m, m)
        Covariance with empirical measures in place of the power posteriors.
        It ignores the sampling error of those measures and so tends to be
        too small.
    """
    if schedule is not None and schedule.m != len(samples_per_rung):
        raise ArgumentError("schedule length must match the number of rungs")
    emp, X, f = _pool(samples_per_rung, f_values, split)
    X, f = _thin(X, f, pool_cap)
    G = factorize(kf(X))
    m = len(emp)
    Z = np.empty((m, X.shape[0]))
    A = np.empty((m, m))
    for a in range(m):
        Z[a] = kf(emp[a], X).mean(0)
        for b in range(a + 1):
            A[a, b] = A[b, a] = kf(emp[a], emp[b]).mean()
    W = G.solve(Z.T)
    mu = W.T @ f
    Sigma = A - Z @ W
    return mu, _psd_project(0.5 * (Sigma + Sigma.T), float(np.abs(A).max()))


def _psd_project(S, scale):
    """Clip negative eigenvalues left by an ill-conditioned solve."""
    vals, vecs = np.linalg.eigh(S)
    if vals.min() >= 0:
        return S
    if vals.min() < -1e-10 * scale:
        warnings.warn(f"inner covariance eigenvalue {vals.min():.3e} clipped to 0",
                      VarianceClampWarning, stacklevel=3)
    S = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (S + S.T)


def outer_posterior(kh: Kernel, schedule: TemperatureSchedule, mu, Sigma, *, nodes: int = OUTER_NODES) -> TIPosterior:
    """Outer cubature on ``h = g / pi`` against the importance density.

    ``kh`` acts on the coordinate ``s = t^{1/5}``, in which the default
    ladder is equispaced and ``h`` is smooth at the origin.  Its kernel mean
    under ``pi`` is evaluated on a fixed ``nodes``-point Gauss-Legendre rule
    in ``s``.
    """
    t = schedule.t
    mu = np.asarray(mu, dtype=float).ravel()
    Sigma = np.asarray(Sigma, dtype=float)
    if mu.shape != t.shape or Sigma.shape != (t.size, t.size):
        raise ArgumentError("mu and Sigma must match the schedule")
    p = importance_density(t)
    if np.any(p <= 0):
        raise ArgumentError("importance density vanishes at a scheduled temperature")
    h = mu / p
    Sigma_h = Sigma / np.outer(p, p)
    tq, wq = _outer_nodes(nodes)
    T = _warp(t)
    Q = _warp(tq)
    z = kh(T, Q) @ wq
    ie = float(wq @ kh(Q) @ wq)
    G = factorize(kh(T))
    w = G.solve(z)
    mean = float(w @ h)
    v_outer = _nonneg(ie - float(z @ w), ie)
    v_prop = float(w @ Sigma_h @ w)
    v_prop = _nonneg(v_prop, float(np.abs(Sigma_h).max()) * float(np.abs(w).sum()) ** 2)
    return TIPosterior(
        mu=mu, Sigma=Sigma, logZ_mean=mean, logZ_var_outer=v_outer, logZ_var_propagated=v_prop,
        schedule=schedule, weights=w,
        meta={"h": h, "kh": kh, "outer_initial_error": ie, "jitter_h": G.jitter,
              "sigma_underestimated": True},
    )


def tune_step(log_density, x0, seed, step0=1.0, rounds=8, pilot=100, target=(0.2, 0.5)):
    """Crude pilot tuning of the random-walk step towards a target acceptance band."""
    step = step0
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    for r in range(rounds):
        try:
            ps, chain = mcmc_points(log_density, x, pilot, step, seed + 7919 * (r + 1), return_chain=True)
            acc = ps.acceptance_rate
            x = chain[-1]
        except DegenerateChainError:
            acc = 0.0
        if acc < target[0]:
            step *= 0.5
        elif acc > target[1]:
            step *= 2.0
        else:
            break
    return step, x


def effective_sample_size(x) -> float:
    """Effective sample size of a scalar chain (initial positive sequence estimator)."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    fx = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(fx * np.conj(fx))[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


def _mc_variance(f_per_rung, split):
    """Squared Monte Carlo standard error of each rung's empirical average."""
    out = []
    for fv in f_per_rung:
        fv = np.asarray(fv, dtype=float).ravel()
        k = int(round(split * fv.size))
        part = fv[:k]
        s2 = float(np.var(part, ddof=1)) if k > 1 else 0.0
        out.append(s2 / effective_sample_size(part))
    return np.array(out)


def _fit_kernel(X, f, lam, sigma_grid, cap=EB_SUBSET):
    """EB lengthscale of an ExpQuadratic kernel.

    With ``lam=None`` the amplitude is profiled out of the lengthscale
    objective and then set to its maximiser ``f^T K0^{-1} f / n``.
    """
    Xs, fs = _thin(X, f, cap)
    base = ExpQuadratic(1.0, 1.0 if lam is None else lam)
    sig, _ = eb_lengthscale(base, Xs, fs, sigma_grid, amplitude=lam)
    k0 = ExpQuadratic(float(sig[0]), 1.0)
    if lam is None:
        G = factorize(k0(Xs))
        lam = float(fs @ G.solve(fs)) / fs.size
    return k0.with_amplitude(lam)


def _shrink_until_ok(kern: ExpQuadratic, X, tries=30):
    for _ in range(tries):
        try:
            factorize(kern(X))
            return kern
        except ConditioningError:
            kern = kern.with_sigma(kern.sigma / 2.0)
    raise ConditioningError("no workable lengthscale found")


def run_ti(
    model,
    m_rungs: int = 10,
    n_per_rung: int = 200,
    seed: int = 0,
    *,
    x0=None,
    dim: int | None = None,
    burn: int = 200,
    thin: int = 2,
    split: float = 0.5,
    sigma_grid=None,
    mc_correction: bool = True,
    amplitudes: str = "eb",
) -> TIPosterior:
    """Full probabilistic TI pipeline.

    Parameters
    ----------
    model : mapping or object
        Provides ``log_likelihood(theta)`` and ``log_prior(theta)``.
    m_rungs, n_per_rung : int
        Ladder size and retained MCMC states per rung.
    seed : int
        Master seed; rung ``a`` uses ``seed + 1000 * a``.

    mc_correction : bool
        Add the squared Monte Carlo standard error of every rung's
        empirical average (chain variance over effective sample size) to the
        diagonal of the inner covariance before propagation.  The cubature
        covariance alone treats the empirical measures as exact and is
        typically far too small; the uncorrected matrix is kept in
        ``meta["Sigma_empirical"]``.
    amplitudes : {"eb", "fixed"}
        ``"fixed"`` sets ``lam_f = 0.1 |mean f|`` and ``lam_h = 0.01 |mean h|``
        and fits only the lengthscales.  ``"eb"`` profiles the amplitudes
        out of the lengthscale objective and then uses their maximisers.

    Notes
    -----
    Lengthscales are chosen by empirical Bayes, on at most 300 pooled
    points for ``k_f``.
    """
    if amplitudes not in ("eb", "fixed"):
        raise ArgumentError("amplitudes must be 'eb' or 'fixed'")
    fixed = amplitudes == "fixed"
    ll = model["log_likelihood"] if isinstance(model, dict) else model.log_likelihood
    lp = model["log_prior"] if isinstance(model, dict) else model.log_prior
    if x0 is None:
        x0 = np.zeros(dim or 1)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    sched = default_schedule(m_rungs)

    samples, fvals, rates = [], [], []
    for a, t in enumerate(sched.t):
        rs = int(seed) + 1000 * a

        def logpost(th, t=t):
            v = lp(th)
            return v + t * ll(th) if np.isfinite(v) else -np.inf

        step, start = tune_step(logpost, x0, rs)
        ps, chain = mcmc_points(logpost, start, burn + thin * n_per_rung, step, rs, return_chain=True)
        S = chain[burn::thin][:n_per_rung]
        samples.append(S)
        fvals.append(np.array([ll(th) for th in S]))
        rates.append(ps.acceptance_rate)

    allf = np.concatenate(fvals)
    lam_f = (0.1 * abs(float(allf.mean())) or 1.0) if fixed else None
    emp, X, f = _pool(samples, fvals, split)
    X, f = _thin(X, f, POOL_CAP)
    spread = float(np.max(np.ptp(X, axis=0))) or 1.0
    grid_f = sigma_grid if sigma_grid is not None else default_sigma_grid(1e-3 * spread, 1e2 * spread, 8)
    kf = _shrink_until_ok(_fit_kernel(X, f, lam_f, grid_f), X)
    mu, Sigma_emp = inner_posterior(kf, samples, fvals, sched, split)
    mc_var = _mc_variance(fvals, split)
    Sigma = Sigma_emp + np.diag(mc_var) if mc_correction else Sigma_emp

    h = mu / importance_density(sched.t)
    lam_h = (0.01 * abs(float(h.mean())) or 1.0) if fixed else None
    T = _warp(sched.t)
    kh = _fit_kernel(T, h, lam_h, default_sigma_grid(1e-2, 1e1, 16), cap=sched.m)
    kh = _shrink_until_ok(kh, T)
    post = outer_posterior(kh, sched, mu, Sigma)
    post.meta.update(
        Sigma_empirical=Sigma_emp, mc_variance=mc_var, mc_correction=mc_correction,
        lam_f=kf.lam, sigma_f=kf.sigma, lam_h=kh.lam, sigma_h=kh.sigma, amplitudes=amplitudes,
        acceptance_rates=rates, n_pooled=X.shape[0], seed=seed, f_per_rung=fvals,
    )
    return post
