"""Compute numerical spherical t-designs on S^2 and write them as text files.

A point set {x_i} is a t-design iff

    A(X) = N^-2 sum_ij sum_{l=1}^t (2l + 1) P_l(x_i . x_j) = 0,

since the inner sum is the reproducing kernel of the harmonics of degree
1..t.  We minimise A with L-BFGS from a spiral start and keep a set only if
every monomial of degree <= t is integrated to 1e-10 by the equal-weight
average.  Run from the repository root:

    python scripts/make_sphere_designs.py
"""

import math
import os
import sys

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import least_squares, minimize
from scipy.special import sph_harm_y

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "probcub", "data", "sphere_designs")
STRENGTHS = [2, 3, 4, 6, 8, 11, 16, 22, 30]


def spiral(n):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z**2)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def objective(t):
    c = np.zeros(t + 1)
    c[1:] = 2 * np.arange(1, t + 1) + 1
    dc = legendre.legder(c)

    def fun(v):
        V = v.reshape(-1, 3)
        nv = np.linalg.norm(V, axis=1, keepdims=True)
        X = V / nv
        S = np.clip(X @ X.T, -1, 1)
        n = X.shape[0]
        val = legendre.legval(S, c).sum() / n**2
        G = 2 * (legendre.legval(S, dc) @ X) / n**2
        G -= np.sum(G * X, 1, keepdims=True) * X
        return val, (G / nv).ravel()

    return fun


def moments(t):
    """Residuals: equal-weight averages of the real harmonics of degree 1..t."""
    ls = [(l, m) for l in range(1, t + 1) for m in range(0, l + 1)]

    def res(ang):
        theta, phi = ang[0::2], ang[1::2]
        out = []
        for l, m in ls:
            y = sph_harm_y(l, m, theta, phi).mean()
            out.append(y.real)
            if m:
                out.append(y.imag)
        return np.array(out)

    return res


def to_angles(X):
    return np.column_stack([np.arccos(np.clip(X[:, 2], -1, 1)), np.arctan2(X[:, 1], X[:, 0])]).ravel()


def from_angles(a):
    th, ph = a[0::2], a[1::2]
    return np.column_stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def dfact(k):
    # double factorial with (-1)!! = 1
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def monomial_error(X, t):
    worst = 0.0
    for a in range(t + 1):
        for b in range(t + 1 - a):
            for c in range(t + 1 - a - b):
                est = np.mean(X[:, 0] ** a * X[:, 1] ** b * X[:, 2] ** c)
                if a % 2 or b % 2 or c % 2:
                    exact = 0.0
                else:
                    exact = (
                        dfact(a - 1) * dfact(b - 1) * dfact(c - 1)
                        / dfact(a + b + c + 1)
                    )
                worst = max(worst, abs(est - exact))
    return worst


def design(t, rng):
    base = (t + 1) ** 2 // 2 + 2
    for extra in range(0, 12):
        n = base + extra
        for attempt in range(4):
            X0 = spiral(n)
            if attempt:
                X0 = X0 + 0.05 * rng.standard_normal(X0.shape)
            res = minimize(objective(t), X0.ravel(), jac=True, method="L-BFGS-B",
                           options={"maxiter": 20000, "ftol": 1e-30, "gtol": 1e-14})
            X = res.x.reshape(-1, 3)
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            # polish on the harmonic moments, which resolve to machine precision
            ls = least_squares(moments(t), to_angles(X), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)
            X = from_angles(ls.x)
            err = monomial_error(X, t)
            if err < 1e-10:
                return X, err
    raise RuntimeError(f"no {t}-design found")


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(20151124)
    for t in STRENGTHS:
        X, err = design(t, rng)
        name = f"sd_t{t:03d}_n{X.shape[0]:05d}.txt"
        with open(os.path.join(OUT, name), "w") as fh:
            fh.write(f"# numerical spherical {t}-design on S^2, {X.shape[0]} points\n")
            fh.write(f"# max monomial integration error (degree <= {t}): {err:.2e}\n")
            for row in X:
                fh.write(" ".join(f"{v:.17f}" for v in row) + "\n")
        print(name, f"{err:.1e}", file=sys.stderr)


if __name__ == "__main__":
    main()
