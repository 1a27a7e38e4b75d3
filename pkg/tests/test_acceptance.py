"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (or this file as a script); the
terminal summary lists every criterion with its measured values.
"""

import math
import time

import numpy as np
import pytest

from probcub.cubature import (
    approx_bc_posterior,
    bc_posterior,
    bc_posterior_studentt,
    bc_weights,
    wce_squared,
)
from probcub.harness import build_config, run_experiment
from probcub.kernelmeans import KernelMean, empirical_mean
from probcub.kernels import Brownian, SphereSobolev32
from probcub.measures import UniformBox, UniformSphere, sample
from probcub.thermo import importance_density, run_ti
from probcub.harness.testfns import conjugate_gaussian_model

from test_cubature import _interp_integral, random_problem, unit_amplitude_problem

RESULTS = {}


def report(num, title, ok, detail):
    RESULTS[num] = (title, bool(ok), detail)
    print(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, f"criterion {num} ({title}) failed: {detail}"


def _run(exp, raw, tmp_path, name="out", seed=0):
    cfg = build_config(exp, {k: str(v) for k, v in raw.items()}, str(tmp_path / name), seed=seed)
    return run_experiment(cfg)


def _rows(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n").split(",") for ln in fh]
    return [dict(zip(lines[0], r)) for r in lines[1:]]


def test_criterion_01_trapezium():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    k = Brownian()
    km = KernelMean(k, UniformBox.unit(1))
    x = np.sort(np.r_[rng.random(14), 1.0])
    w = bc_weights(k, km, x[:, None])
    worst = 0.0
    for _ in range(20):
        f = rng.standard_normal(x.size)
        post = bc_posterior(k, km, x[:, None], f)
        worst = max(worst, abs(post.mean - _interp_integral(x, f)))
        worst = max(worst, abs(w @ f - _interp_integral(x, f)))
    dt = time.perf_counter() - t0
    report(1, "trapezium rule", worst <= 1e-10 and dt < 1, f"max |diff| = {worst:.2e}, {dt:.2f} s")


def test_criterion_02_sphere_constants():
    t0 = time.perf_counter()
    k = SphereSobolev32()
    km = KernelMean(k, UniformSphere(2))
    X = sample(UniformSphere(2), 200, 7)
    exact = bool(np.all(km.mean_at(X) == 4 / 3)) and km.initial_error() == 4 / 3
    # product rule in coordinates centred on each x; the kernel is smooth there
    z, wz = np.polynomial.legendre.leggauss(200)
    nphi = 64
    phi = 2 * np.pi * np.arange(nphi) / nphi
    worst = 0.0
    for x in X[:5]:
        e1 = np.cross(x, [1.0, 0.0, 0.0] if abs(x[0]) < 0.9 else [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(x, e1)
        Z, P = np.meshgrid(z, phi, indexing="ij")
        R = np.sqrt(1 - Z**2)
        Q = (Z[..., None] * x + (R * np.cos(P))[..., None] * e1 + (R * np.sin(P))[..., None] * e2).reshape(-1, 3)
        W = np.repeat(wz, nphi) / (2 * nphi)
        worst = max(worst, abs(float(k(x[None], Q)[0] @ W) - 4 / 3))
    dt = time.perf_counter() - t0
    report(2, "sphere constants", exact and worst <= 1e-6 and dt < 5,
           f"exact={exact}, quadrature |diff| = {worst:.2e}, {dt:.2f} s")


def test_criterion_03_weight_optimality():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    violations = 0
    for _ in range(100):
        k, km, X = random_problem(rng)
        w = bc_weights(k, km, X)
        best = wce_squared(k, km, X, w)
        uni = wce_squared(k, km, X, np.full(len(X), 1.0 / len(X)))
        pert = wce_squared(k, km, X, w + 1e-3 * rng.standard_normal(len(X)))
        violations += (best > uni + 1e-12) + (best > pert + 1e-12)
    dt = time.perf_counter() - t0
    report(3, "weight optimality", violations == 0 and dt < 10, f"{violations} violations, {dt:.2f} s")


def test_criterion_04_variance_equals_wce():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        k, km, X = random_problem(rng)
        post = bc_posterior(k, km, X, rng.standard_normal(len(X)))
        worst = max(worst, abs(post.variance - wce_squared(k, km, X, post.weights)))
    report(4, "variance = WCE^2", worst <= 1e-10, f"max |diff| = {worst:.2e}")


def test_criterion_05_convergence_slopes(tmp_path):
    t0 = time.perf_counter()
    res = _run("convergence", {"d": 1, "m_min": 2, "m_max": 10, "sigma": 0.005, "lam": 1.0, "plot": 0}, tmp_path)
    dt = time.perf_counter() - t0
    slopes = res.summary["slopes"]
    # the five-dimensional run is recorded only
    hi = _run("convergence", {"d": 5, "m_min": 2, "m_max": 10, "sigma": 1.0, "lam": 0.5, "plot": 0},
              tmp_path, "d5")
    print("d=5 slopes (recorded):", {a: round(s, 3) for a, s in hi.summary["slopes"].items()})
    ok = all(slopes[a] <= -(a - 0.2) for a in (1.5, 2.5, 3.5)) and dt < 60
    detail = ", ".join(f"alpha={a:g}: {s:.3f} (need <= {-(a - 0.2):.1f})" for a, s in slopes.items())
    report(5, "convergence slopes d=1", ok, f"{detail}, {dt:.1f} s")


def test_criterion_06_sphere_rate(tmp_path):
    t0 = time.perf_counter()
    res = _run("convergence", {"kernel": "sphere", "plot": 0}, tmp_path)
    dt = time.perf_counter() - t0
    s = res.summary["slopes"][1.5]
    report(6, "sphere rate", s <= -0.6 and dt < 60, f"slope {s:.3f}, {dt:.1f} s")


def test_criterion_07_approx_conservative():
    rng = np.random.default_rng(7)
    violations = 0
    for i in range(50):
        k, km, X = random_problem(rng)
        f = rng.standard_normal(len(X))
        exact = bc_posterior(k, km, X, f)
        approx = approx_bc_posterior(k, empirical_mean(k, sample(km.measure, 400, 100 + i)), X, f)
        violations += approx.variance < exact.variance
    report(7, "approximate mean is conservative", violations == 0, f"{violations} violations in 50")


def test_criterion_08_student_t():
    rng = np.random.default_rng(8)
    worst_mean = worst_scale = 0.0
    dof_ok = True
    for _ in range(100):
        # two double-precision paths agree to about cond(K) * 1e-16
        k, km, X = unit_amplitude_problem(rng, max_cond=1e6)
        f = rng.standard_normal(len(X))
        g = bc_posterior(k, km, X, f)
        t = bc_posterior_studentt(k, km, X, f)
        # independent path: dense solve against the explicit Gram matrix
        K = k(X)
        z = km.mean_at(X)
        a = np.linalg.solve(K, f)
        b = np.linalg.solve(K, z)
        scale2 = float(f @ a) / len(X) * (km.initial_error() - float(z @ b))
        worst_mean = max(worst_mean, abs(t.mean - g.mean))
        worst_scale = max(worst_scale, abs(t.variance - scale2) / max(scale2, 1.0))
        dof_ok &= t.dof == len(X)
    ok = worst_mean <= 1e-12 and dof_ok and worst_scale <= 1e-10
    report(8, "Student-t marginal", ok,
           f"mean diff {worst_mean:.1e}, dof ok={dof_ok}, scale diff {worst_scale:.1e}")


def test_criterion_09_coverage(tmp_path):
    t0 = time.perf_counter()
    res = _run("coverage", {"test_fn": "f1", "d": 1, "n_grid": 500, "gamma_grid": 0.05,
                            "replicates": 200, "plot": 0}, tmp_path)
    rows = _rows(res.files["coverage.csv"])
    cov = float(rows[0]["coverage"])
    small = _run("coverage", {"test_fn": "f2", "d": 1, "n_grid": "20,50", "gamma_grid": 0.05,
                              "replicates": 50, "plot": 0}, tmp_path, "f2")
    print("f2 small-n 95% coverage (recorded):",
          [(r["n"], r["coverage"]) for r in _rows(small.files["coverage.csv"])])
    dt = time.perf_counter() - t0
    report(9, "coverage f1 d=1 n=500", cov >= 0.90 and dt < 600, f"coverage {cov:.3f}, {dt:.0f} s")


def test_criterion_10_ti_oracle():
    t0 = time.perf_counter()
    hits, worst = 0, 0.0
    for seed in range(20):
        model, truth, _ = conjugate_gaussian_model(seed=seed)
        post = run_ti(model, 10, 200, seed=seed, dim=1)
        lo, hi = post.interval(0.05)
        hits += lo <= truth <= hi
        # outer weights act on g / pi; fold the density into them
        v = post.weights / importance_density(post.schedule.t)
        prop = float(v @ post.Sigma @ v)
        worst = max(worst, abs(post.logZ_var - (post.logZ_var_outer + post.logZ_var_propagated)),
                    abs(post.logZ_var_propagated - prop), abs(post.logZ_mean - float(v @ post.mu)))
    dt = time.perf_counter() - t0
    report(10, "TI oracle", hits >= 16 and worst <= 1e-10 and dt < 300,
           f"{hits}/20 covered, decomposition diff {worst:.1e}, {dt:.0f} s")


def test_criterion_11_random_effects(tmp_path):
    t0 = time.perf_counter()
    res = _run("randeff", {"plot": 0}, tmp_path)
    dt = time.perf_counter() - t0
    rows = _rows(res.files["randeff.csv"])
    frac = sum(r["covered"] == "1" for r in rows) / len(rows)
    err = {int(r["n"]): abs(float(r["estimate"]) - float(r["truth_proxy"])) for r in rows}
    ok = frac >= 0.6 and err[2**12] < err[2**4] and dt < 600
    report(11, "random effects", ok,
           f"covered {frac:.2f}, error {err[2**4]:.2e} -> {err[2**12]:.2e}, {dt:.0f} s")


DETERMINISM = [
    ("coverage", {"n_grid": "20,40", "replicates": "3"}),
    ("convergence", {"m_max": "7"}),
    ("randeff", {"m_max": "6", "truth_m": "10", "d": "10"}),
    ("sphere", {}),
    ("ti", {"max_active": "1", "n_per_rung": "60", "draws": "20"}),
    ("estimate", {"n": "40"}),
]


def test_criterion_12_determinism(tmp_path):
    mismatched = []
    for exp, raw in DETERMINISM:
        a = run_experiment(build_config(exp, raw, str(tmp_path / exp / "a"), seed=11))
        b = run_experiment(build_config(exp, raw, str(tmp_path / exp / "b"), seed=11), threads=2)
        for name, path in a.files.items():
            if not name.endswith(".csv"):
                continue
            with open(path, "rb") as fa, open(b.files[name], "rb") as fb:
                if fa.read() != fb.read():
                    mismatched.append(name)
    report(12, "determinism", not mismatched,
           f"{len(DETERMINISM)} experiments rerun, mismatches: {mismatched or 'none'}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
