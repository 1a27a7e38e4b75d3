import math
import os
import sys

import numpy as np
import pytest

from probcub.exceptions import ConfigError
from probcub.harness import build_config, run_experiment
from probcub.harness.cli import main
from probcub.harness.config import describe_keys, parse_text
from probcub.harness.experiments import cell_seed, model_posterior_draws, packaged_designs
from probcub.harness.external import ExternalIntegrand, ExternalIntegrandError
from probcub.harness import testfns


def run(exp, tmp_path, name="out", **raw):
    cfg = build_config(exp, {k: str(v) for k, v in raw.items()}, str(tmp_path / name))
    return run_experiment(cfg)


def read_csv(path):
    with open(path) as fh:
        return [line.rstrip("\n").split(",") for line in fh]


# --- config ---------------------------------------------------------------


def test_parse_text_comments_and_duplicates():
    assert parse_text("a = 1  # note\n\n# skip\nb=x,y\n", "estimate") == {"a": "1", "b": "x,y"}
    with pytest.raises(ConfigError):
        parse_text("a = 1\na = 2\n", "estimate")
    with pytest.raises(ConfigError):
        parse_text("just words\n", "estimate")


def test_build_config_validation():
    cfg = build_config("coverage", {"d": "2"})
    assert cfg["replicates"] == 50 and cfg["seed"] == 0
    assert build_config("coverage", {})["replicates"] == 200
    for bad in ({"n_grid": "50, 20"}, {"replicates": "0"}, {"bogus": "1"}, {"d": "two"}, {"gamma_grid": "1.5"}):
        with pytest.raises(ConfigError):
            build_config("coverage", bad)
    with pytest.raises(ConfigError):
        build_config("nope", {})
    with pytest.raises(ConfigError):
        build_config("estimate", {}, seed=2**64)


def test_every_key_documented():
    text = describe_keys()
    from probcub.harness.config import KEYS

    for exp, keys in KEYS.items():
        for k in keys:
            assert f"    {k} (" in text


# --- CLI ------------------------------------------------------------------


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "g.cfg"
    good.write_text("n = 0\n")
    assert main(["estimate", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    bad = tmp_path / "b.cfg"
    bad.write_text("n = -1\n")
    assert main(["estimate", "--config", str(bad)]) == 2
    assert main(["estimate", "--config", str(tmp_path / "missing.cfg")]) == 4
    pts = tmp_path / "p.cfg"
    pts.write_text(f"generator = file\npoints_file = {tmp_path / 'none.csv'}\n")
    assert main(["estimate", "--config", str(pts), "--out", str(tmp_path / "o2")]) == 4
    design = tmp_path / "s.cfg"
    design.write_text(f"design_dir = {tmp_path / 'empty'}\n")
    os.makedirs(tmp_path / "empty")
    assert main(["sphere", "--config", str(design), "--out", str(tmp_path / "o3")]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["bogus", "--config", str(good)])
    assert exc.value.code == 2


def test_cli_numerical_error_code(tmp_path, monkeypatch):
    from probcub.exceptions import ConditioningError
    from probcub.harness import experiments

    def boom(cfg, threads=1):
        raise ConditioningError("singular")

    monkeypatch.setitem(experiments.RUNNERS, "estimate", boom)
    cfg = tmp_path / "g.cfg"
    cfg.write_text("")
    assert main(["estimate", "--config", str(cfg)]) == 3


def test_cli_seed_override(tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("n = 20\nseed = 1\n")
    main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "9"])
    rows = dict(read_csv(tmp_path / "a" / "estimate.csv"))
    assert rows["seed"] == "9"


def test_cell_seed_is_stable():
    assert cell_seed(0, 1, 2) == cell_seed(0, 1, 2) != cell_seed(0, 2, 1)


# --- estimate -------------------------------------------------------------


def test_estimate_prior_when_empty(tmp_path):
    res = run("estimate", tmp_path, n=0, sigma=0.8)
    from probcub.kernelmeans import KernelMean
    from probcub.kernels import MaternTP
    from probcub.measures import UniformBox

    k = MaternTP(3.5, 0.8, 1.0, dim=1)
    ie = KernelMean(k, UniformBox([-5.0], [5.0])).initial_error()
    assert res.summary["estimate"] == 0.0 and res.summary["variance"] == pytest.approx(ie, rel=1e-14)


def test_estimate_reports_dedup(tmp_path):
    X = np.random.default_rng(0).uniform(-5, 5, (25, 1))
    path = tmp_path / "pts.csv"
    np.savetxt(path, np.vstack([X, X, X[:5]]), delimiter=",", header="x1", comments="")
    res = run("estimate", tmp_path, generator="file", points_file=path)
    assert res.summary["n_dropped"] == 30 and res.summary["n"] == 25


def test_estimate_f1_coverage(tmp_path):
    truth = testfns.test_function_truth("f1", 1)
    hits = 0
    for seed in range(50):
        res = run("estimate", tmp_path, name=f"s{seed}", n=200, gamma=0.01, seed=seed)
        hits += res.summary["lo"] <= truth <= res.summary["hi"]
    assert hits >= 45


def test_estimate_unsupported_pair(tmp_path):
    from probcub.exceptions import UnsupportedPairError

    with pytest.raises(UnsupportedPairError):
        run("estimate", tmp_path, measure="gaussian", n=30)
    res = run("estimate", tmp_path, name="emp", measure="gaussian", n=30, allow_empirical=1)
    assert res.summary["kernel_mean"] == "empirical+bound" and res.summary["mean_error_bound"] > 0


def test_external_integrand_matches_builtin(tmp_path):
    script = tmp_path / "ev.py"
    script.write_text(
        "import sys, math\n"
        "for line in sys.stdin:\n"
        "    x = [float(v) for v in line.split()]\n"
        "    print(repr(math.exp(math.sin(5 * x[0]) ** 2 - sum(v * v for v in x))), flush=True)\n"
    )
    X = np.random.default_rng(1).uniform(-5, 5, (30, 2))
    ext = ExternalIntegrand([sys.executable, str(script)])
    assert np.allclose(ext(X), testfns.test_function("f1")(X), rtol=1e-15, atol=0)


def test_external_integrand_failures(tmp_path):
    bad = tmp_path / "bad.py"
    bad.write_text("import sys\nfor line in sys.stdin:\n    print('oops', flush=True)\n")
    with pytest.raises(ExternalIntegrandError):
        ExternalIntegrand([sys.executable, str(bad)])(np.zeros((2, 1)))
    status = tmp_path / "status.py"
    status.write_text("import sys\nfor line in sys.stdin:\n    print(1.0, flush=True)\nsys.exit(3)\n")
    with pytest.raises(ExternalIntegrandError):
        ExternalIntegrand([sys.executable, str(status)])(np.zeros((2, 1)))


# --- coverage and convergence ---------------------------------------------


def test_coverage_csv_schema(tmp_path):
    res = run("coverage", tmp_path, n_grid="20,40", replicates=4, gamma_grid="0.05,0.5")
    rows = read_csv(res.files["coverage.csv"])
    assert rows[0] == ["test_fn", "d", "n", "gamma", "replicates", "coverage"]
    assert len(rows) == 1 + 2 * 2
    half = [r for r in rows[1:] if r[3] == "0.5"]
    assert half and all(0 <= float(r[5]) <= 1 for r in half)


def test_coverage_refuses_high_dimension(tmp_path):
    with pytest.raises(ConfigError):
        run("coverage", tmp_path, d=4, replicates=1, n_grid=10)


def test_convergence_wce_monotone_on_nested_nets(tmp_path):
    res = run("convergence", tmp_path, alphas="1.5,3.5", m_min=1, m_max=7, sigma=0.1, plot=0)
    rows = read_csv(res.files["convergence.csv"])
    assert rows[0] == ["kernel", "alpha", "generator", "d", "n", "wce", "jitter_used"]
    for a in ("1.5", "3.5"):
        w = [float(r[5]) for r in rows[1:] if r[1] == a]
        assert all(v > 0 for v in w)
        assert all(b <= a_ * (1 + 1e-10) for a_, b in zip(w, w[1:]))


def test_convergence_sobolev_runs(tmp_path):
    res = run("convergence", tmp_path, kernel="sobolev", alphas="1,2", d=3, m_min=2, m_max=6, plot=0)
    slopes = read_csv(res.files["convergence_slopes.csv"])
    assert all(float(r[4]) < 0 for r in slopes[1:])


# --- sphere ---------------------------------------------------------------


def test_lower_hemisphere_is_zero():
    f = testfns.illumination_integrand(testfns.make_radiance(3))
    W = np.random.default_rng(0).standard_normal((500, 3))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    vals = f(W)
    assert np.all(vals[W[:, 2] <= 0] == 0) and np.all(vals[W[:, 2] > 0] > 0)


def test_sphere_truth_oracle_converged():
    f = testfns.illumination_integrand(testfns.make_radiance(3))
    a = testfns.sphere_truth(f, 256, 512)
    b = testfns.sphere_truth(f, 384, 768)
    assert np.allclose(a, b, rtol=1e-10)


def test_sphere_bqmc_covers_everywhere(tmp_path):
    res = run("sphere", tmp_path, plot=0)
    rows = read_csv(res.files["sphere.csv"])
    bq = [r for r in rows[1:] if r[3] == "BQMC"]
    assert len(bq) == 3 * len(packaged_designs())
    assert all(r[8] == "1" for r in bq)
    assert all(float(r[5]) <= float(r[4]) <= float(r[6]) for r in bq)


def test_sphere_bqmc_beats_mc():
    from probcub.cubature import bc_posterior_studentt
    from probcub.kernelmeans import KernelMean
    from probcub.kernels import SphereSobolev32
    from probcub.measures import UniformSphere
    from probcub.pointsets import load_sphere_design, mc_points

    D = load_sphere_design(packaged_designs()[-1])
    k = SphereSobolev32()
    km = KernelMean(k, UniformSphere(2))
    wins = 0
    for seed in range(10):
        f = testfns.illumination_integrand(testfns.make_radiance(seed))
        truth = testfns.sphere_truth(f)[0]
        bq = bc_posterior_studentt(k, km, D.points, f(D.points)[:, 0]).mean
        mc = f(mc_points(UniformSphere(2), D.n, seed).points)[:, 0].mean()
        wins += abs(bq - truth) < abs(mc - truth)
    assert wins >= 8


# --- TI -------------------------------------------------------------------


def test_model_posterior_draws_sum_to_one():
    P = model_posterior_draws([-10.0, -11.0, -30.0], [0.1, 0.5, 2.0], [0.0, -1.0, -1.0], 1000, 0)
    assert P.shape == (1000, 3) and np.max(np.abs(P.sum(1) - 1)) <= 1e-12


def test_ti_experiment_outputs(tmp_path):
    res = run("ti", tmp_path, max_active=1, n_per_rung=60, draws=20, plot=0)
    rows = read_csv(res.files["ti_models.csv"])
    for r in rows[1:]:
        assert float(r[6]) == float(r[4]) + float(r[5])
        assert float(r[7]) <= float(r[3]) <= float(r[8])
    draws = np.array(read_csv(res.files["ti_posterior_draws.csv"])[1:], dtype=float)[:, 1:]
    assert np.max(np.abs(draws.sum(1) - 1)) <= 1e-12


def test_quadrature_evidence_oracle():
    data = testfns.LogisticData(200, 5, 1)
    for active in [(0,), (1,), (0, 2)]:
        a = data.log_evidence_quadrature(active, nodes=60)
        b = data.log_evidence_quadrature(active, nodes=120)
        assert a == pytest.approx(b, abs=1e-8)


def test_ti_finds_generating_model():
    hits, close = 0, 0
    for ds in range(10):
        cfg = build_config("ti", {"data_seed": str(ds), "draws": "200", "plot": "0"}, "/tmp/unused")
        p = cfg.params
        data = testfns.LogisticData(p["n_data"], p["covariates"], ds)
        from probcub.harness.experiments import _ti_cell

        models = data.models(2)
        outs = [_ti_cell((i, a, p)) for i, a in enumerate(models)]
        means = np.array([o[0] for o in outs])
        var = np.array([o[1] + o[2] for o in outs])
        lp = np.array([-len(a) * math.log(5) for a in models])
        post = model_posterior_draws(means, var, lp, 1000, ds).mean(0)
        hits += models.index((0,)) in np.argsort(-post)[:2]
        oracle = data.log_evidence_quadrature((0,))
        close += abs(means[models.index((0,))] - oracle) <= 3 * math.sqrt(var[models.index((0,))]) + 0.1
    assert hits >= 7
    assert close >= 7


# --- determinism ----------------------------------------------------------


@pytest.mark.parametrize("exp,raw", [
    ("coverage", {"n_grid": "20,40", "replicates": "3"}),
    ("convergence", {"m_max": "6"}),
    ("randeff", {"m_max": "6", "truth_m": "10", "d": "10"}),
    ("sphere", {}),
    ("ti", {"max_active": "1", "n_per_rung": "60", "draws": "20"}),
    ("estimate", {"n": "30"}),
])
def test_rerun_is_bitwise_identical(exp, raw, tmp_path):
    a = run_experiment(build_config(exp, raw, str(tmp_path / "a"), seed=5))
    b = run_experiment(build_config(exp, raw, str(tmp_path / "b"), seed=5))
    for name, path in a.files.items():
        with open(path, "rb") as fa, open(b.files[name], "rb") as fb:
            assert fa.read() == fb.read(), name
