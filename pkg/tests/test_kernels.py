import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from probcub.exceptions import ArgumentError, ConditioningError, UnsupportedError
from probcub.kernels import (
    Brownian,
    ExpQuadratic,
    MaternTP,
    SphereSobolev32,
    WeightedSobolev,
    bernoulli_poly,
    factorize,
    gram,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def _sphere_pts(rng, n):
    X = rng.standard_normal((n, 3))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _families(d=2):
    return [
        (MaternTP(1.5, 0.7, 1.3, dim=d), "box"),
        (MaternTP(2.5, [0.4, 1.1], 1.0), "box"),
        (MaternTP(3.5, 0.5, 2.0, dim=d), "box"),
        (ExpQuadratic(0.6, 1.5, dim=d), "box"),
        (WeightedSobolev.order_dependent(2, d, 2), "box"),
        (WeightedSobolev(1, d, {(): 1.0, (0,): 0.5, (0, 1): 0.25}), "box"),
        (SphereSobolev32(), "sphere"),
        (Brownian(), "line"),
    ]


def _pts(kind, rng, n, d=2):
    if kind == "sphere":
        return _sphere_pts(rng, n)
    if kind == "line":
        return rng.random((n, 1))
    return rng.random((n, d))


def test_sphere_diagonal():
    x = np.array([[0.0, 0.6, 0.8]])
    assert SphereSobolev32()(x)[0, 0] == pytest.approx(8 / 3, abs=1e-15)


def test_brownian_min():
    assert Brownian().eval([0.3], [0.7]) == pytest.approx(0.3)


def test_sobolev_hand_value():
    k = WeightedSobolev(1, 1, {(): 1.0, (0,): 1.0})
    assert k.eval([0.0], [0.0]) == pytest.approx(1 + 0.25 + 1 / 12, abs=1e-14)


def test_bernoulli_polynomials():
    assert np.allclose(bernoulli_poly(1), [-0.5, 1.0])
    assert np.allclose(bernoulli_poly(2), [1 / 6, -1.0, 1.0])


def test_single_point_gram(rng):
    for k, kind in _families():
        X = _pts(kind, rng, 1)
        assert k(X).shape == (1, 1)
        assert k(X)[0, 0] == pytest.approx(k.eval(X[0], X[0]), rel=1e-14)


def test_brownian_gram_table():
    K = Brownian()(np.array([[0.25], [0.5], [1.0]]))
    assert np.array_equal(K, [[0.25, 0.25, 0.25], [0.25, 0.5, 0.5], [0.25, 0.5, 1.0]])


def test_matern_gram_psd_before_jitter(rng):
    X = rng.random((20, 1))
    K = MaternTP(1.5, 1.0, 1.0, dim=1)(X)
    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_symmetry_exact(rng):
    for k, kind in _families():
        X, Y = _pts(kind, rng, 1000), _pts(kind, rng, 1000)
        a = np.array([k.eval(x, y) for x, y in zip(X[:200], Y[:200])])
        b = np.array([k.eval(y, x) for x, y in zip(X[:200], Y[:200])])
        assert np.array_equal(a, b), k
        assert np.array_equal(k(X, Y), k(Y, X).T), k


def test_gram_psd_many(rng):
    for k, kind in _families():
        for _ in range(50 // len(_families()) + 1):
            X = _pts(kind, rng, int(rng.integers(2, 31)))
            K = k(X)
            assert np.linalg.eigvalsh(K).min() >= -1e-8 * max(1.0, np.abs(K).max()), k


def test_matern_tensor_factorisation(rng):
    sig = np.array([0.3, 0.8, 1.7])
    k = MaternTP(2.5, sig, 2.5)
    X, Y = rng.random((40, 3)), rng.random((40, 3))
    prod = np.ones((40, 40))
    for i in range(3):
        prod *= MaternTP(2.5, sig[i], 1.0, dim=1)(X[:, [i]], Y[:, [i]])
    assert np.max(np.abs(k(X, Y) - 2.5 * prod)) <= 1e-12


@pytest.mark.parametrize("alpha,poly", [(1.5, lambda s: 1 + s), (2.5, lambda s: 1 + s + s * s / 3),
                                        (3.5, lambda s: 1 + s + 2 * s * s / 5 + s**3 / 15)])
def test_matern_scalar_formula(alpha, poly):
    sigma, r = 0.7, np.linspace(0, 3, 31)
    s = math.sqrt(2 * alpha) * r / sigma
    k = MaternTP(alpha, sigma, 1.0, dim=1)
    got = k(np.zeros((1, 1)), r[:, None])[0]
    assert np.allclose(got, poly(s) * np.exp(-s), rtol=1e-13, atol=0)


def test_matern_against_bessel():
    from scipy.special import gamma, kv

    alpha, sigma = 2.5, 0.9
    r = np.linspace(0.05, 3, 20)
    s = math.sqrt(2 * alpha) * r / sigma
    ref = 2 ** (1 - alpha) / gamma(alpha) * s**alpha * kv(alpha, s)
    got = MaternTP(alpha, sigma, 1.0, dim=1)(np.zeros((1, 1)), r[:, None])[0]
    assert np.allclose(got, ref, rtol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5, 6])
@pytest.mark.parametrize("alpha", [1, 2])
def test_sobolev_order_two_brute_force(d, alpha, rng):
    k = WeightedSobolev.order_dependent(alpha, d, 2)
    X, Y = rng.random((15, d)), rng.random((12, d))
    brute = np.zeros((15, 12))
    for size in range(3):
        for u in itertools.combinations(range(d), size):
            term = np.ones((15, 12))
            for i in u:
                term *= k.factor(X[:, [i]], Y[:, [i]].T)
            brute += term
    assert np.max(np.abs(k(X, Y) - brute)) <= 1e-12 * max(1.0, np.abs(brute).max())


def test_sobolev_subset_map_matches_order_form(rng):
    d = 4
    a = WeightedSobolev.order_dependent(2, d, 2, weights=[1.0, 0.5, 0.25])
    b = WeightedSobolev(2, d, a.expand_weights())
    X = rng.random((10, d))
    assert np.allclose(a(X), b(X), rtol=1e-13, atol=1e-14)


def test_sobolev_symmetric_gram_path(rng):
    k = WeightedSobolev.order_dependent(2, 7, 2)
    X = rng.random((70, 7))
    assert np.allclose(k(X), k(X, X.copy()), rtol=1e-13, atol=1e-14)


def test_sobolev_refuses_high_order_in_high_dimension():
    with pytest.raises(UnsupportedError):
        WeightedSobolev.order_dependent(1, 25, 4)


def test_domain_errors():
    with pytest.raises(ArgumentError):
        Brownian()(np.array([[1.5]]))
    with pytest.raises(ArgumentError):
        SphereSobolev32()(np.array([[1.0, 1.0, 0.0]]))
    with pytest.raises(ArgumentError):
        WeightedSobolev.order_dependent(1, 1)(np.array([[-0.1]]))


def test_jitter_reported_and_bounded():
    K = np.ones((5, 5))
    G = factorize(K)
    assert 0 < G.jitter <= 1e-6 * np.trace(K) / 5
    with pytest.raises(ConditioningError):
        factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_gram_no_jitter_when_spd(rng):
    G = gram(MaternTP(1.5, 0.3, 1.0, dim=1), rng.random((10, 1)))
    assert G.jitter == 0.0


@given(arrays(float, 3, elements=unit), arrays(float, 3, elements=unit))
def test_sobolev_symmetry_property(x, y):
    k = WeightedSobolev.order_dependent(3, 3, 3)
    assert k.eval(x, y) == k.eval(y, x)
    assert k.eval(x, x) >= 0


@given(st.floats(0.05, 5.0), st.floats(0.1, 10.0))
def test_amplitude_scales_linearly(sigma, lam):
    X = np.linspace(0, 1, 7)[:, None]
    a = MaternTP(3.5, sigma, 1.0, dim=1)
    assert np.allclose(a.with_amplitude(lam)(X), lam * a(X), rtol=1e-14)
