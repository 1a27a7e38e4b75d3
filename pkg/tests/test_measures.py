import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probcub.exceptions import ArgumentError, UnsupportedError
from probcub.measures import (
    Empirical,
    GaussianMixture,
    PowerPosterior,
    UniformBox,
    UniformSphere,
    log_density,
    sample,
)


def test_unit_box_log_density():
    assert log_density(UniformBox([0.0], [1.0]), [0.5]) == 0.0


def test_wide_box_log_density():
    assert log_density(UniformBox([-5.0], [5.0]), [0.0]) == pytest.approx(math.log(0.1), abs=1e-15)


def test_standard_normal_mode():
    gm = GaussianMixture.standard_normal(1)
    assert log_density(gm, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-14)


def test_box_density_integrates_to_one():
    box = UniformBox([-1.0, 2.0], [3.0, 2.5])
    g = np.linspace(0, 1, 201)
    X = np.stack(np.meshgrid(-1 + 4 * g, 2 + 0.5 * g, indexing="ij"), -1).reshape(-1, 2)
    dens = np.exp([log_density(box, x) for x in X]).reshape(201, 201)
    total = np.trapezoid(np.trapezoid(dens, 0.5 * g, axis=1), 4 * g)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_box_outside_is_minus_inf():
    assert log_density(UniformBox([0.0], [1.0]), [1.5]) == -np.inf


def test_dimension_mismatch():
    with pytest.raises(ArgumentError):
        log_density(UniformBox([0.0, 0.0], [1.0, 1.0]), [0.5])


def test_empirical_has_no_density():
    with pytest.raises(UnsupportedError):
        log_density(Empirical(np.array([[0.0], [1.0]])), [0.0])


def test_power_posterior_not_sampleable():
    pp = PowerPosterior(lambda x: -float(x @ x), lambda x: 0.0, 0.5)
    with pytest.raises(UnsupportedError):
        sample(pp, 3, 0)


def test_power_posterior_is_tempered():
    pp = PowerPosterior(lambda x: -2.0 * float(x @ x), lambda x: -1.0, 0.25)
    assert log_density(pp, [1.0]) == pytest.approx(-1.5)


def test_invalid_measures():
    with pytest.raises(ArgumentError):
        UniformBox([1.0], [0.0])
    with pytest.raises(ArgumentError):
        GaussianMixture([0.5, 0.6], np.zeros((2, 1)), np.ones((2, 1, 1)))
    with pytest.raises(ArgumentError):
        Empirical(np.zeros((2, 1)), [1.0, np.inf])


def test_empirical_allows_negative_weights():
    e = Empirical(np.array([[0.0], [1.0]]), [1.5, -0.5])
    assert e.weights[1] == -0.5


def test_uniform_box_sample_mean():
    X = sample(UniformBox([0.0], [1.0]), 10**5, 7)
    assert abs(X.mean() - 0.5) < 0.01


def test_sphere_samples_unit_norm():
    X = sample(UniformSphere(2), 10**4, 3)
    assert np.max(np.abs(np.linalg.norm(X, axis=1) - 1.0)) <= 1e-12


def test_sphere_samples_symmetric():
    n = 10**4
    X = sample(UniformSphere(2), n, 11)
    assert np.linalg.norm(X.mean(0)) <= 4 / math.sqrt(n)


def test_empirical_samples_in_support():
    P = np.array([[0.1], [0.4], [0.9]])
    X = sample(Empirical(P), 3, 5)
    assert all(np.any(np.all(P == x, axis=1)) for x in X)


@given(st.integers(0, 2**32 - 1), st.integers(1, 50))
def test_sample_is_pure(seed, n):
    gm = GaussianMixture([0.3, 0.7], [[0.0, 1.0], [2.0, -1.0]], [np.eye(2), 0.5 * np.eye(2)])
    assert np.array_equal(sample(gm, n, seed), sample(gm, n, seed))
