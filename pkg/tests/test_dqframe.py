import math

import numpy as np
import pytest

from emtsim.dqframe import LAMBDA, abc_to_0dq, dq0_to_abc, inverse_park_matrix, park_matrix


def test_lambda():
    assert LAMBDA == 2.0 * math.pi / 3.0


def test_stationary_rows():
    p = park_matrix(0.0)
    np.testing.assert_allclose(p[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(p[1], [2 / 3, -1 / 3, -1 / 3], atol=1e-15)
    np.testing.assert_allclose(p[2], [0, -1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)


def test_balanced_set():
    np.testing.assert_allclose(abc_to_0dq(0.0, [1, -0.5, -0.5]), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(dq0_to_abc(0.0, [0, 1, 0]), [1, -0.5, -0.5], atol=1e-15)


def test_matrix_identities_random_angles():
    rng = np.random.default_rng(11)
    for theta in rng.uniform(-10, 10, size=100):
        np.testing.assert_allclose(park_matrix(theta) @ inverse_park_matrix(theta), np.eye(3), atol=1e-12)
        x = rng.normal(size=3)
        np.testing.assert_allclose(dq0_to_abc(theta, abc_to_0dq(theta, x)), x, atol=1e-12)


def test_balanced_rotating_set_maps_to_circle():
    # a balanced abc set is a constant-magnitude phasor in the stationary frame
    for wt in np.linspace(0, 2 * math.pi, 13):
        abc = [math.cos(wt), math.cos(wt - LAMBDA), math.cos(wt + LAMBDA)]
        z, d, q = abc_to_0dq(0.0, abc)
        assert z == pytest.approx(0.0, abs=1e-15)
        assert math.hypot(d, q) == pytest.approx(1.0, rel=1e-14)
