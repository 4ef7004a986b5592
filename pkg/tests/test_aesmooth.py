import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from forgelab.aesmooth import (
    eps_max,
    k1_grid_volume,
    k1_volume_sandwich,
    kink_probe,
    nonsmooth_planes,
    plane_count_cap,
    point_on_plane,
)
from forgelab.errors import InvalidThickening


def test_count_cap_small():
    assert plane_count_cap(1, 1) == 3
    hp = nonsmooth_planes(np.array([[0.3, 1.0]]), np.array([[2.0]]))
    assert len(hp) <= 3


def test_identity_example_normals():
    hp = nonsmooth_planes(np.eye(2), np.array([[1.0, 1.0]]))
    N = np.abs(hp.normals)
    assert any(np.allclose(n, [1, 0]) for n in N)
    assert any(np.allclose(n, [0, 1]) for n in N)
    assert any(np.allclose(n, [1, 1] / np.sqrt(2)) for n in N)


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.integers(2, 3))
def test_planes_unit_and_capped(seed, n0, n1, d):
    rng = np.random.default_rng(seed)
    hp = nonsmooth_planes(rng.standard_normal((n0, d)), rng.standard_normal((n1, n0)))
    assert len(hp) <= plane_count_cap(n0, n1)
    np.testing.assert_allclose(np.linalg.norm(hp.normals, axis=1), 1.0, atol=1e-12)


def test_kinks_on_planes_and_smooth_off_planes():
    rng = np.random.default_rng(3)
    for _ in range(10):
        W0, W1, v = rng.standard_normal((2, 2)), rng.standard_normal((2, 2)), rng.standard_normal(2)
        y = 0.1
        hp = nonsmooth_planes(W0, W1, v)
        for k in np.flatnonzero(hp.kinked):
            z = hp.witnesses[k]
            jump, floor = kink_probe(W0, W1, v, y, z, hp.normals[k])
            assert jump > 10 * floor
        for _ in range(20):
            z = rng.uniform(-1, 1, 2)
            if np.min(np.abs(hp.normals @ z)) < 1e-3:
                continue
            jump, floor = kink_probe(W0, W1, v, y, z, rng.standard_normal(2))
            assert jump <= floor


def test_point_on_plane_lies_on_plane():
    rng = np.random.default_rng(0)
    W0, W1 = rng.standard_normal((2, 2)), rng.standard_normal((1, 2))
    hp = nonsmooth_planes(W0, W1)
    for k in range(len(hp)):
        if not hp.realized[k]:
            continue
        z = point_on_plane(W0, hp, k, rng, W1=W1)
        if z is not None:
            assert abs(hp.normals[k] @ z) < 1e-9


def test_sandwich_limit_and_order():
    lo, up = k1_volume_sandwich(1.0, 1e-9, 2, 2, 3)
    assert lo == pytest.approx(up, rel=1e-6)
    with pytest.raises(InvalidThickening):
        k1_volume_sandwich(1.0, 1.0, 1, 1, 2)


@given(st.floats(0.5, 3), st.floats(1e-4, 0.2), st.integers(1, 3), st.integers(1, 3), st.integers(1, 5))
def test_sandwich_ordering(R, frac, n0, n1, d):
    lo, up = k1_volume_sandwich(R, frac * R, n0, n1, d)
    assert lo <= up


def test_sandwich_small_example_against_grid():
    lo, up = k1_volume_sandwich(1.0, 0.01, 1, 1, 2)
    want = math.pi * (1 + 2 * 0.01**2) - 2 * 0.01 * 3 * math.sqrt(math.pi) / math.gamma(1.5)
    assert lo == pytest.approx(want, rel=1e-12)
    ang = np.array([0.3, 1.4, 2.5])
    normals = np.column_stack([np.cos(ang), np.sin(ang)])
    grid = k1_grid_volume(normals, 1.0, 0.01, 2000)
    assert lo <= grid <= up
    assert grid == pytest.approx(lo, rel=0.02)


def test_eps_max_examples():
    assert eps_max(2.0, 1.0) == 0.5
    assert eps_max(0.1, 100.0) == pytest.approx(0.005)
    assert eps_max(1e-6, 1.0) < 1e-11
