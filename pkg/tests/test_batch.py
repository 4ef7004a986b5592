import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from forgelab import models as M
from forgelab.batch import (
    BatchForgeQuery,
    batch_bound,
    batch_case,
    batch_eps_forge_test,
    batch_mc_volume,
    batch_mixed_matrix,
    batch_residuals,
    block_norm_sides,
)
from forgelab.errors import EpsilonTooLarge
from forgelab.forging import ForgeQuery, eps_forge_test
from forgelab.measure import ball_volume, nullity, smooth_volume_bound

TANH = M.tanh_net(3, 2)


def _w(seed=0):
    return 0.5 * np.random.default_rng(seed).standard_normal(TANH.n_params)


def test_duplicated_points_give_equal_blocks():
    w = _w()
    z = M.Datum([0.2, -0.4], 0.3)
    bm = batch_mixed_matrix(TANH, w, [z, z], 2)
    ref = M.mixed_second_variation(TANH, w, z).matrix / 2
    np.testing.assert_array_equal(bm.block(0), ref)
    np.testing.assert_array_equal(bm.block(1), ref)


def test_single_point_reduction():
    w = _w()
    z = M.Datum([0.2, -0.4], 0.3)
    np.testing.assert_array_equal(batch_mixed_matrix(TANH, w, [z], 1).matrix,
                                  M.mixed_second_variation(TANH, w, z).matrix)


def test_all_replacements_equal_target():
    q = BatchForgeQuery(TANH, _w(), M.Datum([0.2, -0.4], 0.3), 3, 5, 0.0)
    assert batch_eps_forge_test(q, [q.target] * 3) == (True, 0.0)


def test_cancelling_pair_lr_1d():
    # f = (z w - y)^2 / 2 with w = 1, y = 0: gradient z^2; z* = 1 gives 1
    m = M.linear_regression(1)
    q = BatchForgeQuery(m, [1.0], M.Datum([1.0], 0.0), 2, 2, 1e-12)
    exact = M.Datum([-1.0], 0.0)  # same gradient as the target
    ok, r = batch_eps_forge_test(q, [exact, M.Datum([1.0], 0.0)])
    assert ok and r == 0.0
    # one over-shoot and one under-shoot whose residual vectors cancel
    hi, lo = M.Datum([np.sqrt(1.5)], 0.0), M.Datum([np.sqrt(0.5)], 0.0)
    ok, r = batch_eps_forge_test(q, [hi, lo])
    assert ok and r < 1e-12


def test_full_batch_replacement_matches_mean_gradient(rng):
    m = M.linear_regression(2)
    w = rng.standard_normal(2)
    tgt = M.Datum([0.3, 0.5], 0.1)
    reps = [M.Datum(rng.uniform(-1, 1, 2), 0.1) for _ in range(4)]
    q = BatchForgeQuery(m, w, tgt, 4, 4, 1.0)
    _, r = batch_eps_forge_test(q, reps)
    mean = np.mean([M.grad_w(m, w, z) for z in reps], axis=0)
    assert r == pytest.approx(np.linalg.norm(M.grad_w(m, w, tgt) - mean), abs=1e-14)
    Z = np.array([z.features for z in reps]).reshape(1, -1)
    assert batch_residuals(q, Z)[0] == pytest.approx(r, abs=1e-14)


def test_case_selection():
    assert batch_case(2, 2, 3) == 2
    assert batch_case(1, 3, 3) == 1
    assert batch_case(2, 1, 5) == 3


def test_single_point_bound_reduction():
    rep = batch_bound(1, 2, 9, np.pi, 1.0, 1, 0.05, r_min=0, r_max=0)
    assert rep.value == pytest.approx(smooth_volume_bound(2, 1.0, np.pi, 0.05, 0, 0), rel=1e-12)


def test_batch_bound_rejects_large_epsilon():
    with pytest.raises(EpsilonTooLarge):
        batch_bound(2, 1, 1, 4.0, 100.0, 2, 0.02)


def test_batch_bound_dominates_lr_toy():
    m = M.linear_regression(1)
    q = BatchForgeQuery(m, [1.0], M.Datum([0.5], 0.0), 2, 2, 1e-3)
    est = batch_mc_volume(q, 200_000, 3)
    rep = batch_bound(2, 1, 1, ball_volume(1) ** 2, 100.0, 2, 1e-3)
    assert rep.flags["nullity_floor"] == 1
    assert est.mean - est.half_width <= rep.value


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_block_norm_inequality(seed, m, rows, cols):
    rng = np.random.default_rng(seed)
    blocks = [rng.standard_normal((rows, cols)) for _ in range(m)]
    lhs, rhs = block_norm_sides(blocks)
    assert lhs <= rhs + 1e-12


def test_rank_nullity_range_at_batch_points(rng):
    w = _w()
    m, d, n = 2, 2, TANH.n_params
    for _ in range(200):
        pts = [M.Datum(rng.uniform(-1, 1, d), 0.3) for _ in range(m)]
        r = nullity(batch_mixed_matrix(TANH, w, pts, 4).matrix)
        assert max(m * d - n, 0) <= r.nullity < m * d


def test_batch_query_validates():
    with pytest.raises(ValueError):
        BatchForgeQuery(TANH, _w(), M.Datum([0.2, -0.4], 0.3), 3, 2, 0.1)


def test_m1_b1_residual_matches_single():
    w = _w()
    tgt = M.Datum([0.2, -0.4], 0.3)
    q = BatchForgeQuery(TANH, w, tgt, 1, 1, 0.1)
    q1 = ForgeQuery(TANH, w, tgt, 0.1, 1.0, with_label=False)
    z = M.Datum([0.5, 0.1], 0.3)
    assert batch_eps_forge_test(q, [z])[1] == pytest.approx(eps_forge_test(q1, z)[1], abs=1e-15)
