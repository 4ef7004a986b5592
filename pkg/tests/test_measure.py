import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from forgelab import models as M
from forgelab.errors import (
    AllZeroOuterWeights,
    CoverTooLarge,
    DimensionTooLarge,
    EpsilonTooLarge,
    InadmissibleTightRegime,
)
from forgelab.forging import ForgeQuery
from forgelab.measure import (
    ball_volume,
    binomial_sum,
    bound_lr,
    bound_nn,
    estimate_lipschitz_L,
    general_bound,
    grid_lipschitz,
    grid_volume_oracle,
    lattice_cover,
    local_linearization_check,
    mc_volume,
    nullity,
    sample_ball,
    smooth_volume_bound,
)

LR2 = M.linear_regression(2)


def _query(eps, **kw):
    return ForgeQuery(LR2, [1, 0], M.Datum([0.5, 0], 0.0), eps, 1.0, **kw)


def test_ball_volume_known_values():
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)


def test_sample_ball_inside(rng):
    P = sample_ball(rng, 5000, 3, 2.0, np.array([1.0, 0, 0]))
    assert np.all(np.linalg.norm(P - [1, 0, 0], axis=1) <= 2.0)


def test_mc_saturated_set():
    q = _query(100.0)
    est = mc_volume(q, 5000, 1)
    assert est.mean == pytest.approx(est.domain_volume)
    assert est.half_width == 0.0


def test_mc_zero_epsilon_rejected_or_zero():
    with pytest.raises(ValueError):
        mc_volume(_query(0.0), 5000, 1)
    assert grid_volume_oracle(_query(0.0), 100) == 0.0


def test_mc_matches_grid_oracle():
    q = _query(0.1)
    est = mc_volume(q, 10**6, 11, shards=4, threads=2)
    grid = grid_volume_oracle(q, 200)
    # boundary layer: one cell thickness over the box surface, generous
    layer = 4 * 2 * (2 / 200) * 2
    assert abs(est.mean - grid) <= 3 * est.half_width + layer * 0.05


def test_mc_deterministic_across_threads():
    q = _query(0.1)
    a = mc_volume(q, 50_000, 5, shards=4, threads=1)
    b = mc_volume(q, 50_000, 5, shards=4, threads=4)
    assert a.hits == b.hits


def test_grid_oracle_full_and_empty():
    q = _query(100.0)
    full = grid_volume_oracle(q, 60)
    assert full == pytest.approx(q_volume := ball_volume(2) * 2.0, rel=0.05)
    assert 0 <= full <= q_volume * 1.05
    with pytest.raises(DimensionTooLarge):
        grid_volume_oracle(ForgeQuery(M.linear_regression(4), [1, 0, 0, 0], M.Datum([0.5, 0, 0, 0], 0.0), 0.1, 1.0), 10)


def test_bound_lr_loose_value():
    assert bound_lr(2, 1.0, 0.1).value == pytest.approx(0.4 * math.pi)
    assert bound_lr(2, 1.0, 0.0).value == 0.0


def test_bound_lr_tight_independent_form():
    d, R, eps, A, c = 3, 1.0, 0.05, 1.0, 1.5
    assert math.sin(c * eps) > eps / A
    rep = bound_lr(d, R, eps, A=A, tight=True, c=c)
    alt = 8 / (d - 1) ** 2 * math.pi ** ((d - 1) / 2) * R ** (d - 1) / gamma((d - 1) / 2) * (c * eps) ** d
    assert rep.regime == "tight"
    assert rep.value == pytest.approx(alt, rel=1e-12)
    assert bound_lr(d, R, 0.0, A=A, tight=True, c=c).value == 0.0


def test_bound_lr_tight_inadmissible():
    with pytest.raises(InadmissibleTightRegime):
        bound_lr(2, 1.0, 0.5, A=1.0, tight=True, c=1.0)


@given(st.integers(2, 6), st.floats(0.5, 3), st.floats(0.2, 5), st.floats(0.01, 0.9), st.floats(0, 1))
def test_tight_forms_agree(d, R, A, frac, cpos):
    c = (1 / A) + cpos * (math.pi / (2 * A) - 1 / A)
    eps = frac * 0.05 * A
    if not math.sin(c * eps) > eps / A:
        return
    rep = bound_lr(d, R, eps, A=A, tight=True, c=c)
    alt = 8 / (d - 1) ** 2 * math.pi ** ((d - 1) / 2) * R ** (d - 1) / gamma((d - 1) / 2) * (c * eps) ** d
    assert rep.value == pytest.approx(alt, rel=1e-12)


def test_binomial_sum_identity():
    assert binomial_sum(3, 5) == 8
    assert binomial_sum(3, 2) == 7


def test_bound_nn_loose_value():
    rep = bound_nn(2, 3, 1.0, 0.1, [0.5, -1.0, 2.0])
    assert rep.value == pytest.approx(5.6 * math.pi)


def test_bound_nn_all_zero_weights():
    with pytest.raises(AllZeroOuterWeights):
        bound_nn(2, 3, 1.0, 0.1, [0, 0, 0])


def test_nullity_examples():
    r = nullity(np.array([[2.0, 0, -1], [0, 1, 0]]))
    assert (r.rank, r.nullity) == (2, 1)
    z = nullity(np.zeros((3, 4)))
    assert (z.rank, z.nullity) == (0, 4)


@given(st.integers(0, 10_000))
def test_nullity_rank_sum_and_tolerance_invariance(seed):
    rng = np.random.default_rng(seed)
    w, z = rng.standard_normal(3), rng.standard_normal(3)
    t = float(w @ z) + rng.choice([-1, 1]) * rng.uniform(0.1, 2)
    mv = M.mixed_second_variation(M.linear_regression(3), w, M.Datum(z, t), True)
    reps = [nullity(mv, tf) for tf in (1e-10, 1e-8, 1e-6)]
    assert all(r.rank + r.nullity == 4 for r in reps)
    assert len({r.nullity for r in reps}) == 1
    assert reps[0].nullity <= 2


def test_lipschitz_constant_mixed_is_zero():
    m = M.quadratic(2)
    w = np.array([0.3, -0.2])
    L = estimate_lipschitz_L(m, (w, w), (-np.ones(2), np.ones(2)), 500, 1, label=1.0)
    assert L / 1.5 < 1e-8


def test_grid_and_sampled_lipschitz_agree():
    m = M.tanh_net(3, 2)
    w = 0.5 * np.random.default_rng(0).standard_normal(m.n_params)
    at = lambda p: M.mixed_second_variation(m, w, M.Datum(p, 0.3)).matrix  # noqa: E731
    Lg = grid_lipschitz(at, np.zeros(2), 1.0, 60)
    Ls = estimate_lipschitz_L(m, (w, w), (-np.ones(2), np.ones(2)), 2000, 1, label=0.3)
    assert 0.7 < Lg / Ls < 1.3


def test_smooth_bound_exponent_arithmetic():
    b1 = smooth_volume_bound(2, 1.0, math.pi, 0.01, 0, 0)
    b2 = smooth_volume_bound(2, 1.0, math.pi, 0.04, 0, 0)
    assert b2 / b1 == pytest.approx(4.0)


def test_general_bound_report_fields():
    m = M.tanh_net(3, 2)
    w = 0.5 * np.random.default_rng(0).standard_normal(m.n_params)
    rep = general_bound(m, w, M.Datum([0.4, -0.2], 0.3), np.zeros(2), 1.0, 0.05, 1.0)
    assert rep.regime == "general"
    assert rep.inputs["exponent"] == pytest.approx((2 - rep.inputs["r_max"]) / 2)
    assert rep.value > 0
    with pytest.raises(EpsilonTooLarge):
        general_bound(m, w, M.Datum([0.4, -0.2], 0.3), np.zeros(2), 1.0, 0.6, 1.0)


def test_general_bound_nullity_zero_exponent():
    # n_params = 9 > d, so generic points have full column rank: exponent d/2 = 1
    m = M.tanh_net(3, 2)
    w = np.random.default_rng(1).standard_normal(m.n_params)
    rep = general_bound(m, w, M.Datum([0.4, -0.2], 0.3), np.zeros(2), 1.0, 0.01, 1.0)
    assert rep.inputs["r_max"] == 0
    assert rep.inputs["exponent"] == 1.0


def test_lattice_cover_covers_ball(rng):
    rho = 0.2
    C = lattice_cover(np.zeros(2), 1.0, rho)
    P = sample_ball(rng, 4000, 2, 1.0)
    d = np.min(np.linalg.norm(P[:, None, :] - C[None, :, :], axis=2), axis=1)
    assert np.all(d <= rho + 1e-12)
    with pytest.raises(CoverTooLarge):
        lattice_cover(np.zeros(3), 1.0, 1e-3, max_centers=1000)


def test_local_linearization_examples(rng):
    m = M.linear_regression(2)
    w = rng.standard_normal(2)
    z = M.Datum([0.3, 0.1], 0.2)
    lhs, rhs, ok = local_linearization_check(m, w, z, z, 1.0, True)
    assert lhs == 0 and rhs == 0 and ok
    # LR with label: M0 is affine in (z, t) with slope bounded by 2||(w, -1)||
    L = 2.0 * np.linalg.norm(np.append(w, -1.0)) * 1.5
    for _ in range(200):
        a = M.Datum(rng.uniform(-0.7, 0.7, 2), rng.uniform(-0.7, 0.7))
        b = M.Datum(rng.uniform(-0.7, 0.7, 2), rng.uniform(-0.7, 0.7))
        assert local_linearization_check(m, w, a, b, L, True)[2]
