"""Batch forging: block mixed variations, batch residuals, block Lipschitz constants and batch volume bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models as M
from .errors import EpsilonTooLarge, ShapeMismatch, ZeroTargetGradient
from .measure import (
    BoundReport,
    VolumeEstimate,
    ball_volume,
    binomial_estimate,
    mc_hit_count,
    sample_ball,
    sampled_lipschitz,
    smooth_volume_bound,
)
from .models import Datum, ModelSpec


@dataclass(frozen=True, eq=False)
class BatchForgeQuery:
    """Replace ``m`` of the ``B`` batch slots occupied by ``target``; forging lives in ``R^(m d)``.

    Replacement features range over ``B(center, radius)``; labels stay fixed
    at the target's.
    """

    model: ModelSpec
    params: np.ndarray
    target: Datum
    m: int
    B: int
    epsilon: float
    radius: float = 1.0
    center: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", np.asarray(getattr(self.params, "flat", self.params), dtype=float))
        if not 1 <= self.m <= self.B:
            raise ValueError(f"need 1 <= m <= B, got m={self.m}, B={self.B}")
        if self.epsilon < 0 or self.radius <= 0:
            raise ValueError("epsilon must be nonnegative and radius positive")
        c = np.zeros(self.model.d) if self.center is None else np.asarray(self.center, dtype=float)
        if c.shape != (self.model.d,):
            raise ShapeMismatch("center", (self.model.d,), c.shape)
        object.__setattr__(self, "center", c)
        if not np.any(M.grad_w(self.model, self.params, self.target)):
            raise ZeroTargetGradient("target gradient is zero")

    @property
    def dim(self) -> int:
        return self.m * self.model.d

    @property
    def label(self) -> float:
        return M._label(self.model, self.target)


@dataclass(frozen=True)
class BlockMixedMatrix:
    matrix: np.ndarray
    m: int
    d: int
    B: int

    def block(self, j: int) -> np.ndarray:
        return self.matrix[:, j * self.d:(j + 1) * self.d]


def batch_mixed_matrix(model: ModelSpec, params, points, B: int) -> BlockMixedMatrix:
    """``(1/B) [M0(z_1) | ... | M0(z_m)]`` with feature-only mixed variations."""
    blocks = [M.mixed_second_variation(model, params, p, False).matrix for p in points]
    return BlockMixedMatrix(np.hstack(blocks) / B, len(blocks), model.d, B)


def block_norm_sides(blocks) -> tuple[float, float]:
    """``(||[A_1|...|A_m]||, sqrt(sum ||A_i||^2))`` in operator norm."""
    lhs = float(np.linalg.norm(np.hstack(blocks), 2))
    rhs = float(np.sqrt(sum(np.linalg.norm(A, 2) ** 2 for A in blocks)))
    return lhs, rhs


def batch_residuals(query: BatchForgeQuery, Z: np.ndarray) -> np.ndarray:
    """Residuals for rows of ``Z`` with shape ``(N, m, d)`` or ``(N, m*d)``."""
    d = query.model.d
    Z = np.asarray(Z, dtype=float).reshape(-1, query.m, d)
    N = Z.shape[0]
    y = np.full(N * query.m, query.label)
    G = M.grad_w_batch(query.model, query.params, Z.reshape(-1, d), y).reshape(N, query.m, -1)
    g = M.grad_w(query.model, query.params, query.target)
    return np.linalg.norm((query.m * g[None, :] - G.sum(axis=1)) / query.B, axis=1)


def batch_eps_forge_test(query: BatchForgeQuery, replacements) -> tuple[bool, float]:
    """``||(1/B) sum_j (grad f(z*) - grad f(z~_j))|| <= eps`` for the given replacements."""
    if len(replacements) != query.m:
        raise ShapeMismatch("replacements", query.m, len(replacements))
    g = M.grad_w(query.model, query.params, query.target)
    total = np.zeros_like(g)
    for z in replacements:
        total += g - M.grad_w(query.model, query.params, z)
    r = float(np.linalg.norm(total / query.B))
    return r <= query.epsilon, r


def batch_case(m: int, d: int, n: int) -> int:
    if d >= n:
        return 1
    if m * d >= n:
        return 2
    return 3


def batch_bound(m: int, d: int, n: int, vol_domain: float, L: float, B: int, eps: float,
                r_min: int | None = None, r_max: int | None = None) -> BoundReport:
    """Volume bound on the batch forging set in ``R^(m d)`` with Lipschitz constant ``L/B``.

    ``value`` is the cover bound evaluated with the supplied nullities;
    missing ones default to the rank-nullity floor (``max(md - n, 0)``) and
    the almost-everywhere ceiling ``md - 1``. ``flags['case_value']`` holds
    the case display, which replaces ``r_min`` by that floor.
    """
    if L <= 0 or B < 1 or m < 1:
        raise ValueError("need L > 0, B >= 1, m >= 1")
    if eps >= B / (2.0 * L):
        raise EpsilonTooLarge(f"need eps < B/(2L) = {B / (2.0 * L):.4g}, got {eps}")
    md = m * d
    case = batch_case(m, d, n)
    floor = max(md - n, 0) if case in (1, 2) else 0
    r_min = floor if r_min is None else int(r_min)
    r_max = md - 1 if r_max is None else int(r_max)
    value = smooth_volume_bound(md, L / B, vol_domain, eps, r_min, r_max)
    case_value = smooth_volume_bound(md, L / B, vol_domain, eps, floor, r_max)
    inputs = {"m": m, "d": d, "n": n, "md": md, "B": B, "L": L, "L_batch": L / B, "epsilon": eps,
              "vol_D2m": vol_domain, "r_min": r_min, "r_max": r_max, "exponent": (md - r_max) / 2.0}
    flags = {"case": case, "case_value": case_value, "nullity_floor": floor}
    return BoundReport(value, f"batch-case-{case}", inputs, flags)


def estimate_block_lipschitz(model: ModelSpec, params, data_box, m: int, B: int, samples: int, seed: int,
                             label=None, perturbation: float = 1e-3) -> float:
    """Sampled Lipschitz constant of ``X -> (1/B)[M0(z_1)|...|M0(z_m)]`` over the box ``D2^m`` (fixed w)."""
    lo, hi = (np.asarray(b, dtype=float) for b in data_box)
    d = model.d
    w = np.asarray(getattr(params, "flat", params), dtype=float)

    def at(p):
        pts = [Datum(p[j * d:(j + 1) * d], label) for j in range(m)]
        return batch_mixed_matrix(model, w, pts, B).matrix

    return sampled_lipschitz(at, np.tile(lo, m), np.tile(hi, m), samples, seed, perturbation)


def batch_mc_volume(query: BatchForgeQuery, samples: int, seed: int, shards: int = 1,
                    threads: int = 1) -> VolumeEstimate:
    """Hit-or-miss volume of the batch forging set inside ``B(center, radius)^m``."""
    if samples < 1000:
        raise ValueError("batch_mc_volume needs at least 1000 samples")
    d = query.model.d

    def draw(rng, k):
        return sample_ball(rng, k * query.m, d, query.radius, query.center).reshape(k, query.m * d)

    def member(Z):
        return batch_residuals(query, Z) <= query.epsilon

    hits = mc_hit_count(draw, member, samples, seed, shards, threads)
    return binomial_estimate(hits, samples, ball_volume(d, query.radius) ** query.m, seed)
