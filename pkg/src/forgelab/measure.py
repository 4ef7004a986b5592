"""Volumes of forging sets: Monte Carlo and grid estimates, closed-form bounds, nullity, Lipschitz constants."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb, gammaln

from . import models as M
from .errors import (
    AllZeroOuterWeights,
    CoverTooLarge,
    DimensionTooLarge,
    EpsilonTooLarge,
    InadmissibleTightRegime,
    NonSmoothPoint,
)
from .forging import ForgeQuery, residuals
from .models import Datum, ModelSpec

MC_CHUNK = 1 << 17
GRID_CHUNK = 1 << 20
MAX_GRID_CELLS = 10**8
MAX_COVER = 10**6
LIPSCHITZ_SAFETY = 1.5


@dataclass(frozen=True)
class VolumeEstimate:
    mean: float
    half_width: float
    samples: int
    seed: int
    domain_volume: float
    hits: int = 0


@dataclass(frozen=True)
class BoundReport:
    value: float
    regime: str
    inputs: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NullityReport:
    singular_values: np.ndarray
    rank: int
    nullity: int
    tolerance: float


def ball_volume(d: int, R: float = 1.0) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)) * R**d


def sample_ball(rng: np.random.Generator, count: int, d: int, radius: float = 1.0, center=None) -> np.ndarray:
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / d)
    out = g * r[:, None]
    if center is not None:
        out += np.asarray(center, dtype=float)[None, :]
    return out


def shard_seeds(seed: int, shards: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(int(seed)).spawn(shards)


def mc_hit_count(draw, member, samples: int, seed: int, shards: int = 1, threads: int = 1) -> int:
    """Count members among ``samples`` draws split over ``shards`` independent streams.

    ``draw(rng, k)`` returns ``k`` samples, ``member(batch)`` a boolean mask.
    The count depends only on (seed, samples, shards); ``threads`` only
    changes wall-clock time.
    """
    shards = max(1, int(shards))
    sizes = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]

    def run(ss, size):
        rng = np.random.default_rng(ss)
        hits = 0
        left = size
        while left > 0:
            k = min(MC_CHUNK, left)
            hits += int(np.count_nonzero(member(draw(rng, k))))
            left -= k
        return hits

    seeds = shard_seeds(seed, shards)
    if threads > 1 and shards > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return sum(ex.map(run, seeds, sizes))
    return sum(run(s, k) for s, k in zip(seeds, sizes))


def binomial_estimate(hits: int, samples: int, scale: float, seed: int) -> VolumeEstimate:
    p = hits / samples
    half = 3.0 * math.sqrt(p * (1.0 - p) / samples) * scale
    return VolumeEstimate(p * scale, half, samples, int(seed), scale, hits)


def domain_volume(query: ForgeQuery) -> float:
    v = ball_volume(query.model.d, query.radius)
    if query.with_label:
        v *= 2.0 * query.label_radius
    return v


def draw_domain(query: ForgeQuery):
    d = query.model.d

    def draw(rng, k):
        X = sample_ball(rng, k, d, query.radius, query.center)
        if query.with_label:
            t = query.label_center + query.label_radius * (2.0 * rng.random(k) - 1.0)
            return np.column_stack([X, t])
        return X

    return draw


def member_fn(query: ForgeQuery):
    d = query.model.d

    def member(P):
        if query.with_label:
            return residuals(query, P[:, :d], P[:, d]) <= query.epsilon
        return residuals(query, P) <= query.epsilon

    return member


def mc_volume(query: ForgeQuery, samples: int, seed: int, shards: int = 1, threads: int = 1) -> VolumeEstimate:
    """Hit-or-miss estimate of the forging-set volume inside the query's domain."""
    if samples < 1000:
        raise ValueError("mc_volume needs at least 1000 samples")
    if query.epsilon <= 0:
        raise ValueError("epsilon must be positive; the exact forging set has measure zero")
    hits = mc_hit_count(draw_domain(query), member_fn(query), samples, seed, shards, threads)
    return binomial_estimate(hits, samples, domain_volume(query), seed)


def grid_volume_oracle(query: ForgeQuery, cells_per_axis: int, restrict=None) -> float:
    """Midpoint-rule volume: member cell centres inside the domain times cell volume.

    ``restrict``, if given, maps an ``(N, dim)`` array of cell centres to a
    boolean mask and further limits the counted region.
    """
    d = query.model.d
    if d > 3:
        raise DimensionTooLarge(f"grid oracle supports at most 3 feature dimensions, got {d}")
    dim = query.data_dim
    if cells_per_axis**dim > MAX_GRID_CELLS:
        raise DimensionTooLarge(f"{cells_per_axis}^{dim} cells exceeds {MAX_GRID_CELLS}")
    R = query.radius
    axes = [query.center[i] - R + (np.arange(cells_per_axis) + 0.5) * (2 * R / cells_per_axis) for i in range(d)]
    cell = (2 * R / cells_per_axis) ** d
    if query.with_label:
        T = query.label_radius
        axes.append(query.label_center - T + (np.arange(cells_per_axis) + 0.5) * (2 * T / cells_per_axis))
        cell *= 2 * T / cells_per_axis
    member = member_fn(query)
    total = cells_per_axis**dim
    count = 0
    for start in range(0, total, GRID_CHUNK):
        idx = np.arange(start, min(start + GRID_CHUNK, total))
        P = np.empty((idx.size, dim))
        rem = idx
        for k in range(dim - 1, -1, -1):
            rem, q = np.divmod(rem, cells_per_axis)
            P[:, k] = axes[k][q]
        inside = np.sum((P[:, :d] - query.center[None, :]) ** 2, axis=1) < R * R
        if restrict is not None:
            inside &= restrict(P)
        if np.any(inside):
            count += int(np.count_nonzero(member(P[inside])))
    return count * cell


def _tight_ok(eps: float, A: float, c: float) -> bool:
    return 1.0 / A <= c <= math.pi / (2.0 * A) and eps / A < math.sin(c * eps)


def bound_lr(d: int, R: float, eps: float, A: float | None = None, tight: bool = False,
             c: float | None = None) -> BoundReport:
    """Closed-form volume bound for the linear-regression forging set in ``B_R x R``.

    Loose regime: ``2d/(d-1) vol(B_R)/R eps``. Tight regime (requires
    ``c in [1/A, pi/(2A)]`` and ``eps/A < sin(c eps)``):
    ``4d/(sqrt(pi)(d-1)^2) Gamma(d/2)/Gamma((d-1)/2) vol(B_R)/R (c eps)^d``.
    """
    if d <= 1:
        raise ValueError("the bound needs d > 1")
    base = ball_volume(d, R) / R
    inputs = {"d": d, "R": R, "epsilon": eps, "A": A, "c": c}
    if not tight:
        return BoundReport(2.0 * d / (d - 1) * base * eps, "loose", inputs)
    if A is None or c is None or A <= 0:
        raise InadmissibleTightRegime("tight regime needs A > 0 and c")
    if eps > 0 and not _tight_ok(eps, A, c):
        raise InadmissibleTightRegime(f"need c in [1/A, pi/(2A)] and eps/A < sin(c eps); got A={A}, c={c}, eps={eps}")
    const = 4.0 * d / (math.sqrt(math.pi) * (d - 1) ** 2) * math.exp(gammaln(d / 2) - gammaln((d - 1) / 2))
    return BoundReport(const * base * (c * eps) ** d, "tight", inputs)


def binomial_sum(n: int, d: int) -> int:
    return int(sum(comb(n, k, exact=True) for k in range(0, min(n, d) + 1)))


def bound_nn(d: int, n: int, R: float, eps: float, v, tight: bool = False, A_min: float | None = None,
             c: float | None = None) -> BoundReport:
    """Volume bound for the one-layer ReLU forging set; also reports the width-simplified forms."""
    if d <= 1:
        raise ValueError("the bound needs d > 1")
    v = np.asarray(v, dtype=float)
    nz = np.abs(v[v != 0])
    if nz.size == 0:
        raise AllZeroOuterWeights("every outer weight is zero")
    vmin = float(nz.min())
    patterns = binomial_sum(n, d)
    base = ball_volume(d, R) / R
    inputs = {"d": d, "n": n, "R": R, "epsilon": eps, "min_abs_v": vmin, "patterns": patterns, "A_min": A_min, "c": c}
    flags = {}
    if d >= n:
        flags["patterns_closed_form"] = 2**n
    wide = (d + 1) * (math.e * n / d) ** d if d <= n else None
    if not tight:
        value = 2.0 * d / (d - 1) * base / vmin * patterns * eps
        if wide is not None:
            flags["wide_net_value"] = 2.0 * d / (d - 1) * base / vmin * wide * eps
        return BoundReport(value, "loose", inputs, flags)
    if A_min is None or c is None or A_min <= 0:
        raise InadmissibleTightRegime("tight regime needs A_min > 0 and c")
    if eps > 0 and not _tight_ok(eps, A_min, c):
        raise InadmissibleTightRegime(f"need c in [1/A, pi/(2A)] and eps/A < sin(c eps); got A={A_min}, c={c}")
    const = 4.0 * d / (math.sqrt(math.pi) * (d - 1) ** 2) * math.exp(gammaln(d / 2) - gammaln((d - 1) / 2))
    value = const * base * (c / vmin) ** d * patterns * eps**d
    if wide is not None:
        flags["wide_net_value"] = const * base * (c / vmin) ** d * wide * eps**d
    return BoundReport(value, "tight", inputs, flags)


def nullity(M0, tol_factor: float | None = None) -> NullityReport:
    """Numerical rank and kernel dimension: singular values above ``tol_factor * s_max`` count."""
    A = np.asarray(getattr(M0, "matrix", M0), dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = A.shape
    if tol_factor is None:
        tol_factor = 1e-8 * max(rows, cols)
    s = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    tol = tol_factor * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > tol)) if s.size and s[0] > 0 else 0
    return NullityReport(s, rank, cols - rank, float(tol))


def _datum_from(p: np.ndarray, d: int, with_label: bool, label) -> Datum:
    return Datum(p[:d], p[d]) if with_label else Datum(p, label)


def _mixed_at(model, w, p, d, with_label, label):
    return M.mixed_second_variation(model, w, _datum_from(p, d, with_label, label), with_label).matrix


def sampled_lipschitz(matrix_at, lo, hi, samples: int, seed: int, perturbation: float = 1e-3,
                      safety: float = LIPSCHITZ_SAFETY) -> float:
    """``safety`` times the largest ``||F(p1) - F(p2)||_op / ||p1 - p2||`` over sampled pairs in a box.

    Even-numbered pairs are two independent uniform draws; odd-numbered pairs
    perturb a uniform draw by a step of relative size ``perturbation``.
    Degenerate box sides (``lo == hi``) stay frozen. Draws that land on a
    non-smooth point are resampled, up to 100 times in a row.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = hi - lo
    free = span > 0
    scale = perturbation * max(float(np.linalg.norm(span)), 1e-12)

    def uniform():
        for _ in range(100):
            p = lo + span * rng.random(lo.size)
            try:
                return p, matrix_at(p)
            except NonSmoothPoint:
                continue
        raise NonSmoothPoint("100 consecutive draws hit the non-smooth set")

    def nearby(p):
        for _ in range(100):
            step = rng.standard_normal(lo.size) * free
            step *= scale / max(np.linalg.norm(step), 1e-300)
            q = np.clip(p + step, lo, hi)
            try:
                return q, matrix_at(q)
            except NonSmoothPoint:
                continue
        raise NonSmoothPoint("100 consecutive perturbations hit the non-smooth set")

    best = 0.0
    for k in range(samples):
        p1, M1 = uniform()
        p2, M2 = uniform() if k % 2 == 0 else nearby(p1)
        dist = float(np.linalg.norm(p1 - p2))
        if dist > 0:
            best = max(best, float(np.linalg.norm(M1 - M2, 2)) / dist)
    return safety * best


def estimate_lipschitz_L(model: ModelSpec, param_box, data_box, samples: int, seed: int,
                         with_label: bool = False, label=None, perturbation: float = 1e-3,
                         safety: float = LIPSCHITZ_SAFETY) -> float:
    """Sampled Lipschitz constant of the mixed variation over ``D1 x D2``, times ``safety``.

    ``param_box`` and ``data_box`` are ``(lo, hi)`` pairs; a degenerate box
    (``lo == hi``) freezes those coordinates. With ``with_label`` the last
    data coordinate is the label.
    """
    plo, phi = (np.asarray(b, dtype=float) for b in param_box)
    dlo, dhi = (np.asarray(b, dtype=float) for b in data_box)
    P = plo.size
    d = model.d

    def at(p):
        return _mixed_at(model, p[:P], p[P:], d, with_label, label)

    return sampled_lipschitz(at, np.concatenate([plo, dlo]), np.concatenate([phi, dhi]), samples, seed,
                             perturbation, safety)


def grid_lipschitz(matrix_at, center, radius: float, cells_per_axis: int = 200,
                   safety: float = LIPSCHITZ_SAFETY) -> float:
    """``safety`` times the largest neighbour difference quotient of ``matrix_at`` on a grid over a ball.

    Neighbours are taken along every axis and every pair-diagonal, so for a
    fine grid the quotient tracks the directional derivative in all of those
    directions. Only used for ``d <= 3``; non-smooth nodes are skipped.
    """
    c = np.asarray(center, dtype=float)
    d = c.size
    if d > 3:
        raise DimensionTooLarge(f"grid Lipschitz needs d <= 3, got {d}")
    h = 2.0 * radius / cells_per_axis
    ax = np.arange(cells_per_axis + 1)
    idx = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = c - radius + h * idx
    inside = np.linalg.norm(pts - c, axis=1) <= radius * (1 + 1e-12)
    vals = {}
    for i, p in zip(map(tuple, idx[inside]), pts[inside]):
        try:
            vals[i] = np.asarray(matrix_at(p), dtype=float)
        except NonSmoothPoint:
            continue
    offs = [np.eye(d, dtype=int)[k] for k in range(d)]
    for a in range(d):
        for b in range(a + 1, d):
            offs += [offs[a] + offs[b], offs[a] - offs[b]]
    best = 0.0
    for o in offs:
        step = h * float(np.linalg.norm(o))
        for i, M1 in vals.items():
            M2 = vals.get(tuple(np.add(i, o)))
            if M2 is not None:
                best = max(best, float(np.linalg.norm(M1 - M2, 2)) / step)
    return safety * best


def smooth_volume_bound(dim: int, L: float, vol_domain: float, eps: float, r_min: int, r_max: int) -> float:
    """``1/2 (8 sqrt(9L/2))^dim (sqrt(2/L)/4)^r_min vol Gamma(dim/2+1)/pi^(dim/2) eps^((dim-r_max)/2)``."""
    log = (
        math.log(0.5)
        + dim * math.log(8.0 * math.sqrt(4.5 * L))
        + r_min * math.log(0.25 * math.sqrt(2.0 / L))
        + math.log(vol_domain)
        + gammaln(dim / 2.0 + 1.0)
        - 0.5 * dim * math.log(math.pi)
    )
    return math.exp(log) * eps ** ((dim - r_max) / 2.0)


def lattice_cover(center, radius: float, rho: float, max_centers: int = MAX_COVER) -> np.ndarray:
    """Centres of an axis-aligned lattice whose cells (side ``2 rho / sqrt(dim)``) meet the ball.

    Every cell fits inside the ``rho``-ball around its centre, so the balls
    cover the domain. Centres falling outside the domain are pulled radially
    onto its boundary.
    """
    center = np.asarray(center, dtype=float)
    dim = center.size
    side = 2.0 * rho / math.sqrt(dim)
    k = int(math.ceil(radius / side - 0.5))
    offsets = np.arange(-k, k + 1) * side
    count = offsets.size**dim
    if count > max_centers:
        raise CoverTooLarge(f"lattice would need {count} > {max_centers} centres")
    grid = np.stack(np.meshgrid(*([offsets] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    # nearest point of each cell to the centre
    near = np.sign(grid) * np.maximum(np.abs(grid) - side / 2.0, 0.0)
    grid = grid[np.linalg.norm(near, axis=1) < radius]
    norms = np.linalg.norm(grid, axis=1)
    over = norms > radius
    grid[over] *= (radius / norms[over])[:, None]
    return grid + center[None, :]


def general_bound(model: ModelSpec, params, target: Datum, center, radius: float, eps: float, L: float,
                  with_label: bool = False, tol_factor: float | None = None) -> BoundReport:
    """Cover-based volume bound for a smooth loss on the ball ``D2 = B(center, radius)``.

    Nullities come from one lattice ``sqrt(2 eps / L)``-cover. Only centres
    that eps-forge the target enter the min/max nullity; if none do, all
    centres are used and ``flags['fallback_all_centers']`` is set.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if eps >= 1.0 / (2.0 * L):
        raise EpsilonTooLarge(f"need eps < 1/(2L) = {1.0 / (2.0 * L):.4g}, got {eps}")
    center = np.asarray(center, dtype=float)
    dim = center.size
    rho = math.sqrt(2.0 * eps / L)
    centers = lattice_cover(center, radius, rho)
    w = np.asarray(getattr(params, "flat", params), dtype=float)
    g_target = M.grad_w(model, w, target)
    d = model.d
    rs, forging = [], []
    for p in centers:
        dt = _datum_from(p, d, with_label, target.label)
        rs.append(nullity(M.mixed_second_variation(model, w, dt, with_label), tol_factor).nullity)
        forging.append(np.linalg.norm(M.grad_w(model, w, dt) - g_target) <= eps)
    rs = np.array(rs)
    forging = np.array(forging)
    fallback = not forging.any()
    pool = rs if fallback else rs[forging]
    r_min, r_max = int(pool.min()), int(pool.max())
    vol = ball_volume(dim, radius)
    value = smooth_volume_bound(dim, L, vol, eps, r_min, r_max)
    inputs = {"d": dim, "n": model.n_params, "R": radius, "epsilon": eps, "L": L, "vol_D2": vol,
              "r_min": r_min, "r_max": r_max, "centers": int(centers.shape[0]),
              "forging_centers": int(forging.sum()), "exponent": (dim - r_max) / 2.0}
    return BoundReport(value, "general", inputs, {"fallback_all_centers": bool(fallback)})


def local_linearization_check(model: ModelSpec, params, z_star: Datum, z: Datum, L: float,
                              with_label: bool = False) -> tuple[float, float, bool]:
    """``||M0(z*)(z* - z)||`` against ``||grad f(z*) - grad f(z)|| + L/2 ||z* - z||^2``."""
    w = np.asarray(getattr(params, "flat", params), dtype=float)
    M0 = M.mixed_second_variation(model, w, z_star, with_label).matrix
    dz = z_star.coords(with_label) - z.coords(with_label)
    lhs = float(np.linalg.norm(M0 @ dz))
    gap = float(np.linalg.norm(M.grad_w(model, w, z_star) - M.grad_w(model, w, z)))
    rhs = gap + 0.5 * L * float(dz @ dz)
    return lhs, rhs, lhs <= rhs + 1e-12
