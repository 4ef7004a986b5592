"""Exact and epsilon-approximate forging points, label intervals and greedy batch matching."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import models as M
from .errors import (
    DegenerateLabel,
    NegativeDiscriminant,
    PatternInconsistent,
    PoolExhausted,
    ShapeMismatch,
    ZeroCandidate,
    ZeroTargetGradient,
)
from .models import Datum, ModelSpec

EXACT_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ForgeQuery:
    """Forging problem: find data whose parameter gradient is within ``epsilon`` of the target's.

    The search domain is the feature ball ``B(center, radius)``; when
    ``with_label`` is set the label is a free coordinate ranging over
    ``[label_center - label_radius, label_center + label_radius]``, otherwise
    candidates inherit the target's label.
    """

    model: ModelSpec
    params: np.ndarray
    target: Datum
    epsilon: float
    radius: float
    with_label: bool = True
    center: np.ndarray | None = None
    label_center: float = 0.0
    label_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", np.asarray(getattr(self.params, "flat", self.params), dtype=float))
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.with_label and not self.model.supervised and self.model.kind != "quadratic":
            object.__setattr__(self, "with_label", False)
        c = np.zeros(self.model.d) if self.center is None else np.asarray(self.center, dtype=float)
        if c.shape != (self.model.d,):
            raise ShapeMismatch("center", (self.model.d,), c.shape)
        object.__setattr__(self, "center", c)
        if self.label_radius is None:
            object.__setattr__(self, "label_radius", float(self.radius))
        if not np.any(self.target_grad):
            raise ZeroTargetGradient("target gradient is zero; every point trivially forges it")

    @property
    def target_grad(self) -> np.ndarray:
        return M.grad_w(self.model, self.params, self.target)

    @property
    def data_dim(self) -> int:
        return self.model.d + (1 if self.with_label else 0)

    def with_epsilon(self, epsilon: float) -> "ForgeQuery":
        return ForgeQuery(self.model, self.params, self.target, epsilon, self.radius, self.with_label,
                          self.center, self.label_center, self.label_radius)


@dataclass(frozen=True)
class ForgeSolution:
    candidate: Datum
    residual: float
    branch: str
    valid: bool = True
    reason: str = ""


def residuals(query: ForgeQuery, X, y=None) -> np.ndarray:
    """Gradient-match residual for each row of ``X`` (labels ``y`` or the target's)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if y is None or not query.with_label:
        lab = query.target.label
        y = np.full(X.shape[0], 1.0 if lab is None and query.model.kind == "quadratic" else (lab or 0.0))
    G = M.grad_w_batch(query.model, query.params, X, y)
    return np.linalg.norm(G - query.target_grad[None, :], axis=1)


def eps_forge_test(query: ForgeQuery, candidate: Datum) -> tuple[bool, float]:
    g = M.grad_w(query.model, query.params, candidate)
    r = float(np.linalg.norm(g - query.target_grad))
    return r <= query.epsilon, r


def _quadratic_roots(c: float, A: float, t: float):
    """Real roots of ``c a^2 - t a - A = 0`` tagged by branch."""
    if c == 0.0:
        if t == 0.0:
            raise DegenerateLabel("c = x.w = 0 forces a nonzero label t")
        return [(-A / t, "degenerate")]
    disc = t * t + 4.0 * c * A
    if disc < 0:
        raise NegativeDiscriminant(f"t^2 + 4cA = {disc:.3e} < 0: no real forging point for t={t}")
    if disc == 0.0:
        return [(t / (2.0 * c), "double")]
    sq = np.sqrt(disc)
    # stable pairing avoids cancellation in t -/+ sq
    q = 0.5 * (t + np.copysign(sq, t)) if t != 0 else 0.5 * sq
    r1 = q / c
    r2 = -A / q
    hi, lo = (r1, r2) if r1 >= r2 else (r2, r1)
    return [(hi, "+"), (lo, "-")]


def exact_forge_lr(w, x, y: float, t: float) -> list[ForgeSolution]:
    """Points ``(z, t)`` with ``(z.w - t) z = (x.w - y) x`` for a given label ``t``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    c = float(x @ w)
    A = c - y
    target = A * x
    scale = np.linalg.norm(target)
    if scale == 0.0:
        raise ZeroTargetGradient("(x.w - y) x = 0")
    out = []
    for alpha, branch in _quadratic_roots(c, A, t):
        z = alpha * x
        res = float(np.linalg.norm((z @ w - t) * z - target))
        out.append(ForgeSolution(Datum(z, t), res, branch, bool(res <= EXACT_RTOL * scale)))
    return out


def exact_forge_nn(W, v, x, y: float, t: float, activation: str = "relu", slope: float = 0.01) -> list[ForgeSolution]:
    """Candidates ``z = alpha x`` from the scalar reduction, each re-verified on the joint gradient.

    Roots that break the activation pattern assumed by the reduction are
    returned with ``valid=False`` and ``reason='PatternInconsistent'``.
    Raises :class:`PatternInconsistent` only when no root survives.
    """
    W = np.asarray(W, dtype=float)
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    model = M.one_layer(W.shape[0], W.shape[1], activation, slope)
    params = M.pack_onelayer(W, v)
    target = Datum(x, y)
    g_target = M.grad_w(model, params, target)
    nW = W.size
    if not np.any(g_target[:nW]) or not np.any(g_target[nW:]):
        raise ZeroTargetGradient("both the W- and v-blocks of the target gradient must be nonzero")
    c = float(v @ M._act(model, W @ x))
    A = c - y
    scale = np.linalg.norm(g_target)
    out = []
    for alpha, branch in _quadratic_roots(c, A, t):
        cand = Datum(alpha * x, t)
        res = float(np.linalg.norm(M.grad_w(model, params, cand) - g_target))
        ok = bool(res <= EXACT_RTOL * scale)
        reason = ""
        if not ok:
            same = np.array_equal(M.activation_pattern(W, cand.features), M.activation_pattern(W, x))
            reason = "PatternInconsistent" if not same else "JointMismatch"
        out.append(ForgeSolution(cand, res, branch, ok, reason))
    if not any(s.valid for s in out):
        err = PatternInconsistent("no root preserves the activation pattern of the target")
        err.solutions = out
        raise err
    return out


def feasible_label_interval(w, x, y: float, z, epsilon: float) -> tuple[float, float] | None:
    """Closed interval of labels ``t`` with ``||(x.w - y) x - (z.w - t) z|| <= epsilon``, or None."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    zz = float(z @ z)
    if zz == 0.0:
        raise ZeroCandidate("z = 0 has zero gradient for every label")
    a = (x @ w - y) * x
    if not np.any(a):
        raise ZeroTargetGradient("(x.w - y) x = 0")
    az = float(a @ z)
    # ||a||^2 sin^2(theta) * ||z||^2, computed without the angle
    perp2 = max(float(a @ a) * zz - az * az, 0.0)
    disc = epsilon * epsilon * zz - perp2
    if disc < 0:
        return None
    s0 = az / zz
    half = np.sqrt(disc) / zz
    base = float(z @ w)
    return base - s0 - half, base - s0 + half


@dataclass
class GreedyResult:
    batch: list
    residual: float
    success: bool
    passes: int


def _avg_grad(model, params, data) -> np.ndarray:
    X = np.array([dt.features for dt in data])
    y = np.array([M._label(model, dt) for dt in data])
    return M.grad_w_batch(model, params, X, y).mean(axis=0)


def _swap_descent(G, target, chosen, max_passes, allow_pairs):
    B = len(chosen)
    total = G[chosen].sum(axis=0)
    best = float(np.linalg.norm(total - target))
    pair_sums = None
    passes = 0
    while passes < max_passes and best > 0.0:
        passes += 1
        move = None
        for i in range(B):
            cand = total - G[chosen[i]]
            r = np.linalg.norm(cand[None, :] + G - target[None, :], axis=1)
            j = int(np.argmin(r))
            if r[j] < best * (1.0 - 1e-12) and (move is None or r[j] < move[-1]):
                move = ((i,), (j,), float(r[j]))
        if move is None and allow_pairs and B > 1:
            # single swaps stalled: try replacing two slots at once
            if pair_sums is None:
                pair_sums = (G[:, None, :] + G[None, :, :]).reshape(-1, G.shape[1])
            for i, k in itertools.combinations(range(B), 2):
                cand = total - G[chosen[i]] - G[chosen[k]]
                r = np.linalg.norm(cand[None, :] + pair_sums - target[None, :], axis=1)
                jj = int(np.argmin(r))
                if r[jj] < best * (1.0 - 1e-12) and (move is None or r[jj] < move[-1]):
                    move = ((i, k), divmod(jj, G.shape[0]), float(r[jj]))
        if move is None:
            break
        slots, picks, best = move
        for i, j in zip(slots, picks):
            total = total - G[chosen[i]] + G[j]
            chosen[i] = j
    return chosen, best, passes


def greedy_batch_forge(model: ModelSpec, params, original_batch, excluded: Datum, pool, epsilon: float,
                       raise_on_failure: bool = False, starts: int = 32) -> GreedyResult:
    """Pick ``len(original_batch)`` pool points whose mean gradient matches the original batch.

    Each start forces a different first pick, fills the remaining slots
    greedily, then runs best-swap descent (single slots, then slot pairs once
    single swaps stall) for at most ``10 * batch_size`` passes. The best
    start wins; ties keep the earliest, so the result is deterministic.
    Pool entries equal to ``excluded`` are ignored.
    """
    pool = [p for p in pool if not p.same_as(excluded)]
    if not pool:
        raise ValueError("pool is empty once the excluded datum is removed")
    B = len(original_batch)
    target = _avg_grad(model, params, original_batch) * B
    X = np.array([p.features for p in pool])
    y = np.array([M._label(model, p) for p in pool])
    G = M.grad_w_batch(model, params, X, y)

    first = np.argsort(np.linalg.norm(G - target[None, :] / B, axis=1), kind="stable")[:max(1, starts)]
    allow_pairs = len(pool) <= 2000
    best_run = None
    for j0 in first:
        chosen = [int(j0)]
        total = G[j0].copy()
        for k in range(1, B):
            goal = target * (k + 1) / B
            j = int(np.argmin(np.linalg.norm(total[None, :] + G - goal[None, :], axis=1)))
            chosen.append(j)
            total = total + G[j]
        run = _swap_descent(G, target, chosen, 10 * B, allow_pairs)
        if best_run is None or run[1] < best_run[1]:
            best_run = run
        if best_run[1] == 0.0:
            break
    chosen, best, passes = best_run
    residual = best / B
    batch = [pool[j] for j in chosen]
    success = residual <= epsilon
    if raise_on_failure and not success:
        raise PoolExhausted(batch, residual, epsilon)
    return GreedyResult(batch, residual, success, passes)


def exhaustive_batch_forge(model: ModelSpec, params, original_batch, pool) -> tuple[list, float]:
    """Brute-force optimum over all size-B multisets of ``pool``; tiny pools only."""
    B = len(original_batch)
    target = _avg_grad(model, params, original_batch)
    X = np.array([p.features for p in pool])
    y = np.array([M._label(model, p) for p in pool])
    G = M.grad_w_batch(model, params, X, y)
    best, arg = np.inf, None
    for combo in itertools.combinations_with_replacement(range(len(pool)), B):
        r = float(np.linalg.norm(G[list(combo)].mean(axis=0) - target))
        if r < best:
            best, arg = r, combo
    return [pool[j] for j in arg], best
