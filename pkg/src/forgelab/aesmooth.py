"""Leaky-ReLU kink hyperplanes, the thickened-plane core volume sandwich and the admissible epsilon cap."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.special import gammaln

from .errors import DimensionTooLarge, InvalidThickening
from .measure import ball_volume

MERGE_TOL = 1e-10
ZERO_ROW = 1e-14
KINK_POINTS = 8


@dataclass(frozen=True)
class HyperplaneSet:
    """Planes through the origin, one unit normal per row, with provenance tags.

    A tag is ``('layer0', i)`` or ``('layer1', i, q)`` where ``q`` is the
    0/1 tuple of first-layer units taking the unit slope. ``realized[k]``
    records whether plane ``k`` actually meets the region where its pattern
    holds (layer-0 planes always do). ``kinked[k]``, available when outer
    weights were supplied, records whether the network output actually
    changes slope across plane ``k`` at sampled points of it; a plane of the
    candidate union can be realized yet smooth, e.g. ``rho(w1 rho(h))`` is
    linear in ``h`` when ``w1 < 0``. ``witnesses[k]`` is the point where
    the slope change was confirmed (None if unkinked).
    """

    normals: np.ndarray
    provenance: list
    realized: np.ndarray
    kinked: np.ndarray | None = None
    witnesses: list | None = None

    def __len__(self):
        return self.normals.shape[0]


def _pattern_witness(W0: np.ndarray, q, normal: np.ndarray):
    """A ``z`` with ``normal . z = 0`` and ``sign(W0 z)`` equal to pattern ``q``, or None."""
    s = np.where(np.asarray(q) == 1, 1.0, -1.0)
    d = W0.shape[1]
    # the region is a cone, so strict signs can be scaled to margin 1
    res = linprog(np.zeros(d), A_ub=-(s[:, None] * W0), b_ub=-np.ones(W0.shape[0]),
                  A_eq=normal[None, :], b_eq=[0.0], bounds=[(None, None)] * d, method="highs")
    return res.x if res.status == 0 else None


def nonsmooth_planes(W0, W1, v=None, slope: float = 0.01) -> HyperplaneSet:
    """Candidate kink planes of ``z -> v . rho(W1 rho(W0 z))`` for leaky ReLU ``rho``.

    First-layer planes have normals ``[W0]_i``; for every slope pattern
    ``alpha_q`` in ``{1, slope}^n0`` and row ``i`` of ``W1`` the plane
    ``<[W1]_i, (W0 z) * alpha_q> = 0`` has normal ``W0^T (alpha_q * [W1]_i)``.
    Zero normals are dropped and normals within ``MERGE_TOL`` (up to sign)
    are merged, keeping the first realized tag. Rows of ``W1`` whose outer weight in
    ``v`` is zero produce no kink and are skipped when ``v`` is given.
    """
    if not 0.0 < slope < 1.0:
        raise ValueError("leaky slope must lie in (0, 1)")
    W0 = np.atleast_2d(np.asarray(W0, dtype=float))
    W1 = np.atleast_2d(np.asarray(W1, dtype=float))
    n0, d = W0.shape
    if W1.shape[1] != n0:
        raise ValueError(f"W1 must have {n0} columns, got {W1.shape[1]}")
    v = None if v is None else np.asarray(v, dtype=float)
    cand = [(W0[i], ("layer0", i)) for i in range(n0)]
    for q in itertools.product((1, 0), repeat=n0):
        alpha = np.where(np.array(q) == 1, 1.0, slope)
        for i in range(W1.shape[0]):
            if v is not None and v[i] == 0:
                continue
            cand.append((W0.T @ (alpha * W1[i]), ("layer1", i, q)))
    normals, tags, real = [], [], []
    for vec, tag in cand:
        nrm = np.linalg.norm(vec)
        if nrm <= ZERO_ROW:
            continue
        u = vec / nrm
        ok = True if tag[0] == "layer0" else _pattern_witness(W0, tag[2], u) is not None
        dup = next((k for k, e in enumerate(normals)
                    if min(np.linalg.norm(u - e), np.linalg.norm(u + e)) <= MERGE_TOL), None)
        if dup is not None:
            # a realized duplicate takes over the tag of an unrealized one
            if ok and not real[dup]:
                tags[dup], real[dup] = tag, True
            continue
        normals.append(u)
        tags.append(tag)
        real.append(ok)
    hp = HyperplaneSet(np.array(normals).reshape(-1, d), tags, np.array(real, dtype=bool))
    if v is None:
        return hp
    rng = np.random.default_rng(0)
    kinked, wit = [], []
    for k in range(len(hp)):
        hit = None
        for _ in range(KINK_POINTS if hp.realized[k] else 0):
            z = point_on_plane(W0, hp, k, rng, W1=W1, slope=slope)
            if z is not None and slope_jump(W0, W1, v, z, hp.normals[k], slope) > 1e-9 * _scale(W0, W1, v):
                hit = z
                break
        kinked.append(hit is not None)
        wit.append(hit)
    return HyperplaneSet(hp.normals, hp.provenance, hp.realized, np.array(kinked, dtype=bool), wit)


def _scale(W0, W1, v) -> float:
    return float(np.linalg.norm(v) * np.linalg.norm(W1, 2) * np.linalg.norm(W0, 2)) + 1e-300


def output_slope(W0, W1, v, z, u, slope: float, side: float, delta: float = 1e-9) -> float:
    """Directional derivative along ``u`` of the piecewise-linear network output on one side of ``z``."""
    W0 = np.atleast_2d(np.asarray(W0, dtype=float))
    W1 = np.atleast_2d(np.asarray(W1, dtype=float))
    p = np.asarray(z, dtype=float) + side * delta * max(1.0, float(np.linalg.norm(z))) * u
    h0 = W0 @ p
    d0 = np.where(h0 > 0, 1.0, slope)
    h1 = W1 @ (d0 * h0)
    d1 = np.where(h1 > 0, 1.0, slope)
    return float(np.asarray(v) @ (d1 * (W1 @ (d0 * (W0 @ u)))))


def slope_jump(W0, W1, v, z, u, slope: float = 0.01) -> float:
    u = np.asarray(u, dtype=float) / np.linalg.norm(u)
    return abs(output_slope(W0, W1, v, z, u, slope, 1.0) - output_slope(W0, W1, v, z, u, slope, -1.0))


def plane_count_cap(n0: int, n1: int) -> int:
    return n0 + n1 * 2**n0


def leaky(h, slope):
    return np.where(h > 0, h, slope * h)


def two_layer_loss(W0, W1, v, y: float, Z, slope: float = 0.01) -> np.ndarray:
    """``(v . rho(W1 rho(W0 z)) - y)^2`` for each row of ``Z``."""
    Z = np.atleast_2d(Z)
    H = leaky(leaky(Z @ np.asarray(W0).T, slope) @ np.asarray(W1).T, slope)
    return (H @ np.asarray(v) - y) ** 2


def kink_probe(W0, W1, v, y: float, z, direction, slope: float = 0.01, h: float = 1e-6) -> tuple[float, float]:
    """``(jump, floor)``: gap between one-sided directional derivatives and its smooth-case scale.

    ``floor`` is the change of each one-sided quotient between steps ``h``
    and ``2h`` plus a rounding term; at smooth points the gap is of that
    size, at a kink it stays of order one as ``h`` shrinks.
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    pts = np.array([z - 2 * h * u, z - h * u, z, z + h * u, z + 2 * h * u])
    f = two_layer_loss(W0, W1, v, y, pts, slope)
    fp1, fp2 = (f[3] - f[2]) / h, (f[4] - f[2]) / (2 * h)
    fm1, fm2 = (f[2] - f[1]) / h, (f[2] - f[0]) / (2 * h)
    jump = abs(fp1 - fm1)
    floor = abs(fp1 - fp2) + abs(fm1 - fm2) + 8 * np.finfo(float).eps * (1.0 + abs(f[2])) / h
    return float(jump), float(floor)


def point_on_plane(W0, hp: HyperplaneSet, k: int, rng: np.random.Generator, radius: float = 1.0,
                   W1=None, slope: float = 0.01, margin: float = 1e-3):
    """A random point of plane ``k`` inside ``B_radius`` lying in the plane's pattern region, or None.

    With ``W1`` given, every other pre-activation must exceed ``margin``
    times ``|z|`` in magnitude, so the point sits on one kink only.
    """
    W0 = np.atleast_2d(np.asarray(W0, dtype=float))
    u = hp.normals[k]
    tag = hp.provenance[k]
    base = None
    if tag[0] == "layer1":
        base = _pattern_witness(W0, tag[2], u)
        if base is None:
            return None
        base = base / np.linalg.norm(base)
    for spread in (1.0, 0.3, 0.1, 0.0):
        for _ in range(50):
            z = rng.standard_normal(u.size)
            z -= (z @ u) * u
            if base is not None:
                z = base + spread * z / max(np.linalg.norm(z), 1e-300)
            nz = np.linalg.norm(z)
            if nz == 0:
                continue
            z *= radius * (0.1 + 0.9 * rng.random()) / nz
            z -= (z @ u) * u
            if tag[0] == "layer1" and tuple((W0 @ z > 0).astype(int)) != tuple(tag[2]):
                continue
            if W1 is not None and not _isolated(W0, np.atleast_2d(np.asarray(W1, dtype=float)), z, tag,
                                                slope, margin):
                continue
            return z
    return None


def _isolated(W0, W1, z, tag, slope, margin) -> bool:
    h0 = W0 @ z
    h1 = W1 @ leaky(h0, slope)
    pre = np.concatenate([h0, h1])
    own = tag[1] if tag[0] == "layer0" else W0.shape[0] + tag[1]
    others = np.delete(np.abs(pre), own)
    return bool(np.all(others > margin * np.linalg.norm(z)))


def k1_volume_sandwich(R: float, xi: float, n0: int, n1: int, d: int) -> tuple[float, float]:
    """Lower and upper bounds on the volume of ``B_R`` minus the ``xi``-thickened kink planes.

    With ``P = n0 + n1 2^n0`` planes the lower side is
    ``pi^(d/2)(R^d + (P-1) xi^d)/Gamma(d/2+1) - 2 xi P pi^((d-1)/2) R^(d-1)/Gamma((d+1)/2)``
    and the upper side is ``vol(B_R)``.
    """
    if not 0.0 < xi < R:
        raise InvalidThickening(f"need 0 < xi < R, got xi={xi}, R={R}")
    P = plane_count_cap(n0, n1)
    upper = ball_volume(d, R)
    lower = (math.exp(0.5 * d * math.log(math.pi) - gammaln(d / 2 + 1)) * (R**d + (P - 1) * xi**d)
             - 2 * xi * P * math.exp(0.5 * (d - 1) * math.log(math.pi) - gammaln((d + 1) / 2)) * R ** (d - 1))
    return lower, upper


def k1_grid_volume(normals, R: float, xi: float, cells_per_axis: int, chunk: int = 1 << 21) -> float:
    """Midpoint-rule volume of ``{|z| < R, |n_k . z| >= xi for every plane}``."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    d = normals.shape[1]
    if d > 3 or cells_per_axis**d > 10**9:
        raise DimensionTooLarge("grid volume limited to d <= 3 and 1e9 cells")
    axis = -R + (np.arange(cells_per_axis) + 0.5) * (2 * R / cells_per_axis)
    total = cells_per_axis**d
    count = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        P = np.empty((idx.size, d))
        rem = idx
        for k in range(d - 1, -1, -1):
            rem, q = np.divmod(rem, cells_per_axis)
            P[:, k] = axis[q]
        keep = np.sum(P * P, axis=1) < R * R
        if normals.size:
            keep &= np.all(np.abs(P @ normals.T) >= xi, axis=1)
        count += int(np.count_nonzero(keep))
    return count * (2 * R / cells_per_axis) ** d


def eps_max(xi: float, L: float) -> float:
    """``min(1/(2L), L xi^2 / 2)``."""
    if xi <= 0 or L <= 0:
        raise ValueError("need xi > 0 and L > 0")
    return min(1.0 / (2.0 * L), 0.5 * L * xi * xi)
