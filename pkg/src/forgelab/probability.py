"""Log-Lipschitz data densities, Monte Carlo forging probabilities and anti-concentration bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gammaln

from .errors import EnvelopeTooLoose, InadmissibleRegime, ShapeMismatch
from .forging import ForgeQuery, residuals
from .measure import _tight_ok, ball_volume, binomial_sum, mc_hit_count, sample_ball, smooth_volume_bound
from .models import Datum

MIN_ACCEPTANCE = 1e-4
PILOT = 4096

BOUND_KINDS = ("lr-loose", "lr-tight", "nn-loose", "nn-tight", "smooth", "ae-smooth")


@dataclass(frozen=True, eq=False)
class DensitySpec:
    """Density ``p ~ exp(-g)`` on a compact support.

    ``support='product'``: feature ball ``B(center, R1)`` times label interval
    ``[label_center - R2, label_center + R2]``. ``support='ball'``: the
    feature ball alone. ``potential`` is ``'constant'``, ``'norm'``
    (``g = lam * ||p - c||`` over all coordinates) or ``'grid'`` (piecewise
    linear interpolation of ``grid_values`` on a regular grid over the
    bounding box). Tail parameters ``(C, omega)`` are inputs; the default
    ``C = 0`` states that no mass lies outside the support.
    """

    d: int
    support: str = "product"
    R1: float = 1.0
    R2: float = 1.0
    center: np.ndarray | None = None
    label_center: float = 0.0
    potential: str = "constant"
    lam: float = 0.0
    grid_values: np.ndarray | None = None
    C: float = 0.0
    omega: float = 1.0
    L_g_override: float | None = None

    def __post_init__(self):
        if self.support not in ("product", "ball"):
            raise ValueError("support must be 'product' or 'ball'")
        if self.potential not in ("constant", "norm", "grid"):
            raise ValueError("potential must be 'constant', 'norm' or 'grid'")
        if self.R1 <= 0 or (self.support == "product" and self.R2 <= 0):
            raise ValueError("support radii must be positive")
        if self.lam < 0 or self.C < 0 or self.omega <= 0:
            raise ValueError("need lam >= 0, C >= 0, omega > 0")
        c = np.zeros(self.d) if self.center is None else np.asarray(self.center, dtype=float)
        if c.shape != (self.d,):
            raise ShapeMismatch("center", (self.d,), c.shape)
        object.__setattr__(self, "center", c)
        if self.potential == "grid":
            g = np.asarray(self.grid_values, dtype=float)
            if g.ndim != self.dim or not np.all(np.isfinite(g)) or min(g.shape) < 2:
                raise ValueError(f"grid_values must be a finite {self.dim}-d array with at least 2 nodes per axis")
            object.__setattr__(self, "grid_values", g)

    @property
    def dim(self) -> int:
        return self.d + (1 if self.support == "product" else 0)

    @property
    def full_center(self) -> np.ndarray:
        return np.append(self.center, self.label_center) if self.support == "product" else self.center

    @property
    def volume(self) -> float:
        v = ball_volume(self.d, self.R1)
        return v * 2.0 * self.R2 if self.support == "product" else v

    @property
    def diameter(self) -> float:
        if self.support == "product":
            return 2.0 * math.hypot(self.R1, self.R2)
        return 2.0 * self.R1

    @property
    def inner_radius(self) -> float:
        return min(self.R1, self.R2) if self.support == "product" else self.R1

    def _box(self):
        lo = self.full_center - np.append(np.full(self.d, self.R1), [self.R2] if self.support == "product" else [])
        hi = 2 * self.full_center - lo
        return lo, hi

    def _interp(self):
        lo, hi = self._box()
        axes = [np.linspace(lo[k], hi[k], self.grid_values.shape[k]) for k in range(self.dim)]
        return RegularGridInterpolator(axes, self.grid_values), axes

    def g(self, P: np.ndarray) -> np.ndarray:
        P = np.atleast_2d(P)
        if self.potential == "constant":
            return np.zeros(P.shape[0])
        if self.potential == "norm":
            return self.lam * np.linalg.norm(P - self.full_center[None, :], axis=1)
        f, _ = self._interp()
        return f(P)

    @property
    def g_min(self) -> float:
        if self.potential == "grid":
            return float(self.grid_values.min())
        return 0.0

    @property
    def L_g(self) -> float:
        if self.L_g_override is not None:
            return float(self.L_g_override)
        if self.potential == "constant":
            return 0.0
        if self.potential == "norm":
            return float(self.lam)
        # steepest slope of the piecewise-linear interpolant, bounded axis by axis
        _, axes = self._interp()
        sq = 0.0
        for k in range(self.dim):
            sq += float(np.max(np.abs(np.diff(self.grid_values, axis=k)) / np.diff(axes[k])[0])) ** 2
        return math.sqrt(sq)

    def tail(self, t: float) -> float:
        return self.C * math.exp(-(t**self.omega))

    def draw_uniform(self, rng: np.random.Generator, k: int) -> np.ndarray:
        X = sample_ball(rng, k, self.d, self.R1, self.center)
        if self.support == "product":
            return np.column_stack([X, self.label_center + self.R2 * (2.0 * rng.random(k) - 1.0)])
        return X

    def contains(self, P: np.ndarray) -> np.ndarray:
        P = np.atleast_2d(P)
        ok = np.linalg.norm(P[:, : self.d] - self.center[None, :], axis=1) <= self.R1
        if self.support == "product":
            ok &= np.abs(P[:, self.d] - self.label_center) <= self.R2
        return ok


def rejection_draw(spec: DensitySpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Exactly ``count`` draws from ``spec`` by rejection against the uniform envelope."""
    if spec.potential == "constant":
        return spec.draw_uniform(rng, count)
    out = []
    have = 0
    tried = accepted = 0
    while have < count:
        k = max(PILOT, 2 * (count - have))
        P = spec.draw_uniform(rng, k)
        keep = rng.random(k) < np.exp(-(spec.g(P) - spec.g_min))
        tried += k
        accepted += int(keep.sum())
        if tried >= PILOT and accepted / tried < MIN_ACCEPTANCE:
            raise EnvelopeTooLoose(f"acceptance rate {accepted / tried:.2e} below {MIN_ACCEPTANCE}")
        out.append(P[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:count]


def sample_density_array(spec: DensitySpec, count: int, seed: int) -> np.ndarray:
    return rejection_draw(spec, np.random.default_rng(seed), count)


def sample_density(spec: DensitySpec, count: int, seed: int) -> list[Datum]:
    P = sample_density_array(spec, count, seed)
    if spec.support == "product":
        return [Datum(p[: spec.d], p[spec.d]) for p in P]
    return [Datum(p) for p in P]


@dataclass(frozen=True)
class ProbabilityReport:
    mc_estimate: float
    half_width: float
    trials: int
    bound_value: float | None = None
    bound_kind: str | None = None

    @property
    def dominated(self) -> bool | None:
        if self.bound_value is None:
            return None
        return self.mc_estimate - self.half_width <= self.bound_value


def forge_probability_mc(query: ForgeQuery, spec: DensitySpec, trials: int, seed: int, shards: int = 1,
                         threads: int = 1, bound_value: float | None = None,
                         bound_kind: str | None = None) -> ProbabilityReport:
    """Fraction of density draws landing in the forging set, with a 3-sigma binomial half-width."""
    if trials < 1000:
        raise ValueError("forge_probability_mc needs at least 1000 trials")
    if query.with_label != (spec.support == "product") or spec.d != query.model.d:
        raise ShapeMismatch("density support", "labelled product" if query.with_label else "feature ball",
                            spec.support)
    d = query.model.d

    def member(P):
        if query.with_label:
            return residuals(query, P[:, :d], P[:, d]) <= query.epsilon
        return residuals(query, P) <= query.epsilon

    hits = mc_hit_count(lambda rng, k: rejection_draw(spec, rng, k), member, trials, seed, shards, threads)
    p = hits / trials
    half = 3.0 * math.sqrt(p * (1.0 - p) / trials)
    return ProbabilityReport(p, half, trials, bound_value, bound_kind)


def density_volume_bound(spec: DensitySpec, set_measure: float) -> float:
    """``exp(L_g diam V) / mu(V) * mu(S) + C exp(-(diam V / 2)^omega)``."""
    if set_measure < 0:
        raise ValueError("set measure must be nonnegative")
    V = spec.diameter
    return math.exp(spec.L_g * V) / spec.volume * set_measure + spec.tail(V / 2.0)


def _tight_const(d: int) -> float:
    return 2.0 * d / (math.sqrt(math.pi) * (d - 1) ** 2) * math.exp(gammaln(d / 2) - gammaln((d - 1) / 2))


def prob_bound(kind: str, spec: DensitySpec, eps: float, **kw) -> float:
    """Anti-concentration bound of the requested ``kind`` for data drawn from ``spec``.

    ``lr-loose``/``lr-tight``/``nn-loose``/``nn-tight`` need a product
    support (``R1``, ``R2``) and use ``exp(L_g diam V)`` with the tail at
    ``diam(V)/2``. Tight kinds need ``A`` (``A_min`` for nets) and ``c``;
    net kinds need ``n`` and ``v``. ``smooth`` needs ``L``, ``r_min``,
    ``r_max`` and the tail radius ``t0`` (defaults to the support's inner
    radius); ``ae-smooth`` additionally needs ``nu1``, ``xi`` and
    ``vol_D2`` (defaults to the support volume) and requires
    ``eps < min(1/(2L), L xi^2 / 2)``.
    """
    d = spec.d
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    C_LV = math.exp(spec.L_g * spec.diameter)
    if kind in ("lr-loose", "lr-tight", "nn-loose", "nn-tight"):
        if spec.support != "product":
            raise InadmissibleRegime(f"{kind} needs a feature-ball times label-interval support")
        if d <= 1:
            raise InadmissibleRegime("these bounds need d > 1")
        R1, R2 = spec.R1, spec.R2
        tail = spec.tail(spec.diameter / 2.0)
        factor = 1.0
        if kind.startswith("nn"):
            v = np.asarray(kw["v"], dtype=float)
            nz = np.abs(v[v != 0])
            if nz.size == 0:
                raise InadmissibleRegime("every outer weight is zero")
            patterns = binomial_sum(int(kw["n"]), d)
            vmin = float(nz.min())
        if kind.endswith("loose"):
            if kind.startswith("nn"):
                factor = patterns / vmin
            return C_LV * d / ((d - 1) * R1 * R2) * factor * eps + tail
        A = kw.get("A_min" if kind.startswith("nn") else "A", kw.get("A"))
        c = kw.get("c")
        if A is None or c is None or A <= 0:
            raise InadmissibleRegime("tight bounds need A > 0 and c")
        if eps > 0 and not _tight_ok(eps, A, c):
            raise InadmissibleRegime(f"need c in [1/A, pi/(2A)] and eps/A < sin(c eps); got A={A}, c={c}, eps={eps}")
        if kind.startswith("nn"):
            factor = patterns / vmin**d
        return C_LV * _tight_const(d) / (R1 * R2) * factor * (c * eps) ** d + tail
    if kind in ("smooth", "ae-smooth"):
        L = float(kw["L"])
        if L <= 0:
            raise InadmissibleRegime("L must be positive")
        if eps >= 1.0 / (2.0 * L):
            raise InadmissibleRegime(f"need eps < 1/(2L) = {1.0 / (2.0 * L):.4g}")
        dim = spec.dim
        t0 = kw.get("t0", spec.inner_radius)
        # the cover bound with vol(D2) cancelled against the density normalisation
        core = C_LV * smooth_volume_bound(dim, L, 1.0, eps, int(kw["r_min"]), int(kw["r_max"]))
        value = core + spec.tail(t0)
        if kind == "ae-smooth":
            xi = float(kw["xi"])
            if eps >= min(1.0 / (2.0 * L), 0.5 * L * xi * xi):
                raise InadmissibleRegime("need eps < min(1/(2L), L xi^2 / 2)")
            vol = float(kw.get("vol_D2", spec.volume))
            value += C_LV / vol * float(kw["nu1"])
        return value
    raise ValueError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")
