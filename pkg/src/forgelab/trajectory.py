"""SGD trajectories, forged replays, epsilon-tubes and the deviation certificate."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .errors import HypothesisViolated, NonFiniteIterate, TargetAbsent
from .models import Datum, ModelSpec, ParamState


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Iterates ``w_0..w_N`` (rows), step sizes ``h_0..h_{N-1}`` and the data used at each step.

    A data entry is a single :class:`Datum` or a sequence of them (a batch,
    whose gradients are averaged).
    """

    model: ModelSpec
    iterates: np.ndarray
    steps: np.ndarray
    data_sequence: list

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def states(self) -> list[ParamState]:
        return [ParamState.of(self.model, w) for w in self.iterates]

    def __len__(self):
        return len(self.steps)


def _is_batch(entry) -> bool:
    return not isinstance(entry, Datum)


def step_gradient(model: ModelSpec, w: np.ndarray, entry) -> np.ndarray:
    if not _is_batch(entry):
        return M.grad_w(model, w, entry)
    X = np.array([dt.features for dt in entry])
    y = np.array([M._label(model, dt) for dt in entry])
    return M.grad_w_batch(model, w, X, y).mean(axis=0)


def _steps(steps, N: int) -> np.ndarray:
    h = np.asarray(steps, dtype=float)
    if h.ndim == 0:
        h = np.full(N, float(h))
    if h.shape != (N,):
        raise ValueError(f"need {N} step sizes, got {h.shape}")
    return h


def sgd_run(model: ModelSpec, w0, data_sequence, steps) -> Trajectory:
    """``w_{k+1} = w_k - h_k grad f(w_k; data_k)`` in fixed order."""
    data = list(data_sequence)
    h = _steps(steps, len(data))
    w = np.asarray(getattr(w0, "flat", w0), dtype=float).copy()
    if w.size != model.n_params:
        raise M.ShapeMismatch("w0", model.n_params, w.size)
    out = np.empty((len(data) + 1, w.size))
    out[0] = w
    for k, entry in enumerate(data):
        w = w - h[k] * step_gradient(model, w, entry)
        if not np.all(np.isfinite(w)):
            raise NonFiniteIterate(k + 1)
        out[k + 1] = w
    return Trajectory(model, out, h, data)


def _replace(entry, target: Datum, replacement: Datum):
    if _is_batch(entry):
        items = [replacement if dt.same_as(target) else dt for dt in entry]
        hit = any(dt.same_as(target) for dt in entry)
        return type(entry)(items) if isinstance(entry, tuple) else items, hit
    if entry.same_as(target):
        return replacement, True
    return entry, False


def occurrences(traj: Trajectory, target: Datum) -> list[int]:
    return [k for k, e in enumerate(traj.data_sequence) if _replace(e, target, target)[1]]


def forge_at_occurrences(traj: Trajectory, target: Datum, replacement: Datum) -> Trajectory:
    """Replay ``traj`` with every appearance of ``target`` swapped for ``replacement``."""
    new, found = [], False
    for e in traj.data_sequence:
        e2, hit = _replace(e, target, replacement)
        new.append(e2)
        found |= hit
    if not found:
        raise TargetAbsent("target datum does not occur in the data sequence")
    return sgd_run(traj.model, traj.iterates[0], new, traj.steps)


@dataclass(frozen=True)
class TubeSpec:
    mode: str
    epsilon: float
    reference: Trajectory

    def __post_init__(self):
        if self.mode not in ("discrete", "continuous"):
            raise ValueError("mode must be 'discrete' or 'continuous'")
        if not self.epsilon > 0:
            raise ValueError("tube epsilon must be positive")


def segment_distances(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    a = points[:-1]
    b = points[1:]
    ab = b - a
    den = np.sum(ab * ab, axis=1)
    t = np.where(den > 0, np.sum((p[None, :] - a) * ab, axis=1) / np.where(den > 0, den, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(a + t[:, None] * ab - p[None, :], axis=1)


def tube_distance(tube: TubeSpec, point) -> float:
    p = np.asarray(getattr(point, "flat", point), dtype=float)
    pts = tube.reference.iterates
    if p.shape != pts.shape[1:]:
        raise M.ShapeMismatch("point", pts.shape[1:], p.shape)
    if tube.mode == "discrete" or len(pts) == 1:
        return float(np.min(np.linalg.norm(pts - p[None, :], axis=1)))
    return float(np.min(segment_distances(pts, p)))


def tube_contains(tube: TubeSpec, point) -> bool:
    """Open-ball membership in the discrete or interpolated tube."""
    return tube_distance(tube, point) < tube.epsilon


@dataclass
class DeviationCertificate:
    delta0: float
    deviations: np.ndarray
    contraction_bounds: np.ndarray
    hypothesis_flags: dict = field(default_factory=dict)
    contraction_ok: bool = True
    conclusion_holds: bool | None = None
    trivially_equal: bool = False

    @property
    def violations(self) -> list[str]:
        return [k for k, ok in self.hypothesis_flags.items() if not ok]

    def raise_if_violated(self):
        if self.violations:
            raise HypothesisViolated(", ".join(self.violations))


def certify_deviation(model: ModelSpec, original: Trajectory, forged: Trajectory, mu, L,
                      target: Datum | None = None, replacement: Datum | None = None,
                      tol: float = 1e-12) -> DeviationCertificate:
    """Check the hypotheses and conclusion of the forged-trajectory stability result.

    ``mu`` and ``L`` give strong-convexity and smoothness constants per step
    (scalars broadcast). Replaced steps are found by comparing data entries;
    the first one must be step 0. ``target``/``replacement`` default to the
    step-0 data of the two trajectories. On steps that use original data the
    measured deviation is compared with ``|1 - h_k L_k|`` times the previous
    one; violated hypotheses are flagged rather than raised, and the
    conclusion is only asserted when every flag holds.
    """
    N = len(original.steps)
    if len(forged.steps) != N or not np.array_equal(original.iterates[0], forged.iterates[0]):
        raise ValueError("trajectories must share w0 and length")
    if not np.array_equal(original.steps, forged.steps):
        raise ValueError("trajectories must share step sizes")
    h = original.steps
    mu = _steps(mu, N)
    L = _steps(L, N)
    target = original.data_sequence[0] if target is None else target
    replacement = forged.data_sequence[0] if replacement is None else replacement
    replaced = [k for k in range(N) if not _same_entry(original.data_sequence[k], forged.data_sequence[k])]
    dev = np.linalg.norm(forged.iterates - original.iterates, axis=1)
    w0 = original.iterates[0]
    delta0 = float(np.linalg.norm(step_gradient(model, w0, original.data_sequence[0])
                                  - step_gradient(model, w0, forged.data_sequence[0])))
    bounds = np.full(N + 1, np.nan)
    if not replaced:
        return DeviationCertificate(0.0, dev, bounds, {}, True, None, True)
    if replaced[0] != 0:
        raise ValueError("the first replacement must happen at step 0")

    flags = {
        "step_sizes": bool(np.all(h <= 1.0 / L + tol) and h[0] <= 1.0 + tol),
        "constants": bool(np.all(mu > 0) and np.all(mu <= L)),
    }
    if delta0 > 0:
        tube = TubeSpec("continuous", delta0, original)
        flags["tube"] = all(tube_contains(tube, w) for w in forged.iterates)
    else:
        flags["tube"] = True
    # data-Lipschitz condition at the later replacement steps
    lip = True
    for k in replaced[1:]:
        wk = forged.iterates[k]
        gap = np.linalg.norm(step_gradient(model, wk, original.data_sequence[k])
                             - step_gradient(model, wk, forged.data_sequence[k]))
        lip &= bool(gap <= mu[0] * dev[k] + tol)
    flags["data_lipschitz"] = lip

    ok = True
    rep = set(replaced)
    for k in range(N):
        if k in rep:
            continue
        bounds[k + 1] = abs(1.0 - h[k] * L[k]) * dev[k]
        ok &= bool(dev[k + 1] <= bounds[k + 1] + tol)
    conclusion = bool(dev[-1] < delta0) if all(flags.values()) else None
    return DeviationCertificate(delta0, dev, bounds, flags, ok, conclusion, delta0 == 0.0)


def _same_entry(a, b) -> bool:
    if _is_batch(a) != _is_batch(b):
        return False
    if _is_batch(a):
        return len(a) == len(b) and all(x.same_as(y) for x, y in zip(a, b))
    return a.same_as(b)


def write_csv(traj: Trajectory, path, reference: Trajectory | None = None):
    """Rows ``step, h, w_0..w_{P-1}, deviation``; deviation is blank without a reference."""
    P = traj.iterates.shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "h"] + [f"w_{i}" for i in range(P)] + ["deviation"])
        for k, w in enumerate(traj.iterates):
            h = repr(float(traj.steps[k])) if k < len(traj.steps) else ""
            dev = "" if reference is None else repr(float(np.linalg.norm(w - reference.iterates[k])))
            wr.writerow([k, h] + [repr(float(x)) for x in w] + [dev])


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_csv` for the numeric part: ``(iterates, steps)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    P = len(head) - 3
    its = np.array([[float(x) for x in r[2:2 + P]] for r in body])
    steps = np.array([float(r[1]) for r in body if r[1] != ""])
    return its, steps
