"""Loss families with closed-form parameter gradients and mixed second variations.

Every model is a :class:`ModelSpec`; parameters travel as flat float vectors
(optionally wrapped in :class:`ParamState`) laid out in ``param_shape`` order.
Gradients are vectorised over a batch of data points because the volume and
probability estimators evaluate millions of candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonSmoothPoint, ShapeMismatch

KINDS = ("linear", "onelayer", "bistable", "quadratic", "remark")
ACTIVATIONS = ("relu", "leaky-relu", "tanh")
BISTABLE_GAIN = 5.0
FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A loss family ``f(w; z)``.

    ``n`` is the hidden width for ``onelayer`` and the parameter dimension for
    ``bistable``; it is ignored elsewhere.
    """

    kind: str
    d: int
    n: int = 1
    activation: str = "relu"
    slope: float = 0.01
    center: float = 2.0
    mixing: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be >= 1")
        if self.kind == "onelayer":
            if self.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {self.activation!r}")
            if self.activation == "leaky-relu" and not 0.0 < self.slope < 1.0:
                raise ValueError("leaky-relu slope must lie in (0, 1)")
        if self.kind == "bistable":
            if self.center <= 0:
                raise ValueError("bistable center magnitude must be positive")
            if self.mixing is None:
                # identity when n == d, zero padding / truncation otherwise
                object.__setattr__(self, "mixing", np.eye(self.n, self.d))
            A = np.asarray(self.mixing, dtype=float)
            if A.shape != (self.n, self.d):
                raise ShapeMismatch("mixing", (self.n, self.d), A.shape)
            object.__setattr__(self, "mixing", A)

    @property
    def param_shape(self) -> list[tuple[str, tuple[int, ...]]]:
        if self.kind == "onelayer":
            return [("W", (self.n, self.d)), ("v", (self.n,))]
        if self.kind == "bistable":
            return [("w", (self.n,))]
        return [("w", (self.d,))]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(dims)) for _, dims in self.param_shape)

    @property
    def supervised(self) -> bool:
        return self.kind in ("linear", "onelayer")

    @property
    def relu_family(self) -> bool:
        return self.kind == "onelayer" and self.activation != "tanh"

    def describe(self) -> dict:
        out = {"kind": self.kind, "d": self.d, "n": self.n}
        if self.kind == "onelayer":
            out["activation"] = self.activation
            if self.activation == "leaky-relu":
                out["slope"] = self.slope
        if self.kind == "bistable":
            out["center"] = self.center
        return out


def linear_regression(d: int) -> ModelSpec:
    return ModelSpec("linear", d)


def one_layer(n: int, d: int, activation: str = "relu", slope: float = 0.01) -> ModelSpec:
    return ModelSpec("onelayer", d, n, activation=activation, slope=slope)


def tanh_net(n: int, d: int) -> ModelSpec:
    return ModelSpec("onelayer", d, n, activation="tanh")


def bistable(n: int = 1, d: int = 1, center: float = 2.0, mixing=None) -> ModelSpec:
    return ModelSpec("bistable", d, n, center=center, mixing=mixing)


def quadratic(d: int) -> ModelSpec:
    """``f(w; (c, lam)) = lam/2 * ||w - c||^2``; the label carries the curvature."""
    return ModelSpec("quadratic", d)


def remark_model(d: int) -> ModelSpec:
    """``f(w; x) = ||w||^2 / 4 + exp(-||x||^2) * sum(w)``: far points, equal gradients."""
    return ModelSpec("remark", d)


@dataclass(frozen=True, eq=False)
class Datum:
    features: np.ndarray
    label: float | None = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.features, dtype=float))
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("features must be a finite vector")
        object.__setattr__(self, "features", x)
        if self.label is not None:
            object.__setattr__(self, "label", float(self.label))

    def same_as(self, other: "Datum") -> bool:
        return (
            self.label == other.label
            and self.features.shape == other.features.shape
            and bool(np.all(self.features == other.features))
        )

    def coords(self, with_label: bool) -> np.ndarray:
        if with_label:
            return np.append(self.features, 0.0 if self.label is None else self.label)
        return self.features.copy()


@dataclass(frozen=True, eq=False)
class ParamState:
    flat: np.ndarray
    shape: list = field(default_factory=list)

    @classmethod
    def of(cls, model: ModelSpec, flat) -> "ParamState":
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != model.n_params:
            raise ShapeMismatch("params", model.n_params, flat.size)
        return cls(flat, model.param_shape)


@dataclass(frozen=True, eq=False)
class MixedVariation:
    matrix: np.ndarray
    with_label: bool


def pack_onelayer(W, v) -> np.ndarray:
    return np.concatenate([np.asarray(W, dtype=float).ravel(), np.asarray(v, dtype=float).ravel()])


def unpack_onelayer(model: ModelSpec, flat: np.ndarray):
    k = model.n * model.d
    return flat[:k].reshape(model.n, model.d), flat[k:]


def _flat(model: ModelSpec, params) -> np.ndarray:
    flat = np.asarray(getattr(params, "flat", params), dtype=float).ravel()
    if flat.size != model.n_params:
        raise ShapeMismatch("params", model.n_params, flat.size)
    return flat


def _check_datum(model: ModelSpec, datum: Datum):
    if datum.features.size != model.d:
        raise ShapeMismatch("datum.features", model.d, datum.features.size)
    if model.supervised and datum.label is None:
        raise ShapeMismatch("datum.label", "a real label", None)


def _label(model: ModelSpec, datum: Datum) -> float:
    if datum.label is None:
        return 1.0 if model.kind == "quadratic" else 0.0
    return datum.label


def _act(model: ModelSpec, h):
    if model.activation == "relu":
        return np.maximum(h, 0.0)
    if model.activation == "leaky-relu":
        return np.where(h > 0, h, model.slope * h)
    return np.tanh(h)


def _dact(model: ModelSpec, h):
    # derivative at exactly zero is fixed to 0 for the ReLU family
    if model.activation == "relu":
        return (h > 0).astype(float)
    if model.activation == "leaky-relu":
        return np.where(h > 0, 1.0, np.where(h < 0, model.slope, 0.0))
    return 1.0 - np.tanh(h) ** 2


def _ddact(model: ModelSpec, h):
    if model.activation == "tanh":
        t = np.tanh(h)
        return -2.0 * t * (1.0 - t**2)
    return np.zeros_like(h)


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def loss_batch(model: ModelSpec, params, X, y=None) -> np.ndarray:
    """Loss at every row of ``X`` (shape ``(N, d)``); ``y`` holds labels."""
    w = _flat(model, params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if y is None:
        y = np.full(X.shape[0], 1.0 if model.kind == "quadratic" else 0.0)
    y = np.asarray(y, dtype=float)
    if model.kind == "linear":
        return 0.5 * (X @ w - y) ** 2
    if model.kind == "onelayer":
        W, v = unpack_onelayer(model, w)
        return 0.5 * (_act(model, X @ W.T) @ v - y) ** 2
    if model.kind == "bistable":
        c = model.center
        alpha = _sigmoid(BISTABLE_GAIN * w[0])
        mu = np.zeros(model.n)
        mu[0] = c
        soft = np.logaddexp(0.0, -(X @ model.mixing.T) @ w)
        g1 = np.sum((w - mu) ** 2) + soft
        g2 = np.sum((w + mu) ** 2) + soft
        return alpha * g1 + (1.0 - alpha) * g2
    if model.kind == "quadratic":
        return 0.5 * y * np.sum((w[None, :] - X) ** 2, axis=1)
    return 0.25 * np.dot(w, w) + np.exp(-np.sum(X**2, axis=1)) * np.sum(w)


def grad_w_batch(model: ModelSpec, params, X, y=None) -> np.ndarray:
    """Parameter gradients at every row of ``X``; returns shape ``(N, n_params)``."""
    w = _flat(model, params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    if y is None:
        y = np.full(N, 1.0 if model.kind == "quadratic" else 0.0)
    y = np.asarray(y, dtype=float)
    if model.kind == "linear":
        return (X @ w - y)[:, None] * X
    if model.kind == "onelayer":
        W, v = unpack_onelayer(model, w)
        H = X @ W.T
        act = _act(model, H)
        r = act @ v - y
        gW = (r[:, None] * v[None, :] * _dact(model, H))[:, :, None] * X[:, None, :]
        gv = r[:, None] * act
        return np.concatenate([gW.reshape(N, -1), gv], axis=1)
    if model.kind == "bistable":
        c = model.center
        alpha = _sigmoid(BISTABLE_GAIN * w[0])
        dalpha = BISTABLE_GAIN * alpha * (1.0 - alpha)
        mu = np.zeros(model.n)
        mu[0] = c
        a = X @ model.mixing.T
        base = 2.0 * (w + mu)
        base[0] += -4.0 * c * (alpha + w[0] * dalpha)
        return base[None, :] - _sigmoid(-(a @ w))[:, None] * a
    if model.kind == "quadratic":
        return y[:, None] * (w[None, :] - X)
    return 0.5 * w[None, :] + np.exp(-np.sum(X**2, axis=1))[:, None]


def loss(model: ModelSpec, params, datum: Datum) -> float:
    _check_datum(model, datum)
    return float(loss_batch(model, params, datum.features[None, :], [_label(model, datum)])[0])


def grad_w(model: ModelSpec, params, datum: Datum) -> np.ndarray:
    _check_datum(model, datum)
    return grad_w_batch(model, params, datum.features[None, :], [_label(model, datum)])[0]


def grad_w_fd(model: ModelSpec, params, datum: Datum, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference gradient; per-coordinate step ``step * (1 + |w_i|)``."""
    if step <= 0:
        raise ValueError("step must be positive")
    _check_datum(model, datum)
    w = _flat(model, params).copy()
    out = np.empty_like(w)
    for i in range(w.size):
        h = step * (1.0 + abs(w[i]))
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        out[i] = (loss(model, wp, datum) - loss(model, wm, datum)) / (2.0 * h)
    return out


def _with_coords(datum: Datum, coords: np.ndarray, with_label: bool) -> Datum:
    if with_label:
        return Datum(coords[:-1], coords[-1])
    return Datum(coords, datum.label)


def mixed_second_variation(model: ModelSpec, params, datum: Datum, with_label: bool = False) -> MixedVariation:
    """Closed-form ``d/dz grad_w f`` with columns ordered features then label."""
    _check_datum(model, datum)
    w = _flat(model, params)
    x = datum.features
    y = _label(model, datum)
    d = model.d
    if model.kind == "linear":
        r = x @ w - y
        M = r * np.eye(d) + np.outer(x, w)
        dy = -x
    elif model.kind == "onelayer":
        W, v = unpack_onelayer(model, w)
        h = W @ x
        if model.relu_family and np.any(h == 0.0):
            raise NonSmoothPoint(f"pre-activation exactly zero at units {np.flatnonzero(h == 0.0).tolist()}")
        act = _act(model, h)
        da = _dact(model, h)
        dda = _ddact(model, h)
        r = act @ v - y
        gx = W.T @ (v * da)  # d r / d x
        n = model.n
        # grad_W[i, j] = r v_i a'_i x_j
        MW = (
            (v * da)[:, None, None] * x[None, :, None] * gx[None, None, :]
            + r * (v * dda)[:, None, None] * x[None, :, None] * W[:, None, :]
            + r * (v * da)[:, None, None] * np.eye(d)[None, :, :]
        ).reshape(n * d, d)
        Mv = np.outer(act, gx) + r * da[:, None] * W
        M = np.vstack([MW, Mv])
        dy = np.concatenate([-((v * da)[:, None] * x[None, :]).ravel(), -act])
    elif model.kind == "bistable":
        A = model.mixing
        a = A @ x
        u = a @ w
        s = _sigmoid(-u)
        M = -s * A + s * (1.0 - s) * np.outer(a, A.T @ w)
        dy = np.zeros(model.n)
    elif model.kind == "quadratic":
        M = -y * np.eye(d)
        dy = w - x
    else:
        e = np.exp(-x @ x)
        M = -2.0 * e * np.outer(np.ones(d), x)
        dy = np.zeros(d)
    if with_label:
        M = np.column_stack([M, dy])
    return MixedVariation(np.asarray(M, dtype=float), with_label)


def mixed_second_variation_fd(model: ModelSpec, params, datum: Datum, with_label: bool = False,
                              step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Jacobian of ``grad_w`` with respect to data coordinates."""
    p = datum.coords(with_label)
    cols = []
    for j in range(p.size):
        h = step * (1.0 + abs(p[j]))
        pp, pm = p.copy(), p.copy()
        pp[j] += h
        pm[j] -= h
        gp = grad_w(model, params, _with_coords(datum, pp, with_label))
        gm = grad_w(model, params, _with_coords(datum, pm, with_label))
        cols.append((gp - gm) / (2.0 * h))
    return np.column_stack(cols)


def activation_pattern(W, x) -> np.ndarray:
    """Boolean activity of each hidden unit; a unit is active iff ``w_i . x > 0``."""
    return np.asarray(W, dtype=float) @ np.asarray(x, dtype=float) > 0.0
